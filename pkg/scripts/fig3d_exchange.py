"""Concurrence over bias and exchange coupling."""

from plot_recipe import map_plot, parser, read_table, run

args = parser(__doc__, 121).parse_args()
out = run("sweep", "exchange_map.toml", args.out / "fig3d_exchange", args.points, args.workers)
t = read_table(out / "sweep.csv")
map_plot(t, "v_over_vc", "j_over_kt", "concurrence", "V / V_c", "J / kT", out / "fig3d_exchange.png")
