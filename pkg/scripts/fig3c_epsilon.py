"""Concurrence over bias and level energy."""

from plot_recipe import map_plot, parser, read_table, run

args = parser(__doc__, 121).parse_args()
out = run("sweep", "epsilon_map.toml", args.out / "fig3c_epsilon", args.points, args.workers)
t = read_table(out / "sweep.csv")
map_plot(t, "v_over_vc", "epsilon_over_kt", "concurrence", "V / V_c", "epsilon / kT", out / "fig3c_epsilon.png")
