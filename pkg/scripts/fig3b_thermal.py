"""Concurrence over bias and temperature difference."""

from plot_recipe import map_plot, parser, read_table, run

args = parser(__doc__, 121).parse_args()
out = run("sweep", "thermal_map.toml", args.out / "fig3b_thermal", args.points, args.workers)
t = read_table(out / "sweep.csv")
map_plot(t, "v_over_vc", "delta_t_kelvin", "concurrence", "V / V_c", "delta T (K)", out / "fig3b_thermal.png")
