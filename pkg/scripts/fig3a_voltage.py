"""Concurrence, total S_z and dominant occupation along the bias axis."""

from plot_recipe import line_plot, parser, read_table, run

args = parser(__doc__, 301).parse_args()
out = run("sweep", "reference.toml", args.out / "fig3a_voltage", args.points, args.workers)
t = read_table(out / "sweep.csv")
line_plot(t, "v_over_vc", ["concurrence", "sz", "p_top1"], "V / V_c",
          out / "fig3a_voltage.png", ["C", "S_z", "p (top state)"])
