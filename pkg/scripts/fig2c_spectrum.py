"""Liouvillian eigenvalues in the complex plane at the reference bias."""

import matplotlib.pyplot as plt

from plot_recipe import parser, read_table, run

args = parser(__doc__, 0).parse_args()
out = run("spectrum", "reference.toml", args.out / "fig2c_spectrum")
t = read_table(out / "spectrum.csv")
fig, ax = plt.subplots(figsize=(5, 4))
ax.scatter(t["re_lambda"], t["im_lambda"], s=8)
ax.set_xscale("symlog", linthresh=1e-6)
ax.set_xlabel("Re lambda (kT/hbar)")
ax.set_ylabel("Im lambda (kT/hbar)")
fig.tight_layout()
fig.savefig(out / "fig2c_spectrum.png", dpi=150)
