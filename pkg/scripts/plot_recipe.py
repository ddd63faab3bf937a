"""Shared helpers for the figure scripts: run a CLI command and plot its CSV."""

from __future__ import annotations

import argparse
import csv
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import tomli  # noqa: E402
import tomli_w  # noqa: E402

from qdent.cli import main as simulate  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


def parser(doc: str, default_points: int) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--out", type=Path, default=ROOT / "figures")
    ap.add_argument("--points", type=int, default=default_points,
                    help="grid points per sweep axis")
    ap.add_argument("--workers", type=int, default=1)
    return ap


def run(command: str, config: str, out: Path, points: int | None = None,
        workers: int = 1) -> Path:
    """Run ``simulate`` on a copy of ``configs/<config>`` with the grid resized."""
    raw = tomli.loads((CONFIGS / config).read_text())
    if "sweep" in raw:
        raw["sweep"]["workers"] = workers
        if points:
            for ax in raw["sweep"]["axes"]:
                ax["points"] = points
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("wb", suffix=".toml", delete=False) as fh:
        fh.write(tomli_w.dumps(raw).encode())
    code = simulate([command, "--config", fh.name, "--out", str(out)])
    Path(fh.name).unlink()
    if code:
        raise SystemExit(code)
    return out


def read_table(path: Path) -> dict[str, np.ndarray]:
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    out = {}
    for key in rows[0]:
        vals = [r[key] for r in rows]
        try:
            out[key] = np.array(vals, dtype=float)
        except ValueError:
            out[key] = np.array(vals)
    return out


def as_grid(table: dict, x: str, y: str, z: str):
    xs, ys = np.unique(table[x]), np.unique(table[y])
    # the sweep writes the last axis fastest
    return xs, ys, table[z].reshape(xs.size, ys.size).T


def line_plot(table, x, ys, xlabel, path: Path, ylabels=None):
    fig, axes = plt.subplots(len(ys), 1, sharex=True, figsize=(6, 2.2 * len(ys)))
    for ax, y, lab in zip(np.atleast_1d(axes), ys, ylabels or ys):
        ax.plot(table[x], table[y], lw=1.2)
        ax.set_ylabel(lab)
    np.atleast_1d(axes)[-1].set_xlabel(xlabel)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def map_plot(table, x, y, z, xlabel, ylabel, path: Path, level=0.3):
    xs, ys, zz = as_grid(table, x, y, z)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(xs, ys, zz, shading="auto", vmin=0, vmax=1 / 3, cmap="viridis")
    if np.nanmax(zz) > level:
        ax.contour(xs, ys, zz, levels=[level], colors="w", linestyles="--", linewidths=1)
    fig.colorbar(mesh, ax=ax, label="concurrence")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
