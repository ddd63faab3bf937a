"""Steady-state maps over bias, temperature difference, level energy and exchange."""

from __future__ import annotations

import itertools
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .model import DeviceParams
from .observables import solve

PARAMETERS = ("V_app", "delta_T", "epsilon", "J")

#: CSV column name of each axis parameter
COLUMN_NAMES = {"V_app": "v_over_vc", "delta_T": "delta_t_kelvin",
                "epsilon": "epsilon_over_kt", "J": "j_over_kt"}

DEFAULT_POINTS_1D = 301
DEFAULT_POINTS_2D = 121

SUMMARY_FIELDS = ("concurrence", "current_L", "current_R", "p_top1", "label_top1",
                  "p_top2", "label_top2", "sz", "gap", "multiplicity", "label")


@dataclass(frozen=True)
class Axis:
    """``V_app`` in V_c, ``delta_T`` in kelvin, ``epsilon`` and ``J`` in kT_ref."""

    parameter: str
    start: float
    stop: float
    points: int = DEFAULT_POINTS_1D

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"axis parameter must be one of {PARAMETERS}, got {self.parameter!r}")
        if not self.start < self.stop:
            raise ValueError("axis start must be < stop")
        if self.points < 2:
            raise ValueError("axis needs at least 2 points")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


def apply_axis(params: DeviceParams, parameter: str, value: float) -> DeviceParams:
    """Bias moves mu_R with mu_L fixed; a temperature difference raises T_R."""
    if parameter == "V_app":
        return params.with_contact("R", mu=params.left.mu + value)
    if parameter == "delta_T":
        return params.with_contact("R", temperature=params.left.temperature + value)
    if parameter == "epsilon":
        return replace(params, epsilon=value)
    if parameter == "J":
        return replace(params, j_exchange=value)
    raise ValueError(f"unknown axis parameter {parameter!r}")


def summarize(params: DeviceParams, with_gap: bool = True) -> dict:
    rep, _ = solve(params, with_gap=with_gap)
    (l1, p1), (l2, p2) = rep.top_occupations(2)
    return dict(concurrence=rep.concurrence, current_L=rep.current_L, current_R=rep.current_R,
                p_top1=p1, label_top1=l1, p_top2=p2, label_top2=l2, sz=rep.sz_total,
                gap=rep.spectral_gap, multiplicity=rep.multiplicity, label=rep.label)


def _failed_summary() -> dict:
    out = {k: math.nan for k in SUMMARY_FIELDS}
    out.update(label_top1="", label_top2="", multiplicity=0, label="error")
    return out


def _point(args) -> tuple[dict, str]:
    params, with_gap = args
    try:
        return summarize(params, with_gap), ""
    except (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _failed_summary(), f"{type(exc).__name__}: {exc}"


@dataclass
class SweepGrid:
    axes: tuple[Axis, ...]
    base_params: DeviceParams
    results: dict[str, np.ndarray] = field(default_factory=dict)
    errors: list[tuple[tuple[int, ...], str]] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.axes)

    def coordinates(self) -> list[np.ndarray]:
        return [a.values() for a in self.axes]

    def __getitem__(self, key: str) -> np.ndarray:
        return self.results[key]


def sweep(base: DeviceParams, axes, workers: int = 1, with_gap: bool = True,
          progress: bool = False) -> SweepGrid:
    """Solve every grid point from ``base`` independently.

    Points are enumerated with the last axis fastest; ``map`` keeps results
    in that order whatever the worker count, and no step uses randomness.
    """
    axes = tuple(axes)
    if not 1 <= len(axes) <= 2:
        raise ValueError("sweep takes one or two axes")
    if len({a.parameter for a in axes}) != len(axes):
        raise ValueError("sweep axes must be distinct parameters")
    shape = tuple(a.points for a in axes)
    index = list(itertools.product(*(range(n) for n in shape)))
    coords = [a.values() for a in axes]
    tasks = []
    for ix in index:
        p = base
        for a, i, vals in zip(axes, ix, coords):
            p = apply_axis(p, a.parameter, float(vals[i]))
        tasks.append((p, with_gap))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = _collect(pool.map(_point, tasks, chunksize=max(1, len(tasks) // (8 * workers))),
                               len(tasks), progress)
    else:
        outputs = _collect(map(_point, tasks), len(tasks), progress)

    results = {}
    for key in SUMMARY_FIELDS:
        vals = [o[0][key] for o in outputs]
        dtype = object if key.startswith("label") else (int if key == "multiplicity" else float)
        results[key] = np.array(vals, dtype=dtype).reshape(shape)
    errors = [(ix, msg) for ix, (_, msg) in zip(index, outputs) if msg]
    return SweepGrid(axes, base, results, errors)


def _collect(iterator, total: int, progress: bool) -> list:
    out = []
    for k, item in enumerate(iterator, 1):
        out.append(item)
        if progress:
            print(f"\r{k}/{total}", end="", file=sys.stderr, flush=True)
    if progress:
        print(file=sys.stderr)
    return out


def region_boundaries(base: DeviceParams, start: float = -40.0, stop: float = 110.0,
                      points: int = 151, tol: float = 0.05) -> list[tuple[float, str, str]]:
    """Bias values where the region label changes, refined by bisection."""
    vs = np.linspace(start, stop, points)
    labels = [summarize(apply_axis(base, "V_app", v), with_gap=False)["label"] for v in vs]
    out = []
    for k in range(points - 1):
        if labels[k] == labels[k + 1]:
            continue
        lo, hi = vs[k], vs[k + 1]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            lab = summarize(apply_axis(base, "V_app", mid), with_gap=False)["label"]
            if lab == labels[k]:
                lo = mid
            else:
                hi = mid
        out.append((0.5 * (lo + hi), labels[k], labels[k + 1]))
    return out


def sz_zero_crossing(base: DeviceParams, lo: float = -8.0, hi: float = 8.0,
                     tol: float = 1e-3) -> float:
    """Bias where the total S_z changes sign (the precession-driven b2 -> b1 switch)."""
    def sz(v):
        return summarize(apply_axis(base, "V_app", v), with_gap=False)["sz"]

    s_lo = sz(lo)
    if s_lo * sz(hi) > 0:
        raise ValueError("S_z does not change sign on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sz(mid) * s_lo > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
