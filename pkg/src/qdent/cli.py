"""``simulate`` command line: one subcommand per output table.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import liouville
from .config import ConfigError, InitialState, RunConfig, dump_config, parse_config
from .model import STATE_TABLE, eigenbasis, ket, table_energy
from .observables import (OUTCOMES, PSI_MINUS, PSI_PLUS, build_report, concurrence,
                          fidelity_to_pure, occupation_probabilities, postselect_dot,
                          reduced_ancilla_state, reference_initial_state)
from .sweep import COLUMN_NAMES, sweep
from .transport import jump_operators, total_hamiltonian

COMMANDS = ("spectrum", "steady", "sweep", "evolve", "postselect", "table1")
FLOAT = "%.12e"

SWEEP_COLUMNS = ("concurrence", "current_L", "current_R", "p_top1", "label_top1", "p_top2",
                 "label_top2", "sz", "gap", "multiplicity")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT % float(x)
    return str(x)


def write_table(path: Path, header: list[str], rows, comments: list[str] = ()):
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n" if line else "#\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(x) for x in row) + "\n")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def snapshot(cfg: RunConfig, command: str) -> list[str]:
    lines = [f"simulate {command}", "parameters (energies and rates in kT_ref):"]
    lines += dump_config(cfg).rstrip("\n").split("\n")
    return lines


def initial_state(init: InitialState, basis) -> np.ndarray:
    if init.kind == "reference":
        return reference_initial_state(basis)
    if init.kind == "mixed":
        return np.eye(basis.dim, dtype=complex) / basis.dim
    if init.dot == "2" and basis.infinite_u:
        raise ConfigError("initial.dot: a doubly occupied dot is excluded when u_charging is infinite")
    anc = {"psi_plus": PSI_PLUS, "psi_minus": PSI_MINUS}.get(init.ancilla, init.ancilla)
    v = ket(init.dot, anc, basis.infinite_u)
    return basis.from_product(np.outer(v, v.conj()))


def _assemble(cfg: RunConfig):
    params = cfg.device
    basis = eigenbasis(params)
    jumps = jump_operators(params, basis)
    h = total_hamiltonian(params, basis, jumps)
    return liouville.build_liouvillian(h, jumps, basis)


# ---------------------------------------------------------------------------
# subcommands

def cmd_table1(cfg: RunConfig, out: Path):
    basis = eigenbasis(cfg.device)
    names = list(basis.product_labels)
    header = ["label", "n_electrons", "energy", "formula"]
    header += [f"re_{n}" for n in names] + [f"im_{n}" for n in names]
    rows = []
    for k, lab in enumerate(basis.labels):
        formula = STATE_TABLE[lab][1]
        v = basis.vectors[:, k]
        rows.append([lab, int(basis.n_electrons[k]), float(basis.energies[k]), formula]
                    + [float(x) for x in v.real] + [float(x) for x in v.imag])
    comments = snapshot(cfg, "table1")
    comments.append("closed-form energies: " + ", ".join(
        f"{f}={table_energy(f, cfg.device):.6g}" for f in dict.fromkeys(STATE_TABLE[l][1] for l in basis.labels)))
    write_table(out / "table1.csv", header, rows, comments)


def cmd_spectrum(cfg: RunConfig, out: Path):
    liou = _assemble(cfg)
    rep = liouville.spectrum(liou)
    rows = [[k, float(z.real), float(z.imag)] for k, z in enumerate(rep.eigenvalues)]
    comments = snapshot(cfg, "spectrum")
    comments.append(f"scale max|lambda| = {rep.scale:.12e}; conjugate_paired = {rep.conjugate_paired}")
    write_table(out / "spectrum.csv", ["index", "re_lambda", "im_lambda"], rows, comments)


def _steady(cfg: RunConfig, init: InitialState):
    liou = _assemble(cfg)
    ss = liouville.steady_state(liou, initial_state(init, liou.basis))
    return build_report(ss, liou, cfg.device), liou


def cmd_steady(cfg: RunConfig, out: Path):
    rep, liou = _steady(cfg, cfg.steady.initial)
    lines = [f"# {c}" for c in snapshot(cfg, "steady")]
    kv = [("concurrence", rep.concurrence), ("current_L", rep.current_L),
          ("current_R", rep.current_R), ("sz_total", rep.sz_total),
          ("spectral_gap", rep.spectral_gap), ("multiplicity", rep.multiplicity),
          ("region", rep.label), ("min_eigenvalue", rep.min_eigenvalue),
          ("residual", rep.residual), ("postselect_p_up", rep.postselect.p_up),
          ("postselect_fidelity_psi_plus", rep.postselect.conditional_fidelity_to_bell)]
    kv += [(f"occupation_{lab}", p) for lab, p in rep.occupations.items()]
    lines += [f"{k} = {fmt(v)}" for k, v in kv]
    with open(out / "steady_report.txt", "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    labels = liou.basis.labels
    rows = [[labels[i], labels[j], float(rep.rho_ss[i, j].real), float(rep.rho_ss[i, j].imag)]
            for j in range(len(labels)) for i in range(len(labels))]
    write_table(out / "rho_ss.csv", ["row", "col", "re", "im"], rows,
                snapshot(cfg, "steady") + ["density matrix in the eigenbasis"])


def cmd_sweep(cfg: RunConfig, out: Path):
    if cfg.sweep is None:
        raise ConfigError("sweep: the [sweep] table with axes is required for this command")
    grid = sweep(cfg.device, cfg.sweep.axes, workers=cfg.sweep.workers, progress=True)
    axes = grid.axes
    coords = grid.coordinates()
    header = [COLUMN_NAMES[a.parameter] for a in axes]
    header += list(SWEEP_COLUMNS)
    rows = []
    for ix in np.ndindex(*grid.shape):
        rows.append([float(coords[k][i]) for k, i in enumerate(ix)]
                    + [grid[c][ix] for c in SWEEP_COLUMNS])
    comments = snapshot(cfg, "sweep")
    comments.append("currents in units of e*gamma; gap in units of gamma "
                    "(gamma = max over contacts of gamma_up + gamma_down)")
    for ix, msg in grid.errors:
        comments.append(f"error at {ix}: {msg}")
    write_table(out / "sweep.csv", header, rows, comments)


def cmd_evolve(cfg: RunConfig, out: Path):
    ev = cfg.evolve
    if ev is None:
        raise ConfigError("evolve: the [evolve] table is required for this command")
    liou = _assemble(cfg)
    basis = liou.basis
    rho0 = initial_state(ev.initial, basis)
    if ev.method == "rk4":
        times, states = liouville.trajectory(rho0, liou, ev.t_final, ev.dt, ev.record_every)
    else:
        times = np.linspace(0.0, ev.t_final, ev.samples)
        states = [liouville.evolve(rho0, liou, t, method="exact") for t in times]
    header = ["t"] + [f"p_{lab}" for lab in basis.labels] + ["concurrence", "trace"]
    rows = []
    for t, rho in zip(times, states):
        occ = occupation_probabilities(rho, basis)
        rho_p = basis.to_product(0.5 * (rho + rho.conj().T))
        c = concurrence(reduced_ancilla_state(rho_p) / np.trace(rho_p).real)
        rows.append([float(t)] + [occ[lab] for lab in basis.labels]
                    + [c, float(np.trace(rho).real)])
    write_table(out / "trajectory.csv", header, rows,
                snapshot(cfg, "evolve") + ["time in units of hbar/(k T_ref)"])


def cmd_postselect(cfg: RunConfig, out: Path):
    rep, _ = _steady(cfg, cfg.postselect.initial)
    rows = []
    for outcome in OUTCOMES:
        p, cond = postselect_dot(rep.rho_product, outcome)
        if cond is None:
            rows.append([outcome, p, math.nan, math.nan])
        else:
            rows.append([outcome, p, fidelity_to_pure(cond, PSI_PLUS), concurrence(cond)])
    write_table(out / "postselect.csv",
                ["outcome", "probability", "fidelity_psi_plus", "conditional_concurrence"],
                rows, snapshot(cfg, "postselect") + [f"heralding outcome: {cfg.postselect.outcome}"])


HANDLERS = {"spectrum": cmd_spectrum, "steady": cmd_steady, "sweep": cmd_sweep,
            "evolve": cmd_evolve, "postselect": cmd_postselect, "table1": cmd_table1}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    return ap


def run(command: str, config: Path, out: Path) -> int:
    try:
        cfg = parse_config(config)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, ArithmeticError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
