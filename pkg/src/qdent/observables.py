"""Physical read-outs of a steady state.

Two bases are in play. Occupations and currents take density matrices in
the eigenbasis (where the jump operators live); partial traces, spin
expectations and dot measurements take them in the product basis, whose
dimension (12 or 16) fixes the truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import liouville
from .model import DeviceParams, EigenBasis, eigenbasis, ket, spin_operators
from .transport import JumpOperatorSet, jump_operators, total_hamiltonian

_SY2 = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])

PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / math.sqrt(2)
PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)

OUTCOMES = ("up", "down", "empty", "double")
REGION_THRESHOLD = 0.9


def _dot_dim(rho: np.ndarray) -> int:
    n = rho.shape[0]
    if n not in (12, 16):
        raise ValueError(f"expected a 12x12 or 16x16 product-basis matrix, got {rho.shape}")
    return n // 4


def occupation_probabilities(rho: np.ndarray, basis: EigenBasis) -> dict[str, float]:
    p = np.clip(np.real(np.diag(rho)), 0.0, None)
    p = p / p.sum()
    return {lab: float(x) for lab, x in zip(basis.labels, p)}


def reduced_ancilla_state(rho: np.ndarray) -> np.ndarray:
    """Trace out the dot from a product-basis density matrix."""
    nd = _dot_dim(rho)
    return np.einsum("iaib->ab", np.asarray(rho).reshape(nd, 4, nd, 4))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def concurrence(rho_ab: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit state.

    The lambda_i are the singular values of sqrt(rho) sqrt(rho~), which equal
    the square roots of the eigenvalues of rho rho~ but avoid a
    non-Hermitian eigenproblem.
    """
    rho_ab = np.asarray(rho_ab, dtype=complex)
    tilde = _SY2 @ rho_ab.conj() @ _SY2
    lam = np.linalg.svd(_psd_sqrt(rho_ab) @ _psd_sqrt(tilde), compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def current(rho: np.ndarray, jumps: JumpOperatorSet, contact: str, scale: float = 1.0) -> float:
    """Charge current out of contact ``contact`` into the dot, electron charge -1.

    Sums rate * Tr(O rho O^dag) over that contact's jumps (entering minus leaving
    electrons) and divides by ``scale`` to express it in units of e*gamma.
    """
    flux = 0.0
    for op in jumps.for_contact(contact):
        if op.rate_weight == 0:
            continue
        o = op.matrix
        w = op.rate_weight * float(np.real(np.trace(o @ rho @ o.conj().T)))
        flux += w if op.direction == "in" else -w
    return -flux / scale


def total_sz(rho: np.ndarray) -> float:
    sz = spin_operators(_dot_dim(rho) == 3).total()[2]
    return float(np.real(np.trace(sz @ rho)))


def _dot_projector(outcome: str, nd: int) -> np.ndarray:
    k = {"empty": 0, "up": 1, "down": 2, "double": 3}[outcome]
    p = np.zeros((nd, nd))
    if k < nd:
        p[k, k] = 1.0
    return np.kron(p, np.eye(4))


def postselect_dot(rho: np.ndarray, outcome: str) -> tuple[float, np.ndarray | None]:
    """Ideal projective measurement of the dot occupation/spin.

    Returns the outcome probability and the conditional ancilla state, which
    is ``None`` when the probability vanishes.
    """
    if outcome not in OUTCOMES:
        raise ValueError(f"outcome must be one of {OUTCOMES}")
    nd = _dot_dim(rho)
    p = _dot_projector(outcome, nd)
    prob = float(np.real(np.trace(p @ rho)))
    if prob < 1e-14:
        return max(prob, 0.0), None
    return prob, reduced_ancilla_state(p @ rho @ p) / prob


def fidelity_to_pure(rho: np.ndarray, psi: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, rho @ psi)))


@dataclass(frozen=True)
class PostSelection:
    probabilities: dict[str, float]
    conditional_ancilla: np.ndarray | None
    conditional_fidelity_to_bell: float

    @property
    def p_up(self) -> float:
        return self.probabilities["up"]


def postselection_summary(rho_product: np.ndarray, outcome: str = "up") -> PostSelection:
    probs, cond = {}, None
    for out in OUTCOMES:
        p, c = postselect_dot(rho_product, out)
        probs[out] = p
        if out == outcome:
            cond = c
    fid = fidelity_to_pure(cond, PSI_PLUS) if cond is not None else 0.0
    return PostSelection(probs, cond, fid)


def reference_initial_state(basis: EigenBasis) -> np.ndarray:
    """Empty dot with the ancillae uniformly mixed over the triplet (eigenbasis).

    The ancilla pair's total spin is conserved by the dynamics, so the
    singlet weight of the initial state is never lost; starting in the
    triplet sector selects the branch that carries the entangling physics.
    """
    inf_u = basis.infinite_u
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    singlet = ket("0", PSI_MINUS, inf_u)
    for anc in ("uu", "ud", "du", "dd"):
        v = ket("0", anc, inf_u)
        rho += np.outer(v, v)
    rho -= np.outer(singlet, singlet.conj())
    return basis.from_product(rho / 3)


def region_label(occupations: dict[str, float], threshold: float = REGION_THRESHOLD) -> str:
    """Dominant-occupation label of a steady state."""
    b1, b2 = occupations.get("b1", 0.0), occupations.get("b2", 0.0)
    if b1 > threshold:
        return "b1"
    if b2 > threshold:
        return "b2"
    if b1 + b2 > threshold:
        return "mixed"
    if max(occupations.get("01", 0.0), occupations.get("04", 0.0)) > threshold:
        return "empty_polarized"
    if max(occupations.get("c1", 0.0), occupations.get("c2", 0.0)) > threshold:
        return "occupied_polarized"
    return "other"


@dataclass(frozen=True)
class SteadyStateReport:
    rho_ss: np.ndarray  # eigenbasis
    rho_product: np.ndarray
    occupations: dict[str, float]
    concurrence: float
    current_L: float
    current_R: float
    sz_total: float
    spectral_gap: float
    multiplicity: int
    postselect: PostSelection
    label: str
    min_eigenvalue: float
    residual: float

    def top_occupations(self, k: int = 2) -> list[tuple[str, float]]:
        items = sorted(self.occupations.items(), key=lambda kv: (-kv[1], kv[0]))
        return items[:k]


def solve(params: DeviceParams, rho0: np.ndarray | str | None = "reference",
          with_gap: bool = True) -> tuple[SteadyStateReport, liouville.Liouvillian]:
    """Assemble L for ``params`` and evaluate all steady-state observables.

    ``rho0`` picks the branch of a degenerate null space: ``"reference"``
    (see ``reference_initial_state``), ``None`` for the maximally mixed
    state, or an explicit eigenbasis density matrix.
    """
    basis = eigenbasis(params)
    jumps = jump_operators(params, basis)
    h = total_hamiltonian(params, basis, jumps)
    liou = liouville.build_liouvillian(h, jumps, basis)
    if isinstance(rho0, str):
        if rho0 != "reference":
            raise ValueError(f"unknown initial state {rho0!r}")
        rho0 = reference_initial_state(basis)
    ss = liouville.steady_state(liou, rho0)
    return build_report(ss, liou, params, with_gap=with_gap), liou


def build_report(ss: liouville.SteadyState, liou: liouville.Liouvillian, params: DeviceParams,
                 with_gap: bool = True) -> SteadyStateReport:
    basis, jumps = liou.basis, liou.jumps
    rho = ss.rho
    rho_p = basis.to_product(rho)
    occ = occupation_probabilities(rho, basis)
    scale = params.gamma_scale()
    gap = liouville.block_spectral_gap(liou) if with_gap else math.nan
    return SteadyStateReport(
        rho_ss=rho,
        rho_product=rho_p,
        occupations=occ,
        concurrence=concurrence(reduced_ancilla_state(rho_p)),
        current_L=current(rho, jumps, "L", scale),
        current_R=current(rho, jumps, "R", scale),
        sz_total=total_sz(rho_p),
        spectral_gap=gap / scale,
        multiplicity=ss.multiplicity,
        postselect=postselection_summary(rho_p),
        label=region_label(occ),
        min_eigenvalue=ss.min_eigenvalue,
        residual=ss.residual,
    )
