"""Sequential-tunnelling jump operators and the contact-induced Lamb shift.

All matrices here live in the eigenbasis returned by ``model.eigenbasis``.
Jump operators are resolved by manifold pair: for contact alpha, contact-basis
spin channel s and manifolds M (N electrons) -> M' (N+1 electrons)

    O = P_M' dtilde^dag_{alpha s} P_M,   dE = E_M' - E_M

with particle addition at rate gamma_{alpha s} f_alpha(dE) and removal (O^dag)
at rate gamma_{alpha s} (1 - f_alpha(dE)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, expit

from .model import DeviceParams, EigenBasis, dot_operators, rotate_to_contact_basis

#: amplitudes below this are treated as forbidden (dark) transitions
DARK_TOL = 1e-12

#: pv_integral refuses bandwidths below this many thermal energies
MIN_BANDWIDTH_KT = 20.0

SPIN_CHANNELS = ("up", "down")


class CutoffTooSmall(ValueError):
    """The band cutoff W is too close to the thermal scale or to the pole."""


def fermi(e, mu: float, kt: float):
    """Fermi function 1/(1 + exp((e - mu)/kt)); ``kt`` in energy units."""
    if not kt > 0:
        raise ValueError("kt must be > 0")
    return expit(-(np.asarray(e, dtype=float) - mu) / kt)


@dataclass(frozen=True)
class Transition:
    """Single eigenstate-to-eigenstate particle addition ``from -> to``."""

    from_index: int
    to_index: int
    delta_e: float
    contact: str
    spin_channel: str
    amplitude: complex

    @property
    def dark(self) -> bool:
        return abs(self.amplitude) < DARK_TOL


@dataclass(frozen=True)
class JumpOperator:
    matrix: np.ndarray
    rate_weight: float
    gamma: float
    contact: str
    spin_channel: str
    direction: str  # "in" adds an electron to the dot, "out" removes one
    delta_e: float
    source: str
    target: str


@dataclass(frozen=True)
class JumpOperatorSet:
    operators: tuple[JumpOperator, ...]
    dim: int
    n_dark: int = 0

    def __len__(self) -> int:
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)

    def for_contact(self, label: str) -> tuple[JumpOperator, ...]:
        return tuple(op for op in self.operators if op.contact == label)

    def addition(self) -> tuple[JumpOperator, ...]:
        return tuple(op for op in self.operators if op.direction == "in")


def contact_creation_operators(params: DeviceParams, basis: EigenBasis, label: str):
    """dtilde^dag_{alpha, up/down} in the eigenbasis."""
    c = params.contact(label)
    d_up, d_dn = dot_operators(basis.infinite_u)
    r_up, r_dn = rotate_to_contact_basis(d_up, d_dn, c.theta, c.phi)
    return tuple(basis.from_product(op.conj().T) for op in (r_up, r_dn))


def _manifold_pairs(basis: EigenBasis):
    groups = basis.blocks.groups
    for m in groups:
        for mp in groups:
            if mp.n_electrons == m.n_electrons + 1:
                yield m, mp


def transition_table(basis: EigenBasis, params: DeviceParams,
                     include_dark: bool = False) -> list[Transition]:
    """All |dN| = 1 eigenstate pairs for both contacts and both spin channels.

    Only additions are listed; the reverse removal has the conjugate amplitude.
    Dark pairs are kept only when ``include_dark`` is set.
    """
    out = []
    for label in ("L", "R"):
        for spin, cdag in zip(SPIN_CHANNELS, contact_creation_operators(params, basis, label)):
            for m, mp in _manifold_pairs(basis):
                for i in m.indices:
                    for j in mp.indices:
                        t = Transition(i, j, float(basis.energies[j] - basis.energies[i]),
                                       label, spin, complex(cdag[j, i]))
                        if include_dark or not t.dark:
                            out.append(t)
    return out


def jump_operators(params: DeviceParams, basis: EigenBasis) -> JumpOperatorSet:
    """Manifold-resolved dissipators with Fermi-weighted rates.

    Operators of a zero-rate channel are kept (weight 0) so that the
    operator structure does not depend on the polarization.
    """
    dim = basis.dim
    ops: list[JumpOperator] = []
    n_dark = 0
    for c in params.contacts:
        kt = params.kT(c)
        cdags = contact_creation_operators(params, basis, c.label)
        for spin, gamma, cdag in zip(SPIN_CHANNELS, c.gammas(), cdags):
            for m, mp in _manifold_pairs(basis):
                mat = np.zeros((dim, dim), dtype=complex)
                sub = cdag[np.ix_(mp.indices, m.indices)]
                mat[np.ix_(mp.indices, m.indices)] = sub
                n_dark += int(np.sum(np.abs(sub) < DARK_TOL))
                if np.abs(sub).max() < DARK_TOL:
                    continue
                de = mp.energy - m.energy
                f = float(fermi(de, c.mu, kt))
                common = dict(gamma=gamma, contact=c.label, spin_channel=spin, delta_e=de)
                ops.append(JumpOperator(mat, gamma * f, direction="in",
                                        source=m.name, target=mp.name, **common))
                ops.append(JumpOperator(mat.conj().T, gamma * (1.0 - f), direction="out",
                                        source=mp.name, target=m.name, **common))
    return JumpOperatorSet(tuple(ops), dim, n_dark)


def pv_integral(delta: float, mu: float, kt: float, bandwidth: float) -> float:
    """Principal value of int dE (1 - 2 f(E)) / (delta - E) over a flat band.

    The band is [mu - W, mu + W]. Closed form, exact up to O(exp(-W/kt)):

        2 Re psi(1/2 + i (delta - mu)/(2 pi kt)) - ln|W^2 - (delta - mu)^2| / (2 pi kt)^2
    """
    if not kt > 0:
        raise ValueError("kt must be > 0")
    if bandwidth < MIN_BANDWIDTH_KT * kt:
        raise CutoffTooSmall(
            f"bandwidth {bandwidth:g} is below {MIN_BANDWIDTH_KT:g} kT = {MIN_BANDWIDTH_KT * kt:g}")
    x = delta - mu
    gap = abs(bandwidth - abs(x))
    if gap < 1e-9 * bandwidth:
        raise CutoffTooSmall(f"|delta - mu| = {abs(x):g} sits on the band edge W = {bandwidth:g}")
    scale = 2 * math.pi * kt
    psi = digamma(0.5 + 1j * x / scale)
    return float(2 * psi.real - math.log(abs(bandwidth ** 2 - x ** 2) / scale ** 2))


def lamb_shift(params: DeviceParams, basis: EigenBasis, jumps: JumpOperatorSet) -> np.ndarray:
    """Virtual-tunnelling Hamiltonian, block diagonal over the manifolds.

    H_LS = sum (gamma / 4 pi) p_alpha(dE) (O^dag O + O O^dag) over addition
    operators O, with p_alpha from ``pv_integral``.
    """
    h = np.zeros((basis.dim, basis.dim), dtype=complex)
    for op in jumps.addition():
        if op.gamma == 0:
            continue
        c = params.contact(op.contact)
        p = pv_integral(op.delta_e, c.mu, params.kT(c), params.bandwidth_w)
        o = op.matrix
        h += op.gamma / (4 * math.pi) * p * (o.conj().T @ o + o @ o.conj().T)
    return 0.5 * (h + h.conj().T)


def total_hamiltonian(params: DeviceParams, basis: EigenBasis,
                      jumps: JumpOperatorSet | None = None) -> np.ndarray:
    """diag(E_q) + H_LS in the eigenbasis."""
    if jumps is None:
        jumps = jump_operators(params, basis)
    return np.diag(basis.energies).astype(complex) + lamb_shift(params, basis, jumps)
