"""Dot + two-ancilla Hilbert space, system Hamiltonian and its eigenbasis.

Product basis ordering is ``dot ⊗ ancilla`` with the dot occupation in
``(0, up, down, updown)`` and the ancilla pair in ``(uu, ud, du, dd)``::

    index = 4 * dot + ancilla

With an infinite charging energy the doubly occupied dot states are removed
from the basis (12 states instead of 16); they are never represented as a
large finite number.

Units: hbar = k_B = 1, energies in units of k*T_ref, temperatures in kelvin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import constants

INFINITE = math.inf

#: k_B in micro-electronvolt per kelvin.
K_B_UEV = constants.physical_constants["Boltzmann constant in eV/K"][0] * 1e6

#: The exchange term is H_DA = EXCHANGE_FACTOR * J * S_D.(S_1 + S_2) with
#: spin-1/2 operators; this reproduces the one-electron energies
#: eps, eps - 2J, eps + J.
EXCHANGE_FACTOR = 2.0

DOT_LABELS = ("0", "u", "d", "2")
ANCILLA_LABELS = ("uu", "ud", "du", "dd")

#: Degenerate energies are grouped when |dE| < DEGENERACY_RTOL * max(1, |E|).
DEGENERACY_RTOL = 1e-9


class DegeneracyResolutionFailure(RuntimeError):
    """Raised when the spectrum does not split into the expected manifolds."""


def ueV_to_kT(value: float, t_ref: float) -> float:
    """Convert an energy in micro-eV (or a rate hbar*gamma) to units of k*T_ref."""
    return value / (K_B_UEV * t_ref)


def kT_to_ueV(value: float, t_ref: float) -> float:
    return value * K_B_UEV * t_ref


@dataclass(frozen=True)
class ContactSpec:
    """One ferromagnetic lead.

    ``gamma_up``/``gamma_down`` are the tunnelling rates for the two spin
    channels in the contact's own quantization axis, tilted from the dot's z
    axis by ``theta`` and ``phi``.
    """

    label: str
    mu: float = 0.0
    temperature: float = 10.0
    gamma_up: float = 0.0
    gamma_down: float = 0.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.label not in ("L", "R"):
            raise ValueError(f"contact label must be 'L' or 'R', got {self.label!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.gamma_up < 0 or self.gamma_down < 0:
            raise ValueError("gamma_up and gamma_down must be >= 0")
        if self.gamma_up == 0 and self.gamma_down == 0:
            raise ValueError("gamma_up and gamma_down cannot both be zero")
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("theta and phi must be finite")

    @classmethod
    def from_polarization(cls, label: str, gamma: float, polarization: float, **kw):
        """Build from a total rate gamma = gamma_up + gamma_down and p in [-1, 1]."""
        if not -1.0 <= polarization <= 1.0:
            raise ValueError("polarization must lie in [-1, 1]")
        return cls(label, gamma_up=gamma * (1 + polarization) / 2,
                   gamma_down=gamma * (1 - polarization) / 2, **kw)

    @property
    def gamma(self) -> float:
        return self.gamma_up + self.gamma_down

    @property
    def polarization(self) -> float:
        return (self.gamma_up - self.gamma_down) / (self.gamma_up + self.gamma_down)

    def gammas(self) -> tuple[float, float]:
        return self.gamma_up, self.gamma_down


@dataclass(frozen=True)
class DeviceParams:
    """All tunable physics of the device, in units of k*T_ref."""

    epsilon: float
    j_exchange: float
    contacts: tuple[ContactSpec, ContactSpec]
    u_charging: float = INFINITE
    bandwidth_w: float = 1e4
    t_ref: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "contacts", tuple(self.contacts))
        if not self.j_exchange > 0:
            raise ValueError("j_exchange must be > 0")
        if not self.bandwidth_w > 0:
            raise ValueError("bandwidth_w must be > 0")
        if not self.u_charging >= 0:
            raise ValueError("u_charging must be >= 0 or INFINITE")
        if not self.t_ref > 0:
            raise ValueError("t_ref must be > 0")
        if len(self.contacts) != 2 or {c.label for c in self.contacts} != {"L", "R"}:
            raise ValueError("exactly two contacts labelled L and R are required")
        # keep (L, R) order
        if self.contacts[0].label != "L":
            object.__setattr__(self, "contacts", self.contacts[::-1])

    @property
    def infinite_u(self) -> bool:
        return math.isinf(self.u_charging)

    @property
    def left(self) -> ContactSpec:
        return self.contacts[0]

    @property
    def right(self) -> ContactSpec:
        return self.contacts[1]

    def contact(self, label: str) -> ContactSpec:
        return self.left if label == "L" else self.right

    def kT(self, contact: ContactSpec) -> float:
        """Thermal energy of a contact in units of k*T_ref."""
        return contact.temperature / self.t_ref

    def gamma_scale(self) -> float:
        """Rate used to express currents: max over contacts of gamma_up + gamma_down."""
        return max(c.gamma for c in self.contacts)

    def with_contact(self, label: str, **changes) -> "DeviceParams":
        new = replace(self.contact(label), **changes)
        other = self.right if label == "L" else self.left
        return replace(self, contacts=(new, other))


def reference_params(mu_right: float = 30.0, u_charging: float = INFINITE,
                     bandwidth_w: float = 1e4) -> DeviceParams:
    """Device at eps = 45 kT, J = 30 kT, T = 10 K, hbar*gamma = 1 ueV, p_L = -1, p_R = +1."""
    t_ref = 10.0
    gamma = ueV_to_kT(1.0, t_ref)
    left = ContactSpec.from_polarization("L", gamma, -1.0, mu=0.0, temperature=t_ref)
    right = ContactSpec.from_polarization("R", gamma, +1.0, mu=mu_right, temperature=t_ref)
    return DeviceParams(epsilon=45.0, j_exchange=30.0, contacts=(left, right),
                        u_charging=u_charging, bandwidth_w=bandwidth_w, t_ref=t_ref)


# ---------------------------------------------------------------------------
# product basis and operators
# ---------------------------------------------------------------------------

def dot_dim(infinite_u: bool) -> int:
    return 3 if infinite_u else 4


def build_product_basis(infinite_u: bool) -> list[str]:
    """Labels ``'<dot>_<ancilla>'`` of the product basis, e.g. ``'u_dd'``."""
    dots = DOT_LABELS[: dot_dim(infinite_u)]
    return [f"{d}_{a}" for d in dots for a in ANCILLA_LABELS]


def _dot_fock_ops() -> tuple[np.ndarray, np.ndarray]:
    # |updown> = d_up^dag d_down^dag |0>
    d_up = np.zeros((4, 4), dtype=complex)
    d_dn = np.zeros((4, 4), dtype=complex)
    d_up[0, 1] = 1.0
    d_up[2, 3] = 1.0
    d_dn[0, 2] = 1.0
    d_dn[1, 3] = -1.0
    return d_up, d_dn


def _embed_dot(op: np.ndarray, infinite_u: bool) -> np.ndarray:
    n = dot_dim(infinite_u)
    return np.kron(op[:n, :n], np.eye(4))


def dot_operators(infinite_u: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation operators (d_up, d_down) in the product basis.

    For ``infinite_u`` the matrices are projected onto the truncated basis, so
    no element reaches a doubly occupied dot state.
    """
    d_up, d_dn = _dot_fock_ops()
    return _embed_dot(d_up, infinite_u), _embed_dot(d_dn, infinite_u)


def number_operator(infinite_u: bool = False) -> np.ndarray:
    d_up, d_dn = dot_operators(infinite_u)
    return d_up.conj().T @ d_up + d_dn.conj().T @ d_dn


def rotate_to_contact_basis(d_up: np.ndarray, d_down: np.ndarray, theta: float,
                            phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Dot operators seen from a contact whose axis is tilted by (theta, phi).

    Returns ``(C d_up + S d_down, -S* d_up + C* d_down)`` with
    ``C = cos(theta/2) exp(i phi/2)`` and ``S = sin(theta/2) exp(-i phi/2)``.
    """
    c = math.cos(theta / 2) * np.exp(0.5j * phi)
    s = math.sin(theta / 2) * np.exp(-0.5j * phi)
    return c * d_up + s * d_down, -np.conj(s) * d_up + np.conj(c) * d_down


_PAULI_HALF = (
    np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    np.array([[1, 0], [0, -1]], dtype=complex) / 2,
)


@dataclass(frozen=True)
class SpinOperators:
    dot: tuple[np.ndarray, np.ndarray, np.ndarray]
    ancilla1: tuple[np.ndarray, np.ndarray, np.ndarray]
    ancilla2: tuple[np.ndarray, np.ndarray, np.ndarray]

    def total(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.dot[k] + self.ancilla1[k] + self.ancilla2[k] for k in range(3))

    def total_squared(self) -> np.ndarray:
        return sum(s @ s for s in self.total())


def spin_operators(infinite_u: bool = False) -> SpinOperators:
    """Spin-1/2 operators (hbar = 1) of the dot and both ancillae in the product basis."""
    d_up, d_dn = _dot_fock_ops()
    cdag = (d_up.conj().T, d_dn.conj().T)
    c = (d_up, d_dn)
    dot_local = []
    for sigma in _PAULI_HALF:
        op = sum(sigma[a, b] * cdag[a] @ c[b] for a in range(2) for b in range(2))
        dot_local.append(_embed_dot(op, infinite_u))
    nd = dot_dim(infinite_u)
    eye_d, eye2 = np.eye(nd), np.eye(2)
    anc1 = tuple(np.kron(eye_d, np.kron(s, eye2)) for s in _PAULI_HALF)
    anc2 = tuple(np.kron(eye_d, np.kron(eye2, s)) for s in _PAULI_HALF)
    return SpinOperators(tuple(dot_local), anc1, anc2)


def build_hamiltonian(params: DeviceParams) -> np.ndarray:
    """System Hamiltonian (dot + ancillae + exchange) in the product basis."""
    inf_u = params.infinite_u
    d_up, d_dn = dot_operators(inf_u)
    n_up = d_up.conj().T @ d_up
    n_dn = d_dn.conj().T @ d_dn
    h = params.epsilon * (n_up + n_dn)
    if not inf_u:
        h = h + params.u_charging * n_up @ n_dn
    spins = spin_operators(inf_u)
    exch = sum(spins.dot[k] @ (spins.ancilla1[k] + spins.ancilla2[k]) for k in range(3))
    h = h + EXCHANGE_FACTOR * params.j_exchange * exch
    return 0.5 * (h + h.conj().T)


# ---------------------------------------------------------------------------
# labelled eigenbasis
# ---------------------------------------------------------------------------

_S3, _S23 = math.sqrt(1 / 3), math.sqrt(2 / 3)
_R2 = 1 / math.sqrt(2)

# components: (dot, ancilla, amplitude)
_PSI_PLUS = (("ud", _R2), ("du", _R2))
_PSI_MINUS = (("ud", _R2), ("du", -_R2))


def _with(dot, pairs, scale=1.0):
    return tuple((dot, anc, scale * amp) for anc, amp in pairs)


#: label -> (manifold, energy formula, product-basis components)
STATE_TABLE: dict[str, tuple[str, str, tuple]] = {
    "01": ("0", "0", (("0", "uu", 1.0),)),
    "02": ("0", "0", (("0", "ud", 1.0),)),
    "03": ("0", "0", (("0", "du", 1.0),)),
    "04": ("0", "0", (("0", "dd", 1.0),)),
    "a1": ("a", "eps", _with("d", _PSI_MINUS)),
    "a2": ("a", "eps", _with("u", _PSI_MINUS)),
    "b1": ("b", "eps-2J", _with("u", _PSI_PLUS, _S3) + (("d", "uu", -_S23),)),
    "b2": ("b", "eps-2J", _with("d", _PSI_PLUS, _S3) + (("u", "dd", -_S23),)),
    "c1": ("c", "eps+J", (("d", "dd", 1.0),)),
    "c2": ("c", "eps+J", (("u", "uu", 1.0),)),
    "c3": ("c", "eps+J", _with("u", _PSI_PLUS, _S23) + (("d", "uu", _S3),)),
    "c4": ("c", "eps+J", _with("d", _PSI_PLUS, _S23) + (("u", "dd", _S3),)),
    "21": ("2", "2eps+U", (("2", "uu", 1.0),)),
    "22": ("2", "2eps+U", (("2", "ud", 1.0),)),
    "23": ("2", "2eps+U", (("2", "du", 1.0),)),
    "24": ("2", "2eps+U", (("2", "dd", 1.0),)),
}

_DOT_N = {"0": 0, "u": 1, "d": 1, "2": 2}
MANIFOLD_ELECTRONS = {"0": 0, "a": 1, "b": 1, "c": 1, "2": 2}
MANIFOLD_SIZES = {"0": 4, "a": 2, "b": 2, "c": 4, "2": 4}


def table_energy(formula: str, params: DeviceParams) -> float:
    eps, j, u = params.epsilon, params.j_exchange, params.u_charging
    return {"0": 0.0, "eps": eps, "eps-2J": eps - 2 * j, "eps+J": eps + j,
            "2eps+U": 2 * eps + u}[formula]


def table_vector(label: str, infinite_u: bool = False) -> np.ndarray:
    """Labelled state as a product-basis vector."""
    names = build_product_basis(infinite_u)
    vec = np.zeros(len(names), dtype=complex)
    for dot, anc, amp in STATE_TABLE[label][2]:
        vec[names.index(f"{dot}_{anc}")] += amp
    return vec


@dataclass(frozen=True)
class Manifold:
    name: str
    indices: tuple[int, ...]
    energy: float
    n_electrons: int

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class BlockPartition:
    """Degenerate manifolds of the eigenbasis, in labelled-table order."""

    groups: tuple[Manifold, ...]

    def manifold_of(self) -> np.ndarray:
        """Array mapping each state index to its manifold position."""
        n = sum(g.size for g in self.groups)
        out = np.empty(n, dtype=int)
        for k, g in enumerate(self.groups):
            out[list(g.indices)] = k
        return out

    def block_mask(self) -> np.ndarray:
        """Boolean N x N mask of the entries kept by the block structure."""
        m = self.manifold_of()
        return m[:, None] == m[None, :]

    def by_name(self, name: str) -> Manifold:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)


@dataclass(frozen=True)
class EigenBasis:
    """Joint dot-ancilla eigenstates in labelled-table order and gauge.

    ``vectors[:, k]`` is state ``labels[k]`` in the product basis.
    """

    labels: tuple[str, ...]
    energies: np.ndarray
    n_electrons: np.ndarray
    vectors: np.ndarray
    blocks: BlockPartition
    product_labels: tuple[str, ...] = field(default=())

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def infinite_u(self) -> bool:
        return self.dim == 12

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def to_product(self, op: np.ndarray) -> np.ndarray:
        """Eigenbasis matrix -> product-basis matrix."""
        v = self.vectors
        return v @ op @ v.conj().T

    def from_product(self, op: np.ndarray) -> np.ndarray:
        """Product-basis matrix -> eigenbasis matrix."""
        v = self.vectors
        return v.conj().T @ op @ v

    def projector(self, label: str) -> np.ndarray:
        """|q><q| in the eigenbasis."""
        p = np.zeros((self.dim, self.dim), dtype=complex)
        k = self.index(label)
        p[k, k] = 1.0
        return p


def _cluster(values: np.ndarray) -> list[list[int]]:
    order = np.argsort(values)
    groups: list[list[int]] = []
    for i in order:
        if groups:
            ref = values[groups[-1][0]]
            if abs(values[i] - ref) < DEGENERACY_RTOL * max(1.0, abs(ref)):
                groups[-1].append(int(i))
                continue
        groups.append([int(i)])
    return groups


def diagonalize_system(h: np.ndarray) -> EigenBasis:
    """Diagonalize the product-basis Hamiltonian into the labelled eigenbasis.

    Inside each degenerate manifold the eigenvectors are rotated to
    simultaneously diagonalize (total S_z, total S^2) for a singly occupied dot
    and (S_1^z, S_2^z) otherwise, then matched to the labelled states by overlap and given
    their tabulated phase.
    """
    h = np.asarray(h, dtype=complex)
    dim = h.shape[0]
    if dim not in (12, 16):
        raise ValueError(f"expected a 12x12 or 16x16 Hamiltonian, got {h.shape}")
    inf_u = dim == 12
    names = build_product_basis(inf_u)
    spins = spin_operators(inf_u)
    s_tot = spins.total()
    gen_single = s_tot[2] + math.sqrt(2) * spins.total_squared()
    gen_other = spins.ancilla1[2] + math.sqrt(2) * spins.ancilla2[2]

    labels_here = [lab for lab in STATE_TABLE if not (inf_u and lab.startswith("2"))]
    refs = {lab: table_vector(lab, inf_u) for lab in labels_here}
    found: dict[str, tuple[float, np.ndarray]] = {}
    manifold_sizes: list[tuple[str, int]] = []

    for n_el in (0, 1) if inf_u else (0, 1, 2):
        sector = [i for i, nm in enumerate(names) if _DOT_N[nm[0]] == n_el]
        hs = h[np.ix_(sector, sector)]
        w, v = np.linalg.eigh(hs)
        full = np.zeros((dim, len(sector)), dtype=complex)
        full[sector, :] = v
        gen = gen_single if n_el == 1 else gen_other
        for group in _cluster(w):
            basis = full[:, group]
            k_small = basis.conj().T @ gen @ basis
            _, rot = np.linalg.eigh(0.5 * (k_small + k_small.conj().T))
            vecs = basis @ rot
            cluster_labels = []
            for col in vecs.T:
                overlaps = {lab: abs(np.vdot(ref, col)) for lab, ref in refs.items()}
                best = max(overlaps, key=overlaps.get)
                if overlaps[best] < 1 - 1e-6 or best in found:
                    raise DegeneracyResolutionFailure(
                        f"eigenvector in the N={n_el} sector does not match any labelled state")
                phase = np.vdot(refs[best], col)
                col = col * (abs(phase) / phase)
                found[best] = (float(np.real(np.vdot(col, h @ col))), col)
                cluster_labels.append(best)
            mans = {STATE_TABLE[lab][0] for lab in cluster_labels}
            if len(mans) != 1:
                raise DegeneracyResolutionFailure(
                    f"degenerate cluster mixes manifolds {sorted(mans)}")
            manifold_sizes.append((mans.pop(), len(group)))

    expected = {m: s for m, s in MANIFOLD_SIZES.items() if not (inf_u and m == "2")}
    got = dict(manifold_sizes)
    if len(manifold_sizes) != len(expected) or got != expected:
        raise DegeneracyResolutionFailure(
            f"manifold dimensions {sorted(s for _, s in manifold_sizes)} differ from "
            f"{sorted(expected.values())}")

    vectors = np.column_stack([found[lab][1] for lab in labels_here])
    energies = np.array([found[lab][0] for lab in labels_here])
    n_electrons = np.array([MANIFOLD_ELECTRONS[STATE_TABLE[lab][0]] for lab in labels_here])
    groups = []
    for m in expected:
        idx = tuple(i for i, lab in enumerate(labels_here) if STATE_TABLE[lab][0] == m)
        groups.append(Manifold(m, idx, float(np.mean(energies[list(idx)])),
                               MANIFOLD_ELECTRONS[m]))
    return EigenBasis(tuple(labels_here), energies, n_electrons, vectors,
                      BlockPartition(tuple(groups)), tuple(names))


def eigenbasis(params: DeviceParams) -> EigenBasis:
    return diagonalize_system(build_hamiltonian(params))


def ket(dot: str, ancilla: Sequence[complex] | str, infinite_u: bool = False) -> np.ndarray:
    """Product-basis ket ``|dot> ⊗ |ancilla>``; ``ancilla`` is a label or a 4-vector."""
    names = build_product_basis(infinite_u)
    out = np.zeros(len(names), dtype=complex)
    if isinstance(ancilla, str):
        out[names.index(f"{dot}_{ancilla}")] = 1.0
        return out
    for a, amp in zip(ANCILLA_LABELS, ancilla):
        out[names.index(f"{dot}_{a}")] = amp
    return out
