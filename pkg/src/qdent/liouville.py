"""Liouvillian superoperator, spectrum, steady states and time evolution.

Vectorization stacks columns: ``vec(rho)[i + N j] = rho[i, j]`` and
``vec(A rho B) = (B^T kron A) vec(rho)``. With that convention

    L = -i (I kron H - H^T kron I)
        + sum_k r_k (conj(O_k) kron O_k - 1/2 I kron O_k^dag O_k - 1/2 (O_k^dag O_k)^T kron I)

Density matrices are handled in the eigenbasis of ``model.eigenbasis``.
Because every jump operator maps one manifold onto one manifold, L leaves
two subspaces invariant: the block sector (entries whose row and column lie
in the same manifold) and its complement. Null vectors live in the block
sector, so steady states are extracted there, where the singular values are
not swamped by the much larger Hamiltonian frequencies of the off-block part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import EigenBasis
from .transport import JumpOperatorSet

NULL_RTOL = 1e-10
POSITIVITY_TOL = 1e-8
BASIS_POSITIVITY_TOL = 1e-6
BLOCK_TOL = 1e-9
REFINE_STEPS = 3


class BlockViolation(ValueError):
    """Density matrix has coherences between different manifolds."""


class ConvergenceFailure(RuntimeError):
    pass


class NoSteadyState(RuntimeError):
    pass


class NonPhysicalState(RuntimeError):
    pass


class StepSizeTooLarge(RuntimeError):
    pass


def vectorize(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(vec: np.ndarray, n: int | None = None) -> np.ndarray:
    vec = np.asarray(vec)
    if n is None:
        n = math.isqrt(vec.size)
    if vec.ndim != 1 or n * n != vec.size:
        raise ValueError(f"vector of length {vec.size} is not an {n}x{n} matrix")
    return vec.reshape(n, n, order="F")


def block_sector(basis: EigenBasis) -> np.ndarray:
    """vec positions of entries kept by the block structure."""
    return np.flatnonzero(vectorize(basis.blocks.block_mask()))


def off_block_sector(basis: EigenBasis) -> np.ndarray:
    return np.flatnonzero(~vectorize(basis.blocks.block_mask()))


@dataclass(frozen=True)
class Liouvillian:
    matrix: np.ndarray
    basis: EigenBasis
    h_total: np.ndarray
    jumps: JumpOperatorSet
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def sector(self, name: str = "block") -> tuple[np.ndarray, np.ndarray]:
        idx = block_sector(self.basis) if name == "block" else off_block_sector(self.basis)
        return idx, self.matrix[np.ix_(idx, idx)]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return devectorize(self.matrix @ vectorize(rho), self.dim)


def dissipator_superop(o: np.ndarray) -> np.ndarray:
    n = o.shape[0]
    eye = np.eye(n)
    odo = o.conj().T @ o
    return np.kron(o.conj(), o) - 0.5 * np.kron(eye, odo) - 0.5 * np.kron(odo.T, eye)


def build_liouvillian(h_total: np.ndarray, jumps: JumpOperatorSet, basis: EigenBasis,
                      metadata: dict | None = None) -> Liouvillian:
    n = basis.dim
    h = np.asarray(h_total, dtype=complex)
    if h.shape != (n, n) or jumps.dim != n:
        raise ValueError("Hamiltonian, jump operators and basis dimensions differ")
    eye = np.eye(n)
    mat = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op in jumps:
        if op.rate_weight > 0:
            mat += op.rate_weight * dissipator_superop(op.matrix)
    return Liouvillian(mat, basis, h, jumps, dict(metadata or {}))


def apply_generator_direct(rho: np.ndarray, h_total: np.ndarray, jumps: JumpOperatorSet,
                           basis: EigenBasis) -> np.ndarray:
    """Block-by-block master equation, without any superoperator.

    Each jump contributes ``r g rho_M g^dag`` to the target block and the
    anticommutator loss to the source block, with ``g`` the rectangular
    M -> M' piece of the operator.
    """
    rho = np.asarray(rho, dtype=complex)
    mask = basis.blocks.block_mask()
    off = np.abs(rho[~mask]).max(initial=0.0)
    if off > BLOCK_TOL:
        raise BlockViolation(f"coherence of size {off:.3e} between different manifolds")
    groups = {g.name: list(g.indices) for g in basis.blocks.groups}
    blocks = {name: rho[np.ix_(ix, ix)] for name, ix in groups.items()}
    out = {name: np.zeros_like(b) for name, b in blocks.items()}
    for name, ix in groups.items():
        hb = h_total[np.ix_(ix, ix)]
        out[name] += -1j * (hb @ blocks[name] - blocks[name] @ hb)
    for op in jumps:
        if op.rate_weight == 0:
            continue
        src, dst = groups[op.source], groups[op.target]
        g = op.matrix[np.ix_(dst, src)]
        gdg = g.conj().T @ g
        r = op.rate_weight
        out[op.target] += r * g @ blocks[op.source] @ g.conj().T
        out[op.source] -= 0.5 * r * (gdg @ blocks[op.source] + blocks[op.source] @ gdg)
    drho = np.zeros_like(rho)
    for name, ix in groups.items():
        drho[np.ix_(ix, ix)] = out[name]
    return drho


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    spectral_gap: float
    scale: float
    conjugate_paired: bool
    left_eigenvectors: np.ndarray | None = None


def _gap(eigenvalues: np.ndarray, tol: float) -> float:
    re = eigenvalues.real
    neg = re[re < -tol]
    return float(-neg.max()) if neg.size else math.inf


def spectrum(liou: Liouvillian | np.ndarray, left: bool = False) -> SpectrumReport:
    """Full eigen-decomposition of L, sorted by real part (largest first)."""
    mat = liou.matrix if isinstance(liou, Liouvillian) else np.asarray(liou)
    try:
        if left:
            w, vl, vr = sla.eig(mat, left=True, right=True)
        else:
            w, vr = np.linalg.eig(mat)
            vl = None
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise ConvergenceFailure("non-finite eigenvalues")
    order = np.lexsort((-w.imag, -w.real))
    w, vr = w[order], vr[:, order]
    if vl is not None:
        vl = vl[:, order]
    scale = float(np.abs(w).max()) or 1.0
    paired = _conjugate_paired(w, 1e-8 * scale)
    return SpectrumReport(w, vr, _gap(w, NULL_RTOL * scale), scale, paired, vl)


def _conjugate_paired(w: np.ndarray, tol: float) -> bool:
    a = np.sort_complex(np.round(w / tol) * tol)
    b = np.sort_complex(np.round(w.conj() / tol) * tol)
    if np.allclose(a, b, atol=10 * tol, rtol=0):
        return True
    # rounding can split a cluster; fall back to nearest-partner matching
    used = np.zeros(w.size, dtype=bool)
    for z in w:
        d = np.abs(w - z.conjugate())
        d[used] = np.inf
        k = int(np.argmin(d))
        if d[k] > 10 * tol:
            return False
        used[k] = True
    return True


def block_spectral_gap(liou: Liouvillian) -> float:
    """Slowest nonzero relaxation rate, computed on the block sector."""
    _, lb = liou.sector("block")
    w = np.linalg.eigvals(lb)
    scale = _svd(lb, compute_uv=False)[0]
    return _gap(w, NULL_RTOL * scale)


@dataclass(frozen=True)
class SteadyState:
    rho: np.ndarray
    multiplicity: int
    physical_basis: tuple[np.ndarray, ...]
    residual: float
    min_eigenvalue: float


@dataclass(frozen=True)
class NullSpace:
    sector: np.ndarray
    right: np.ndarray
    left: np.ndarray
    singular_values: np.ndarray

    @property
    def dim(self) -> int:
        return self.right.shape[1]

    def project(self, x0: np.ndarray) -> np.ndarray:
        """Long-time limit of a sector vector: R (Lf^H R)^-1 Lf^H x0."""
        lh = self.left.conj().T
        return self.right @ np.linalg.solve(lh @ self.right, lh @ x0)


def _svd(a: np.ndarray, compute_uv: bool = True):
    # gesdd occasionally fails to converge on these matrices; gesvd is slower
    # but robust
    try:
        return np.linalg.svd(a, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        pass
    try:
        return sla.svd(a, compute_uv=compute_uv, lapack_driver="gesvd")
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc


def null_space(liou: Liouvillian, rtol: float = NULL_RTOL) -> NullSpace:
    idx, lb = liou.sector("block")
    u, s, wh = _svd(lb)
    k = int(np.sum(s < rtol * s[0])) if s[0] > 0 else len(s)
    if k == 0:
        raise NoSteadyState(
            f"smallest singular value {s[-1]:.3e} exceeds {rtol:g} x {s[0]:.3e}")
    right, left = wh[-k:].conj().T, u[:, -k:]
    if k < len(s):
        right, left = _refine_null(lb, right, left, u[:, :-k], s[:-k], wh[:-k].conj().T)
    return NullSpace(idx, right, left, s)


def _refine_null(lb, right, left, u_r, s_r, v_r, iters: int = REFINE_STEPS):
    """Iterative refinement of SVD null vectors.

    The SVD's backward error is ~eps * ||L|| on every entry, which swamps
    exponentially slow (thermally suppressed) rows and leaves ~1e-6 errors
    in the null vectors. Residuals L x are accurate row by row, so a few
    pseudo-inverse correction steps recover the lost digits.
    """
    for _ in range(iters):
        right = right - v_r @ ((u_r.conj().T @ (lb @ right)) / s_r[:, None])
        left = left - u_r @ ((v_r.conj().T @ (lb.conj().T @ left)) / s_r[:, None])
        right, _ = np.linalg.qr(right)
        left, _ = np.linalg.qr(left)
    return right, left


def _embed(liou: Liouvillian, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
    full = np.zeros(liou.dim ** 2, dtype=complex)
    full[idx] = x
    return devectorize(full, liou.dim)


def _physicalize(rho: np.ndarray, tol: float = POSITIVITY_TOL,
                 clip: bool = False) -> tuple[np.ndarray, float]:
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if not abs(tr) > 1e-14:
        raise NonPhysicalState("steady-state candidate has zero trace")
    rho = rho / tr
    w, v = np.linalg.eigh(rho)
    lo = float(w[0])
    if lo < -tol:
        raise NonPhysicalState(f"steady state has eigenvalue {lo:.3e} < {-tol:g}")
    if clip and lo < 0:
        w = np.clip(w, 0.0, None)
        rho = (v * (w / w.sum())) @ v.conj().T
    return rho, lo


def _physical_basis(liou: Liouvillian, ns: NullSpace) -> tuple[np.ndarray, ...]:
    """Positive steady states spanning the null space.

    Eigenprojectors of a generic Hermitian conserved quantity are pushed to
    their long-time limit; any positive initial state stays positive under
    the flow, so the limits are physical.
    """
    k = ns.dim
    if k == 1:
        return (_physicalize(_embed(liou, ns.sector, ns.right[:, 0]))[0],)
    conserved = np.zeros((liou.dim, liou.dim), dtype=complex)
    for i in range(k):
        j = _embed(liou, ns.sector, ns.left[:, i])
        conserved += (j + j.conj().T) / (2 * math.sqrt(2) + i)
    w, v = np.linalg.eigh(conserved)
    candidates = []
    start = 0
    for stop in range(1, len(w) + 1):
        if stop == len(w) or w[stop] - w[start] > 1e-8 * max(1.0, abs(w).max()):
            cols = v[:, start:stop]
            candidates.append(cols @ cols.conj().T / (stop - start))
            start = stop
    candidates += [np.outer(v[:, i], v[:, i].conj()) for i in range(len(w))]
    # first pass keeps limits that are positive up to slow-mode leakage; if a
    # near-null slow mode leaves the span short, the rest are projected onto
    # the PSD cone
    kept: list[np.ndarray] = []
    span = np.zeros((ns.sector.size, 0), dtype=complex)
    limits = [ns.project(vectorize(c)[ns.sector]) for c in candidates]
    for strict in (True, False):
        for x in limits:
            if len(kept) == k:
                break
            if np.linalg.norm(x) < 1e-8:
                continue
            trial = np.column_stack([span, x])
            if np.linalg.matrix_rank(trial, tol=1e-6 * np.linalg.norm(trial)) <= span.shape[1]:
                continue
            tol = BASIS_POSITIVITY_TOL if strict else math.inf
            try:
                rho = _physicalize(_embed(liou, ns.sector, x), tol, True)[0]
            except NonPhysicalState:
                continue
            span = trial
            kept.append(rho)
    return tuple(kept)


def steady_state(liou: Liouvillian, rho0: np.ndarray | None = None) -> SteadyState:
    """Null-space steady state reached from ``rho0`` (default: maximally mixed).

    With a degenerate null space the answer depends on the initial state;
    the returned state is the exact t -> infinity limit from ``rho0``.
    """
    ns = null_space(liou)
    if rho0 is None:
        rho0 = np.eye(liou.dim, dtype=complex) / liou.dim
    x = ns.project(vectorize(np.asarray(rho0, dtype=complex))[ns.sector])
    rho, lo = _physicalize(_embed(liou, ns.sector, x))
    resid = float(np.linalg.norm(liou.matrix @ vectorize(rho)))
    return SteadyState(rho, ns.dim, _physical_basis(liou, ns), resid, lo)


def _sector_propagate(mat: np.ndarray, x0: np.ndarray, t: float) -> np.ndarray:
    if x0.size == 0 or not np.any(x0):
        return np.zeros_like(x0)
    w, v = np.linalg.eig(mat)
    if np.linalg.cond(v) < 1e8:
        scale = np.abs(w).max()
        w = np.where(np.abs(w) < NULL_RTOL * scale, 0.0, w)
        w = np.minimum(w.real, 0.0) + 1j * w.imag
        return v @ (np.exp(w * t) * np.linalg.solve(v, x0))
    return sla.expm(mat * t) @ x0


def evolve(rho0: np.ndarray, liou: Liouvillian, t_final: float, dt: float | None = None,
           method: str = "rk4") -> np.ndarray:
    """Propagate rho0 to ``t_final``.

    ``rk4`` integrates the full vectorized equation with fixed step ``dt``;
    ``exact`` uses the eigen-decomposition of each invariant sector.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    if t_final == 0:
        return rho0.copy()
    if method == "exact":
        x0 = vectorize(rho0)
        out = np.zeros_like(x0)
        # the stationary part is taken from the refined null space; only the
        # decaying remainder goes through the eigen-decomposition
        idx, mat = liou.sector("block")
        try:
            x_inf = null_space(liou).project(x0[idx])
        except NoSteadyState:
            x_inf = np.zeros_like(x0[idx])
        out[idx] = x_inf + _sector_propagate(mat, x0[idx] - x_inf, t_final)
        idx, mat = liou.sector("off")
        out[idx] = _sector_propagate(mat, x0[idx], t_final)
        rho = devectorize(out, liou.dim)
        # conjugate eigenpairs are computed independently; at large t the
        # slow coherences pick up rounding-level phase mismatches
        return 0.5 * (rho + rho.conj().T)
    if method != "rk4":
        raise ValueError(f"unknown method {method!r}")
    times, states = trajectory(rho0, liou, t_final, dt)
    return states[-1]


def trajectory(rho0: np.ndarray, liou: Liouvillian, t_final: float, dt: float | None = None,
               record_every: int = 1) -> tuple[np.ndarray, list[np.ndarray]]:
    """Fixed-step RK4, recording every ``record_every`` steps (and the end)."""
    mat = liou.matrix
    if dt is None:
        dt = 0.1 / np.linalg.norm(mat, 2)
    n_steps = max(1, int(math.ceil(t_final / dt - 1e-12)))
    h = t_final / n_steps
    x = vectorize(np.asarray(rho0, dtype=complex)).copy()
    diag = np.arange(liou.dim) * (liou.dim + 1)
    tr0 = x[diag].sum()
    times, states = [0.0], [devectorize(x.copy(), liou.dim)]
    for step in range(1, n_steps + 1):
        k1 = mat @ x
        k2 = mat @ (x + 0.5 * h * k1)
        k3 = mat @ (x + 0.5 * h * k2)
        k4 = mat @ (x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = abs(x[diag].sum() - tr0)
        if drift > 1e-6 or not np.all(np.isfinite(x)):
            raise StepSizeTooLarge(f"trace drift {drift:.3e} at step {step} with dt={h:.3e}")
        if step % record_every == 0 or step == n_steps:
            times.append(step * h)
            states.append(devectorize(x.copy(), liou.dim))
    return np.array(times), states


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())
