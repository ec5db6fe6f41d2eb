"""Multipartite pure states, density operators and classical distributions.

Basis convention: tensor indices are flattened row-major with party 1 the
slowest index. Every matrix, file and measurement in the package uses it.
Party indices are zero-based in code (party 1 of the math is index 0).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-8
HERM_TOL = 1e-10
PSD_TOL = 1e-10
DIST_TOL = 1e-10
PURIFICATION_TOL = 1e-8
MAX_TOTAL_DIM = 4096


class InvariantError(ValueError):
    """Raised when a state or distribution violates a type invariant."""


def _check_dims(dims: Iterable[int], max_dim: int | None) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if len(dims) < 1:
        raise InvariantError("at least one party is required")
    if any(d < 1 for d in dims):
        raise InvariantError(f"local dimensions must be positive, got {dims}")
    total = math.prod(dims)
    if max_dim is not None and total > max_dim:
        raise InvariantError(f"total dimension {total} exceeds cap {max_dim}")
    return dims


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class PureState:
    """Unit vector over ``k`` local registers, stored as a ``d_1 x ... x d_k`` tensor.

    Norm deviations up to ``NORM_TOL`` are renormalized and flagged in
    :attr:`renormalized`; larger deviations raise :class:`InvariantError`.
    """

    def __init__(self, dims: Sequence[int], amplitudes, *, max_dim: int | None = MAX_TOTAL_DIM):
        dims = _check_dims(dims, max_dim)
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.size != math.prod(dims):
            raise InvariantError(
                f"amplitude count {amps.size} does not match dims {dims}")
        amps = amps.reshape(dims)
        norm_sq = float(np.vdot(amps, amps).real)
        self.renormalized = False
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise InvariantError(f"state norm^2 = {norm_sq!r} is not 1 within {NORM_TOL}")
        # round-off level deviations are left alone so that reloading a saved state is bit-exact
        if abs(norm_sq - 1.0) > 1e-14:
            amps = amps / math.sqrt(norm_sq)
            self.renormalized = True
            warnings.warn("pure state renormalized", stacklevel=2)
        self.dims = dims
        self.amplitudes = _frozen(amps)

    @property
    def k(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def density(self) -> "DensityOperator":
        v = self.vector
        return DensityOperator(self.dims, np.outer(v, v.conj()))

    def __repr__(self) -> str:
        return f"PureState(dims={list(self.dims)})"

    @classmethod
    def from_vector(cls, dims: Sequence[int], vector, normalize: bool = False) -> "PureState":
        v = np.asarray(vector, dtype=complex)
        if normalize:
            v = v / np.linalg.norm(v)
        return cls(dims, v)

    @classmethod
    def basis(cls, dims: Sequence[int], index: Sequence[int]) -> "PureState":
        a = np.zeros(tuple(dims), dtype=complex)
        a[tuple(index)] = 1.0
        return cls(dims, a)


class DensityOperator:
    """Hermitian, PSD, unit-trace operator over local dimensions ``dims``.

    The matrix is re-Hermitized on construction and eigenvalues in
    ``[-PSD_TOL, 0)`` are clipped to zero.
    """

    def __init__(self, dims: Sequence[int], matrix, *, max_dim: int | None = MAX_TOTAL_DIM):
        dims = _check_dims(dims, max_dim)
        D = math.prod(dims)
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (D, D):
            raise InvariantError(f"matrix shape {m.shape} does not match dims {dims}")
        dev = float(np.max(np.abs(m - m.conj().T))) if D else 0.0
        if dev > HERM_TOL:
            raise InvariantError(f"matrix is not Hermitian (max deviation {dev:.3e})")
        m = (m + m.conj().T) / 2
        w, v = np.linalg.eigh(m)
        if w[0] < -PSD_TOL:
            raise InvariantError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
        if w[0] < 0:
            w = np.clip(w, 0.0, None)
            m = (v * w) @ v.conj().T
            m = (m + m.conj().T) / 2
        tr = float(np.trace(m).real)
        self.renormalized = False
        if abs(tr - 1.0) > NORM_TOL:
            raise InvariantError(f"trace {tr!r} is not 1 within {NORM_TOL}")
        if abs(tr - 1.0) > 1e-14:
            m = m / tr
            self.renormalized = True
            warnings.warn("density operator renormalized", stacklevel=2)
        self.dims = dims
        self.matrix = _frozen(m)

    @property
    def k(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)[::-1]

    def rank(self, rel_tol: float = 1e-10) -> int:
        w = self.eigenvalues()
        return int(np.sum(w > rel_tol * w[0]))

    def is_diagonal(self, tol: float = HERM_TOL) -> bool:
        off = self.matrix - np.diag(np.diag(self.matrix))
        return bool(np.max(np.abs(off)) <= tol) if self.dim > 1 else True

    def __repr__(self) -> str:
        return f"DensityOperator(dims={list(self.dims)})"


class ClassicalDistribution:
    """Nonnegative tensor of shape ``|X_1| x ... x |X_k|`` summing to one."""

    def __init__(self, dims: Sequence[int], probs, *, max_dim: int | None = MAX_TOTAL_DIM):
        dims = _check_dims(dims, max_dim)
        p = np.asarray(probs, dtype=float)
        if p.size != math.prod(dims):
            raise InvariantError(f"probability count {p.size} does not match dims {dims}")
        p = p.reshape(dims)
        if np.any(p < 0):
            raise InvariantError(f"negative probability {float(p.min())!r}")
        s = float(p.sum())
        if abs(s - 1.0) > DIST_TOL:
            raise InvariantError(f"probabilities sum to {s!r}, not 1 within {DIST_TOL}")
        self.dims = dims
        self.probs = _frozen(p)

    @property
    def k(self) -> int:
        return len(self.dims)

    def __repr__(self) -> str:
        return f"ClassicalDistribution(dims={list(self.dims)})"


@dataclass(frozen=True)
class PartySplit:
    """Bipartition of the party indices ``0..k-1`` into two nonempty sides."""

    left: tuple[int, ...]
    right: tuple[int, ...]

    def __post_init__(self):
        left, right = tuple(sorted(self.left)), tuple(sorted(self.right))
        if not left or not right:
            raise InvariantError("both sides of a split must be nonempty")
        if set(left) & set(right):
            raise InvariantError("split sides overlap")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def of(cls, k: int, left: Iterable[int]) -> "PartySplit":
        left = tuple(sorted(set(left)))
        if any(i < 0 or i >= k for i in left):
            raise InvariantError(f"party index out of range for k={k}: {left}")
        right = tuple(i for i in range(k) if i not in left)
        return cls(left, right)

    def check(self, k: int) -> None:
        if sorted(self.left + self.right) != list(range(k)):
            raise InvariantError(f"split {self} does not cover parties 0..{k - 1}")


def tensor_product(a: PureState, b: PureState) -> PureState:
    amps = np.multiply.outer(a.amplitudes, b.amplitudes)
    return PureState(a.dims + b.dims, amps)


def _partial_trace_matrix(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every party not in ``keep``; ``keep`` order is preserved."""
    k = len(dims)
    keep = list(keep)
    drop = [i for i in range(k) if i not in keep]
    t = matrix.reshape(tuple(dims) * 2)
    # bring to (keep, drop, keep', drop') then contract drop with drop'
    perm = keep + drop + [k + i for i in keep] + [k + i for i in drop]
    t = t.transpose(perm)
    dk = math.prod(dims[i] for i in keep)
    dd = math.prod(dims[i] for i in drop)
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def partial_trace(rho: DensityOperator, discard: Iterable[int]) -> DensityOperator:
    discard = set(discard)
    if any(i < 0 or i >= rho.k for i in discard):
        raise InvariantError(f"party index out of range: {sorted(discard)}")
    keep = [i for i in range(rho.k) if i not in discard]
    if not keep:
        raise InvariantError("empty remainder")
    m = _partial_trace_matrix(rho.matrix, rho.dims, keep)
    return DensityOperator([rho.dims[i] for i in keep], m)


def reduced_density(psi: PureState, keep: Iterable[int]) -> DensityOperator:
    """Marginal of a pure state on the parties in ``keep`` (sorted)."""
    keep = sorted(set(keep))
    if not keep:
        raise InvariantError("empty remainder")
    drop = [i for i in range(psi.k) if i not in keep]
    M = psi.amplitudes.transpose(keep + drop).reshape(
        math.prod(psi.dims[i] for i in keep), -1)
    return DensityOperator([psi.dims[i] for i in keep], M @ M.conj().T)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Uhlmann fidelity ``tr sqrt(sigma^1/2 rho sigma^1/2)``, clipped to [0, 1].

    Evaluated as the nuclear norm of ``sqrt(rho) sqrt(sigma)``, which is the
    same quantity and symmetric in its arguments.
    """
    if rho.dim != sigma.dim:
        raise InvariantError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    s = np.linalg.svd(_psd_sqrt(rho.matrix) @ _psd_sqrt(sigma.matrix), compute_uv=False)
    return float(np.clip(s.sum(), 0.0, 1.0))


def pure_fidelity(psi: PureState, phi: PureState) -> float:
    if psi.dim != phi.dim:
        raise InvariantError(f"dimension mismatch: {psi.dim} vs {phi.dim}")
    return float(min(1.0, abs(np.vdot(psi.vector, phi.vector))))


def classical_fidelity(p: ClassicalDistribution, q: ClassicalDistribution) -> float:
    if p.dims != q.dims:
        raise InvariantError(f"dims mismatch: {p.dims} vs {q.dims}")
    return float(np.clip(np.sum(np.sqrt(p.probs * q.probs)), 0.0, 1.0))


def embed_classical(p: ClassicalDistribution) -> DensityOperator:
    return DensityOperator(p.dims, np.diag(p.probs.reshape(-1).astype(complex)))


def is_purification(psi: PureState, rho: DensityOperator, kept: Iterable[int]) -> tuple[bool, float]:
    """Check that tracing ``psi`` down to the registers ``kept`` gives ``rho``.

    Returns ``(ok, residual)`` where residual is the max entrywise deviation.
    """
    kept = sorted(set(kept))
    if any(i < 0 or i >= psi.k for i in kept):
        raise InvariantError(f"kept registers out of range: {kept}")
    if [psi.dims[i] for i in kept] != list(rho.dims):
        raise InvariantError(
            f"kept dims {[psi.dims[i] for i in kept]} do not match {list(rho.dims)}")
    red = reduced_density(psi, kept)
    residual = float(np.max(np.abs(red.matrix - rho.matrix)))
    return residual <= PURIFICATION_TOL, residual


def split_ancillas(psi: PureState, system_dims: Sequence[int]) -> PureState:
    """View a ``k``-party state with local dims ``d_i * a_i`` as ``2k`` registers.

    Party ``i``'s register is read as (system ``d_i``, ancilla ``a_i``) with
    the system index slower, giving registers ``[d_1, a_1, ..., d_k, a_k]``.
    """
    if len(system_dims) != psi.k:
        raise InvariantError(
            f"{len(system_dims)} system dims given for a {psi.k}-party state")
    dims = []
    for D, d in zip(psi.dims, system_dims):
        if D % d:
            raise InvariantError(f"local dim {D} is not a multiple of system dim {d}")
        dims += [d, D // d]
    return PureState(dims, psi.amplitudes.reshape(dims))


def group_registers(psi: PureState, groups: Sequence[Sequence[int]]) -> PureState:
    """Merge registers into parties; ``groups[i]`` lists party ``i``'s registers in order."""
    order = [r for g in groups for r in g]
    if sorted(order) != list(range(psi.k)):
        raise InvariantError("groups must partition the registers")
    dims = [math.prod(psi.dims[r] for r in g) for g in groups]
    return PureState(dims, psi.amplitudes.transpose(order).reshape(dims))


def purifies_with_ancillas(psi: PureState, rho: DensityOperator) -> tuple[bool, float]:
    """Purification check for a candidate whose parties carry their own ancillas."""
    wide = split_ancillas(psi, rho.dims)
    return is_purification(wide, rho, range(0, 2 * rho.k, 2))
