"""PSD-rank of nonnegative tensors.

A factorization assigns an ``r x r`` PSD matrix ``C[t][x_t]`` to every party
``t`` and symbol ``x_t`` and reproduces

    P(x_1, ..., x_k) = sum_{i,j} C[1][x_1](i,j) * ... * C[k][x_k](i,j).

Upper bounds come from fitted (or trivially constructed) factorizations,
lower bounds from the ranks of bipartite flattenings: every entry is an
inner product of ``r^2``-dimensional vectors across any flattening, so
``prank >= ceil(sqrt(rank(flattening)))``.
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .spectral import RANK_TOL
from .tensor_core import ClassicalDistribution, InvariantError, classical_fidelity

FACTOR_TOL = 1e-10


class PsdFactorization:
    """Per-party stacks of ``r x r`` Hermitian PSD factors.

    ``factors[t]`` has shape ``(|X_t|, r, r)``.
    """

    def __init__(self, factors: Sequence[np.ndarray]):
        if not factors:
            raise InvariantError("a factorization needs at least one party")
        stacks = []
        r = None
        for t, f in enumerate(factors):
            f = np.asarray(f, dtype=complex)
            if f.ndim != 3 or f.shape[1] != f.shape[2]:
                raise InvariantError(f"party {t}: factor stack has shape {f.shape}")
            if r is None:
                r = f.shape[1]
            elif f.shape[1] != r:
                raise InvariantError(f"party {t}: factor size {f.shape[1]} != {r}")
            dev = np.max(np.abs(f - f.conj().transpose(0, 2, 1))) if f.size else 0.0
            if dev > FACTOR_TOL:
                raise InvariantError(f"party {t}: factor not Hermitian ({dev:.3e})")
            f = (f + f.conj().transpose(0, 2, 1)) / 2
            if f.size:
                wmin = float(np.linalg.eigvalsh(f).min())
                if wmin < -FACTOR_TOL:
                    raise InvariantError(f"party {t}: factor not PSD (min eigenvalue {wmin:.3e})")
            f.setflags(write=False)
            stacks.append(f)
        self.factors = tuple(stacks)
        self.r = int(r)

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def __repr__(self) -> str:
        return f"PsdFactorization(dims={list(self.dims)}, r={self.r})"


def _hadamard_sum(factors: Sequence[np.ndarray]) -> np.ndarray:
    letters = string.ascii_letters
    ins = ",".join(letters[t] + "YZ" for t in range(len(factors)))
    out = letters[: len(factors)]
    return np.einsum(f"{ins}->{out}", *factors)


def evaluate(f: PsdFactorization) -> np.ndarray:
    """Real nonnegative tensor realized by ``f`` (tiny negatives clipped)."""
    t = _hadamard_sum(f.factors)
    scale = max(1.0, float(np.max(np.abs(t)))) if t.size else 1.0
    if t.size and np.max(np.abs(t.imag)) > 1e-10 * scale:
        raise InvariantError("factorization evaluates to a non-real tensor")
    t = t.real
    if t.size and t.min() < -1e-10 * scale:
        raise InvariantError("factorization evaluates to a negative entry")
    return t


def residual(f: PsdFactorization, p: ClassicalDistribution) -> float:
    if f.dims != p.dims:
        raise InvariantError(f"shape mismatch: {f.dims} vs {p.dims}")
    return float(np.linalg.norm(_hadamard_sum(f.factors).real - p.probs))


@dataclass
class FitOptions:
    restarts: int = 16
    max_iters: int = 500
    rng_seed: int = 0
    tol: float = 1e-9
    residual_target: float = 1e-7

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise InvariantError("restarts and max_iters must be positive")
        if self.tol <= 0 or self.residual_target <= 0:
            raise InvariantError("tolerances must be positive")
        if self.rng_seed < 0:
            raise InvariantError("rng_seed must be nonnegative")


def _hermitian_basis(r: int) -> np.ndarray:
    """Frobenius-orthonormal real basis of r x r Hermitian matrices, shape (r*r, r, r)."""
    basis = []
    for i in range(r):
        e = np.zeros((r, r), dtype=complex)
        e[i, i] = 1
        basis.append(e)
    for i, j in itertools.combinations(range(r), 2):
        e = np.zeros((r, r), dtype=complex)
        e[i, j] = e[j, i] = 1 / math.sqrt(2)
        basis.append(e)
        e = np.zeros((r, r), dtype=complex)
        e[i, j], e[j, i] = 1j / math.sqrt(2), -1j / math.sqrt(2)
        basis.append(e)
    return np.array(basis)


def _project_psd(stack: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(stack)
    w = np.clip(w, 0.0, None)
    out = np.einsum("xij,xj,xkj->xik", v, w, v.conj())
    return (out + out.conj().transpose(0, 2, 1)) / 2


def _others(factors: list[np.ndarray], t: int) -> np.ndarray:
    """Hadamard products of all parties but ``t``, shape (N_{-t}, r, r)."""
    r = factors[0].shape[1]
    h = np.ones((1, r, r), dtype=complex)
    for s, f in enumerate(factors):
        if s != t:
            h = (h[:, None] * f[None, :]).reshape(-1, r, r)
    return h


def _random_start(dims: Sequence[int], r: int, rng: np.random.Generator) -> list[np.ndarray]:
    factors = []
    for d in dims:
        g = rng.standard_normal((d, r, r)) + 1j * rng.standard_normal((d, r, r))
        factors.append(g @ g.conj().transpose(0, 2, 1))
    mass = float(_hadamard_sum(factors).real.sum())
    if mass > 0:
        s = mass ** (-1.0 / len(dims))
        factors = [f * s for f in factors]
    return factors


def _rebalance(factors: list[np.ndarray]) -> bool:
    """Equalize per-party factor norms in place; the product is unchanged."""
    norms = [float(np.linalg.norm(f)) for f in factors]
    if min(norms) <= 0 or not all(np.isfinite(norms)):
        return False
    g = math.exp(sum(math.log(n) for n in norms) / len(norms))
    for t, n in enumerate(norms):
        factors[t] *= g / n
    return True


def _block_update(design: np.ndarray, target: np.ndarray, stack: np.ndarray,
                  basis: np.ndarray, inner: int) -> np.ndarray:
    """PSD-constrained least squares for one party, warm-started at ``stack``.

    Accelerated projected gradient in the orthonormal Hermitian coordinates,
    so eigenvalue clipping is the exact Euclidean projection.
    """
    lip = float(np.linalg.norm(design, 2)) ** 2
    if lip <= 0:
        return stack
    theta = np.einsum("mij,xij->mx", basis.conj(), stack).real
    y, t_prev = theta, 1.0
    gram, rhs = design.T @ design, design.T @ target
    for _ in range(inner):
        g = gram @ y - rhs
        nxt = np.einsum("mx,mij->xij", y - g / lip, basis)
        nxt = _project_psd(nxt)
        theta_new = np.einsum("mij,xij->mx", basis.conj(), nxt).real
        t_new = (1 + math.sqrt(1 + 4 * t_prev * t_prev)) / 2
        y = theta_new + ((t_prev - 1) / t_new) * (theta_new - theta)
        if np.max(np.abs(theta_new - theta)) < 1e-15:
            theta = theta_new
            break
        theta, t_prev = theta_new, t_new
    return _project_psd(np.einsum("mx,mij->xij", theta, basis))


def _als(p: np.ndarray, factors: list[np.ndarray], sweeps: int, tol: float,
         inner: int = 5) -> list[np.ndarray]:
    k = p.ndim
    r = factors[0].shape[1]
    basis = _hermitian_basis(r)
    prev = float(np.linalg.norm(_hadamard_sum(factors).real - p))
    for _ in range(sweeps):
        for t in range(k):
            h = _others(factors, t)
            design = np.einsum("mij,nij->nm", basis, h).real
            target = np.moveaxis(p, t, 0).reshape(p.shape[t], -1).T
            factors[t] = _block_update(design, target, factors[t], basis, inner)
        if not _rebalance(factors):
            break
        res = float(np.linalg.norm(_hadamard_sum(factors).real - p))
        if res < 1e-14 or abs(prev - res) <= tol * prev:
            break
        prev = res
    return factors


def _pack(gs: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.concatenate([g.real.ravel(), g.imag.ravel()]) for g in gs])


def _unpack(x: np.ndarray, dims: Sequence[int], r: int) -> list[np.ndarray]:
    gs, o = [], 0
    for d in dims:
        n = d * r * r
        gs.append(x[o:o + n].reshape(d, r, r) + 1j * x[o + n:o + 2 * n].reshape(d, r, r))
        o += 2 * n
    return gs


def _gram(gs: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [g @ g.conj().transpose(0, 2, 1) for g in gs]


def _factored_residual(x: np.ndarray, p: np.ndarray, r: int) -> np.ndarray:
    return (_hadamard_sum(_gram(_unpack(x, p.shape, r))).real - p).ravel()


def _factored_jacobian(x: np.ndarray, p: np.ndarray, r: int) -> np.ndarray:
    # for C = G G^dag: d sum_ij H_ij C_ij = 2 Re tr(G^dag conj(H) dG)
    dims = p.shape
    k = len(dims)
    gs = _unpack(x, dims, r)
    cs = _gram(gs)
    n_total = p.size
    letters = string.ascii_letters
    subscripts = ",".join(letters[s] + "YZ" for s in range(k)) + "->" + letters[:k] + "YZ"
    flat_index = np.arange(n_total).reshape(dims)
    blocks = []
    for t in range(k):
        others = [cs[s] if s != t else np.ones((dims[t], r, r)) for s in range(k)]
        h = np.moveaxis(np.einsum(subscripts, *others), t, 0).reshape(dims[t], -1, r, r)
        m = np.einsum("xba,xnbc->xnac", gs[t].conj(), h.conj())
        ja = 2 * m.real.transpose(0, 1, 3, 2)
        jb = -2 * m.imag.transpose(0, 1, 3, 2)
        rows = np.moveaxis(flat_index, t, 0).reshape(dims[t], -1)
        block_a = np.zeros((n_total, dims[t] * r * r))
        block_b = np.zeros((n_total, dims[t] * r * r))
        for xt in range(dims[t]):
            cols = slice(xt * r * r, (xt + 1) * r * r)
            block_a[rows[xt], cols] = ja[xt].reshape(rows.shape[1], -1)
            block_b[rows[xt], cols] = jb[xt].reshape(rows.shape[1], -1)
        blocks += [block_a, block_b]
    return np.hstack(blocks)


def _refine(p: np.ndarray, factors: list[np.ndarray], max_nfev: int) -> list[np.ndarray]:
    """Trust-region least squares on square-root factors, keeping PSD by construction."""
    r = factors[0].shape[1]
    x0 = _pack([_project_sqrt(f) for f in factors])
    sol = least_squares(_factored_residual, x0, jac=_factored_jacobian, args=(p, r),
                        method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    return _gram(_unpack(sol.x, p.shape, r))


def _project_sqrt(stack: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(stack)
    return np.einsum("xij,xj,xkj->xik", v, np.sqrt(np.clip(w, 0.0, None)), v.conj())


def fit(p: ClassicalDistribution, r: int, opts: FitOptions | None = None) -> tuple[PsdFactorization, float]:
    """Best of ``opts.restarts`` fits at factor size ``r``.

    Each restart runs projected alternating block updates (one party at a
    time, PSD-constrained least squares) and then refines all square-root
    factors jointly. Restart ``n`` draws from ``default_rng([rng_seed, n])``
    so results do not depend on evaluation order; ties go to the lowest
    restart index.
    """
    if r < 1:
        raise InvariantError(f"factor size must be >= 1, got {r}")
    opts = opts or FitOptions()
    best, best_res = None, np.inf
    for n in range(opts.restarts):
        rng = np.random.default_rng([opts.rng_seed, n])
        factors = _random_start(p.dims, r, rng)
        factors = _als(p.probs, factors, sweeps=min(opts.max_iters, 20), tol=opts.tol)
        factors = _refine(p.probs, factors, max_nfev=opts.max_iters)
        f = PsdFactorization(factors)
        res = residual(f, p)
        if res < best_res:
            best, best_res = f, res
    return best, best_res


def trivial_factorization(p: ClassicalDistribution) -> PsdFactorization:
    """Exact diagonal factorization of size ``min_i prod_{t != i} |X_t|``.

    The party ``i`` achieving the minimum carries the probabilities; the
    diagonal index runs over the joint symbols of the other parties.
    """
    dims = p.dims
    k = len(dims)
    sizes = [math.prod(dims[:i] + dims[i + 1:]) for i in range(k)]
    i = int(np.argmin(sizes))
    r = sizes[i]
    rest = [t for t in range(k) if t != i]
    joint = list(itertools.product(*[range(dims[t]) for t in rest]))
    factors = []
    for t in range(k):
        stack = np.zeros((dims[t], r, r), dtype=complex)
        for a, xs in enumerate(joint):
            if t == i:
                for x in range(dims[t]):
                    idx = list(xs)
                    idx.insert(i, x)
                    stack[x, a, a] = p.probs[tuple(idx)]
            else:
                stack[xs[rest.index(t)], a, a] = 1.0
        factors.append(stack)
    return PsdFactorization(factors)


def _ceil_sqrt(n: int) -> int:
    c = math.isqrt(n)
    return c if c * c == n else c + 1


def flattening_ranks(p: ClassicalDistribution) -> dict[tuple[int, ...], int]:
    """Numerical rank of every bipartite flattening, keyed by the side holding party 0."""
    k = p.k
    out = {}
    for size in range(1, k):
        for left in itertools.combinations(range(k), size):
            if 0 not in left:
                continue
            right = [t for t in range(k) if t not in left]
            m = p.probs.transpose(list(left) + right).reshape(
                math.prod(p.dims[t] for t in left), -1)
            s = np.linalg.svd(m, compute_uv=False)
            out[left] = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0
    return out


def psd_rank_lower(p: ClassicalDistribution) -> int:
    ranks = flattening_ranks(p)
    return max([1] + [_ceil_sqrt(n) for n in ranks.values()])


@dataclass
class RankSearch:
    """Outcome of the upward rank search: bound, witness and its residual."""

    rank: int
    factorization: PsdFactorization
    residual: float
    trivial: bool
    tried: dict[int, float] = field(default_factory=dict)


def psd_rank_search(p: ClassicalDistribution, opts: FitOptions | None = None) -> RankSearch:
    """Smallest ``r`` (from the flattening bound up) whose fit meets the residual target.

    Falls back to the exact trivial factorization, so the result is always a
    valid upper bound with a witness.
    """
    opts = opts or FitOptions()
    triv = trivial_factorization(p)
    tried = {}
    for r in range(psd_rank_lower(p), triv.r):
        f, res = fit(p, r, opts)
        tried[r] = res
        if res <= opts.residual_target:
            return RankSearch(r, f, res, False, tried)
    return RankSearch(triv.r, triv, residual(triv, p), True, tried)


def psd_rank_upper(p: ClassicalDistribution, opts: FitOptions | None = None) -> int:
    return psd_rank_search(p, opts).rank


def normalize_witness(t: np.ndarray) -> ClassicalDistribution | None:
    t = np.clip(np.asarray(t, dtype=float), 0.0, None)
    s = t.sum()
    if s <= 0:
        return None
    return ClassicalDistribution(t.shape, t / s)


@dataclass
class ApproxRankResult:
    rank: int
    witness: ClassicalDistribution
    factorization: PsdFactorization
    fidelity: float


def approx_psd_rank_upper(p: ClassicalDistribution, eps: float,
                          opts: FitOptions | None = None) -> ApproxRankResult:
    """Smallest fitted ``r`` whose normalized evaluation is ``1 - eps`` faithful to ``p``."""
    if not 0 < eps < 1:
        raise InvariantError(f"eps must lie in (0, 1), got {eps!r}")
    opts = opts or FitOptions()
    exact = psd_rank_search(p, opts)
    for r in range(1, exact.rank):
        f, _ = fit(p, r, opts)
        w = normalize_witness(_hadamard_sum(f.factors).real)
        if w is None:
            continue
        fid = classical_fidelity(p, w)
        if fid >= 1 - eps:
            return ApproxRankResult(r, w, f, fid)
    w = normalize_witness(_hadamard_sum(exact.factorization.factors).real)
    return ApproxRankResult(exact.rank, w, exact.factorization, classical_fidelity(p, w))
