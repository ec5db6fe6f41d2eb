"""Complexity measures and their bound intervals.

All interval arithmetic runs over :class:`fractions.Fraction`; floating point
only enters through ranks and residuals. Two size conventions coexist:

* multipartite quantities count the seed as the sum of all parties' qubits
  (a shared EPR pair costs 2);
* the bipartite closed forms (approximate pure value, classical value for two
  parties) count one side's register, ``ceil(log2 rank)``.

Each report says which convention produced it in its notes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .psd_rank import (
    FitOptions,
    approx_psd_rank_upper,
    psd_rank_lower,
    psd_rank_search,
)
from .spectral import (
    approx_schmidt_rank,
    marginal_ranks,
    schmidt,
    single_party_split,
    support_decomposition,
    _cutoff_index,
)
from .synthesis import (
    ceil_log2,
    qcomm_upper_protocol,
    simulate_protocol,
    standard_purification,
    truncate_pure,
)
from .tensor_core import (
    ClassicalDistribution,
    DensityOperator,
    InvariantError,
    PartySplit,
    PureState,
    partial_trace,
    purifies_with_ancillas,
)

MAX_COVER_CELLS = 4096
MAX_COVER_COMBINATIONS = 1 << 20
CHAR_TOL = 1e-8
SUM_CONVENTION = "size convention: sum of all parties' seed qubits"
SIDE_CONVENTION = "size convention: one side's register, ceil(log2 rank)"


class PurificationError(ValueError):
    """A candidate state does not purify the given density operator."""


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def _floor(x: Fraction) -> int:
    return x.numerator // x.denominator


@dataclass
class ComplexityReport:
    quantity: str
    exact: int | None
    lower: Fraction
    upper: Fraction
    witness: str | None = None
    notes: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)
    witness_data: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.lower, self.upper = _frac(self.lower), _frac(self.upper)
        if self.lower > self.upper:
            raise InvariantError(f"{self.quantity}: lower {self.lower} exceeds upper {self.upper}")
        if self.exact is not None and not self.lower <= self.exact <= self.upper:
            raise InvariantError(f"{self.quantity}: exact {self.exact} outside [{self.lower}, {self.upper}]")

    @property
    def interval(self) -> tuple[Fraction, Fraction]:
        return self.lower, self.upper

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "exact": self.exact,
            "lower": {"num": self.lower.numerator, "den": self.lower.denominator},
            "upper": {"num": self.upper.numerator, "den": self.upper.denominator},
            "witness": self.witness,
            "notes": list(self.notes),
            "details": self.details,
        }


def _check_eps(eps: float, hi: float = 1.0) -> None:
    if not 0 < eps < hi:
        raise InvariantError(f"eps must lie in (0, {hi:g}), got {eps!r}")


# --- pure states -----------------------------------------------------------

def marginal_complexity(psi: PureState) -> int:
    return sum(ceil_log2(r) for r in marginal_ranks(psi))


def qcorr_pure(psi: PureState) -> int:
    return marginal_complexity(psi)


def approx_marginal_ranks(psi: PureState, eps: float) -> list[int]:
    _check_eps(eps)
    if psi.k == 1:
        return [1]
    return [approx_schmidt_rank(psi, single_party_split(psi.k, i), eps) for i in range(psi.k)]


def marginal_complexity_eps(psi: PureState, eps: float) -> int:
    return sum(ceil_log2(r) for r in approx_marginal_ranks(psi, eps))


def qcorr_eps_pure_bounds(psi: PureState, eps: float) -> ComplexityReport:
    """Sandwich ``m_eps <= qcorr_eps^pure <= m_{eps/k}`` with the truncation witness."""
    _check_eps(eps)
    lo = marginal_complexity_eps(psi, eps)
    hi = marginal_complexity_eps(psi, eps / psi.k)
    tr = truncate_pure(psi, eps)
    notes = [SUM_CONVENTION, f"truncation fidelity {tr.fidelity:.12f}"]
    details = {"m_eps": lo, "m_eps_over_k": hi, "truncation_fidelity": tr.fidelity,
               "truncation_kept": tr.kept}
    if psi.k == 2:
        details["bipartite_exact"] = qcorr_eps_bipartite_pure(psi, eps)
        notes.append("bipartite_exact uses the one-side convention")
    return ComplexityReport("qcorr_eps_pure", None, lo, hi, "truncation", notes, details, tr)


def qcorr_eps_bipartite_pure(psi: PureState, eps: float) -> int:
    if psi.k != 2:
        raise InvariantError(f"bipartite formula needs k=2, got k={psi.k}")
    return ceil_log2(approx_schmidt_rank(psi, PartySplit((0,), (1,)), eps))


def qcomm_pure_bounds(psi: PureState) -> ComplexityReport:
    m = marginal_complexity(psi)
    k = psi.k
    lo_q = Fraction(m, 2)
    hi_q = Fraction((k - 1) * m, k)
    proto = qcomm_upper_protocol(psi)
    sim = simulate_protocol(proto)
    lo, hi = _ceil(lo_q), min(_floor(hi_q), sim.communication)
    details = {"m": m, "rational_lower": str(lo_q), "rational_upper": str(hi_q),
               "protocol_communication": sim.communication,
               "protocol_fidelity": sim.fidelity,
               "ledger": {f"{a}-{b}": c for (a, b), c in sorted(sim.ledger.items())}}
    exact = lo if lo == hi else None
    return ComplexityReport("qcomm_pure", exact, lo, hi, "qcomm_protocol",
                            ["integer interval: ceil of lower, floor of upper"], details, proto)


def comm_corr_consistency(report_c: ComplexityReport, report_m: ComplexityReport, k: int) -> bool:
    """True iff some integers ``c`` and ``q`` in the two intervals satisfy
    ``k/(k-1) q <= c <= 2 q``."""
    c_lo, c_hi = _ceil(report_c.lower), _floor(report_c.upper)
    q_lo, q_hi = _ceil(report_m.lower), _floor(report_m.upper)
    if k == 1:
        return c_lo <= 0 <= c_hi and q_lo <= 0 <= q_hi
    for q in range(q_lo, q_hi + 1):
        lo = max(c_lo, _ceil(Fraction(k * q, k - 1)))
        if lo <= min(c_hi, 2 * q):
            return True
    return False


def qcorr_eps_pure_mixed_relation(psi: PureState, eps: float) -> ComplexityReport:
    k = psi.k
    _check_eps(eps, 1.0 / k)
    m_keps = marginal_complexity_eps(psi, k * eps) if k * eps < 1 else 0
    lower = _ceil(Fraction(k, 2 * k - 2) * m_keps) if k > 1 else 0
    upper = marginal_complexity_eps(psi, eps / k)
    return ComplexityReport("qcorr_eps", None, lower, upper, None, [SUM_CONVENTION],
                            {"m_k_eps": m_keps, "m_eps_over_k": upper})


# --- mixed states ----------------------------------------------------------

def _check_candidates(rho: DensityOperator, candidates: Sequence[PureState]) -> None:
    for n, c in enumerate(candidates):
        try:
            ok, res = purifies_with_ancillas(c, rho)
        except InvariantError as e:
            raise PurificationError(f"candidate {n} has incompatible registers: {e}") from None
        if not ok:
            raise PurificationError(f"candidate {n} does not purify the state (residual {res:.3e})")


def _default_purifications(rho: DensityOperator) -> list[PureState]:
    return [standard_purification(rho, j) for j in range(len(rho.dims))]


def _is_classical(rho: DensityOperator) -> bool:
    return rho.is_diagonal()


def _as_distribution(rho: DensityOperator) -> ClassicalDistribution:
    p = np.clip(np.diag(rho.matrix).real, 0, None)
    return ClassicalDistribution(rho.dims, (p / p.sum()).reshape(rho.dims))


def purification_complexity_bounds(rho: DensityOperator, candidates: Sequence[PureState] = (),
                                   ) -> ComplexityReport:
    """Upper bound on ``r(rho)``: least marginal complexity over the candidates
    and the standard purifications (ancilla attached to each party in turn)."""
    _check_candidates(rho, candidates)
    pool = [("candidate", n, c) for n, c in enumerate(candidates)]
    pool += [("standard", j, c) for j, c in enumerate(_default_purifications(rho))]
    scored = [(marginal_complexity(c), n, kind, j, c) for n, (kind, j, c) in enumerate(pool)]
    best = min(scored, key=lambda t: (t[0], t[1]))
    m, _, kind, j, c = best
    rank1 = rho.rank() == 1
    lower = m if rank1 else 0
    notes = [SUM_CONVENTION, "upper bound from explicit purifications (heuristic: not a minimum)"]
    if rank1:
        notes.append("rank-one input: the purification is the state itself")
    details = {"candidate_complexities": [s[0] for s in scored[:len(candidates)]],
               "standard_complexities": [s[0] for s in scored[len(candidates):]],
               "best": f"{kind}:{j}"}
    return ComplexityReport("r", m if rank1 else None, lower, m, "purification", notes, details, c)


def qcorr_mixed_bounds(rho: DensityOperator, candidates: Sequence[PureState] = (),
                       opts: FitOptions | None = None) -> ComplexityReport:
    r = purification_complexity_bounds(rho, candidates)
    trivial = sum(ceil_log2(d) for d in rho.dims)
    upper = min(_floor(r.upper), trivial)
    lower = _ceil(r.lower)
    notes = [SUM_CONVENTION, f"r upper {_floor(r.upper)}, trivial seed {trivial}"]
    details = {"r_upper": _floor(r.upper), "trivial_seed": trivial}
    if _is_classical(rho) and rho.rank() > 1:
        cls = qcorr_classical_bounds(_as_distribution(rho), opts)
        lower = max(lower, _ceil(cls.lower))
        details["classical_lower"] = _ceil(cls.lower)
        notes.append("lower bound merged from the classical PSD-rank bound")
    else:
        notes.append("no certified lower bound for general mixed states" if lower == 0 else
                     "rank-one input: exact")
    exact = upper if lower == upper else None
    return ComplexityReport("qcorr_mixed", exact, lower, upper, "purification", notes, details,
                            r.witness_data)


def qcomm_mixed_bounds(rho: DensityOperator, candidates: Sequence[PureState] = (),
                       qcorr: ComplexityReport | None = None,
                       opts: FitOptions | None = None) -> ComplexityReport:
    """Communication interval from explicit purifications.

    The upper bound is the least over the candidates (and standard
    purifications) of their pure-state upper bounds, further capped through
    ``qcomm <= (k-1)/k qcorr``. A lower bound is emitted only when certified:
    exactly for rank-one inputs, otherwise through ``qcorr <= 2 qcomm``.
    """
    _check_candidates(rho, candidates)
    k = len(rho.dims)
    if qcorr is None:
        qcorr = qcorr_mixed_bounds(rho, candidates, opts)
    pool = list(candidates) + _default_purifications(rho)
    reps = [qcomm_pure_bounds(c) for c in pool]
    best = min(range(len(reps)), key=lambda n: (reps[n].upper, n))
    upper = _floor(reps[best].upper)
    if k > 1:
        upper = min(upper, _floor(Fraction(k - 1, k) * qcorr.upper))
    else:
        upper = 0
    if rho.rank() == 1:
        lower = _ceil(reps[best].lower)
        note = "rank-one input: pure-state bounds apply"
    else:
        lower = _ceil(qcorr.lower / 2)
        note = "lower bound via qcorr <= 2 qcomm"
    lower = min(lower, upper)
    exact = upper if lower == upper else None
    return ComplexityReport("qcomm_mixed", exact, lower, upper, "qcomm_protocol",
                            [note, "upper bound from explicit protocols (heuristic)"],
                            {"best_candidate": best, "qcorr_upper": _floor(qcorr.upper)},
                            reps[best].witness_data)


# --- classical distributions ----------------------------------------------

def qcorr_classical_bounds(p: ClassicalDistribution, opts: FitOptions | None = None
                           ) -> ComplexityReport:
    k = len(p.dims)
    if k == 1:
        return ComplexityReport("qcorr_classical", 0, 0, 0, None, ["single party: nothing to share"])
    search = psd_rank_search(p, opts)
    lo_rank = psd_rank_lower(p)
    hi_rank = search.rank
    details = {"psd_rank_lower": lo_rank, "psd_rank_upper": hi_rank,
               "fit_residual": search.residual, "trivial_factorization": search.trivial,
               "ranks_tried": {str(r): v for r, v in search.tried.items()}}
    notes = []
    if k == 2:
        lower, upper = ceil_log2(lo_rank), ceil_log2(hi_rank)
        notes.append(SIDE_CONVENTION)
    else:
        lower = _ceil(Fraction(k, 2 * k - 2) * ceil_log2(lo_rank))
        cap = sum(ceil_log2(d) for d in p.dims)
        upper = min(k * ceil_log2(hi_rank), cap)
        notes.append(SUM_CONVENTION)
        if cap < k * ceil_log2(hi_rank):
            notes.append(f"upper capped by sharing the distribution itself ({cap} qubits)")
    if not search.trivial and hi_rank > lo_rank:
        notes.append("upper PSD-rank from a numerical fit (heuristic)")
    exact = lower if lower == upper else None
    return ComplexityReport("qcorr_classical", exact, lower, upper, "factorization", notes, details,
                            search.factorization)


def qcorr_eps_classical(p: ClassicalDistribution, eps: float, opts: FitOptions | None = None
                        ) -> ComplexityReport:
    if len(p.dims) != 2:
        raise InvariantError(f"approximate classical value needs k=2, got k={len(p.dims)}")
    _check_eps(eps)
    res = approx_psd_rank_upper(p, eps, opts)
    upper = ceil_log2(res.rank)
    notes = [SIDE_CONVENTION, "upper bound from a fitted witness (heuristic)",
             "no lower-bound certificate for approximate PSD-rank"]
    return ComplexityReport("qcorr_eps_classical", None, 0, upper, "factorization", notes,
                            {"approx_psd_rank_upper": res.rank, "witness_fidelity": res.fidelity},
                            res)


# --- product covers --------------------------------------------------------

@dataclass
class ProductCover:
    subsets: list[list[int]]
    R: int
    retained_mass: float
    exact: bool

    @property
    def certified_bound(self) -> int:
        """Seed qubits for the restricted state, summed over parties."""
        return sum(ceil_log2(len(s)) for s in self.subsets)

    @property
    def stated_bound(self) -> int:
        return ceil_log2(self.R) if self.R > 1 else 0


def _top_subset(mass: np.ndarray, s: int) -> tuple[list[int], float]:
    order = np.argsort(-mass, kind="stable")[:s]
    return sorted(int(i) for i in order), float(mass[order].sum())


def min_product_cover(a: np.ndarray, eps: float, brute_force: bool = True) -> ProductCover:
    a = np.asarray(a, dtype=complex)
    w = np.abs(a) ** 2
    if abs(w.sum() - 1.0) > 1e-8:
        raise InvariantError(f"coefficient tensor must have unit norm, got mass {w.sum():.12f}")
    if not 0 <= eps < 1:
        raise InvariantError(f"eps must lie in [0, 1), got {eps!r}")
    target = 1 - eps - 1e-12
    shape = w.shape
    if not brute_force:
        return _greedy_cover(w, target)
    if math.prod(shape) > MAX_COVER_CELLS:
        raise InvariantError(f"brute-force cover needs at most {MAX_COVER_CELLS} cells, got {math.prod(shape)}")
    head = shape[:-1]
    n_comb = math.prod((1 << r) - 1 for r in head)
    if n_comb > MAX_COVER_COMBINATIONS:
        raise InvariantError(f"brute-force cover would enumerate {n_comb} subset tuples")
    best: tuple | None = None
    subsets_per = [[c for s in range(1, r + 1) for c in itertools.combinations(range(r), s)]
                   for r in head]
    for combo in itertools.product(*subsets_per):
        sub = w[np.ix_(*combo)] if combo else w
        last = sub.reshape(-1, shape[-1]).sum(axis=0)
        if last.sum() < target:
            continue
        base = math.prod(len(c) for c in combo)
        csum = np.cumsum(np.sort(last)[::-1])
        s = int(np.nonzero(csum >= target)[0][0]) + 1
        R = base * s
        if best is None or R < best[0] or (R == best[0] and csum[s - 1] > best[2] + 1e-15):
            keep, m = _top_subset(last, s)
            best = (R, [list(c) for c in combo] + [keep], m)
    R, subsets, m = best
    return ProductCover(subsets, R, m, True)


def _greedy_cover(w: np.ndarray, target: float) -> ProductCover:
    keep = [list(range(r)) for r in w.shape]
    while True:
        sub = w[np.ix_(*keep)]
        total = sub.sum()
        best = None
        for j in range(w.ndim):
            if len(keep[j]) == 1:
                continue
            marg = sub.sum(axis=tuple(t for t in range(w.ndim) if t != j))
            i = int(np.argmin(marg))
            if total - marg[i] >= target and (best is None or marg[i] < best[0]):
                best = (marg[i], j, i)
        if best is None:
            break
        _, j, i = best
        del keep[j][i]
    m = float(w[np.ix_(*keep)].sum())
    return ProductCover(keep, math.prod(len(s) for s in keep), m, False)


def cover_for_state(psi: PureState, eps: float, brute_force: bool = True) -> ProductCover:
    return min_product_cover(support_decomposition(psi).coefficients, eps, brute_force)


# --- general bipartite characterization -----------------------------------

@dataclass
class CharacterizationCheck:
    ok: bool
    r: int | None
    reconstruction_residual: float
    orthogonality_residual: float
    masses: np.ndarray
    columns: int

    def __iter__(self):
        yield self.ok
        yield self.r


def _family(mats) -> np.ndarray:
    arr = [np.atleast_2d(np.asarray(m, dtype=complex)) for m in mats]
    cols = {m.shape[1] for m in arr}
    rows = {m.shape[0] for m in arr}
    if len(cols) != 1 or len(rows) != 1:
        raise InvariantError("every matrix in a family needs the same shape")
    return np.stack(arr)


def verify_general_characterization(sigma: DensityOperator, A, B, eps: float,
                                    cutoff: str = "fidelity") -> CharacterizationCheck:
    """Check the three matrix conditions for ``sigma`` on two parties.

    ``cutoff="fidelity"`` finds the least ``r`` whose leading product masses
    reach ``(1 - eps)^2``, matching the approximate Schmidt rank; ``"mass"``
    uses the bare threshold ``1 - eps``.
    """
    if len(sigma.dims) != 2:
        raise InvariantError("sigma must be bipartite")
    _check_eps(eps)
    A, B = _family(A), _family(B)
    if A.shape[0] != sigma.dims[0] or B.shape[0] != sigma.dims[1]:
        raise InvariantError(f"family sizes {A.shape[0]}, {B.shape[0]} do not match dims {sigma.dims}")
    if A.shape[2] != B.shape[2]:
        raise InvariantError(f"column counts differ: {A.shape[2]} vs {B.shape[2]}")
    l = A.shape[2]
    # Ga[x, x', i, j] = <A_x'(i) | A_x(j)>
    Ga = np.einsum("pai,xaj->xpij", A.conj(), A)
    Gb = np.einsum("qbi,ybj->yqij", B.conj(), B)
    rebuilt = np.einsum("xpij,yqij->xypq", Ga, Gb).reshape(sigma.matrix.shape)
    rec = float(np.max(np.abs(rebuilt - sigma.matrix)))
    SA = np.einsum("xai,xaj->ij", A.conj(), A)
    SB = np.einsum("ybi,ybj->ij", B.conj(), B)
    off = ~np.eye(l, dtype=bool)
    orth = float(max(np.max(np.abs(SA[off]), initial=0.0), np.max(np.abs(SB[off]), initial=0.0)))
    masses = np.sort(np.diag(SA).real * np.diag(SB).real)[::-1]
    if cutoff == "fidelity":
        threshold = (1 - eps) ** 2
    elif cutoff == "mass":
        threshold = 1 - eps
    else:
        raise InvariantError(f"unknown cutoff {cutoff!r}")
    ok = rec <= CHAR_TOL and orth <= CHAR_TOL
    r = _cutoff_index(masses, threshold) if ok else None
    if r is not None and r > l:
        ok = False
    return CharacterizationCheck(ok, r, rec, orth, masses, l)


def extract_factors(psi: PureState) -> tuple[np.ndarray, np.ndarray]:
    """Families ``{A_x}``, ``{B_y}`` from a purification on registers ``[A, A1, B, B1]``.

    Column ``i`` of ``A_x`` is the ``x`` slice of the ``i``-th left Schmidt
    vector scaled by its coefficient; ``B_y`` likewise without scaling.
    """
    if psi.k != 4:
        raise InvariantError(f"expected registers [A, A1, B, B1], got {psi.k} registers")
    dA, dA1, dB, dB1 = psi.dims
    dec = schmidt(psi, PartySplit((0, 1), (2, 3)))
    U = dec.left_vectors * dec.coefficients
    V = dec.right_vectors
    A = U.reshape(dA, dA1, -1)
    B = V.reshape(dB, dB1, -1)
    return A, B


def purified_marginal(psi: PureState) -> DensityOperator:
    """``sigma`` on ``(A, B)`` for a state on ``[A, A1, B, B1]``."""
    return partial_trace(psi.density(), [1, 3])
