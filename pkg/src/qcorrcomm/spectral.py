"""Eigen and Schmidt machinery: decompositions, exact and approximate ranks,
support decompositions, and the two purification facts (connecting unitary,
Uhlmann partner) in constructive form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import (
    DensityOperator,
    InvariantError,
    PartySplit,
    PureState,
    _psd_sqrt,
)

RANK_TOL = 1e-10
CUTOFF_SLACK = 1e-12
DECOMP_TOL = 1e-8


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    piv = vectors[idx, np.arange(vectors.shape[1])]
    ph = np.where(np.abs(piv) > 0, piv / np.where(piv == 0, 1, np.abs(piv)), 1.0)
    return vectors / ph


def _phases(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    piv = vectors[idx, np.arange(vectors.shape[1])]
    return np.where(np.abs(piv) > 0, piv / np.where(piv == 0, 1, np.abs(piv)), 1.0)


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in nonincreasing order and matching orthonormal eigenvectors.

    Ties keep the order in which the LAPACK solver returned them.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvariantError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if m.size and np.max(np.abs(m - m.conj().T)) > 1e-8 * scale:
        raise InvariantError("matrix is not Hermitian")
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    order = np.argsort(-w, kind="stable")
    return w[order], _fix_phases(v[:, order])


@dataclass(frozen=True)
class SchmidtDecomposition:
    coefficients: np.ndarray      # sqrt(p_i), nonincreasing, above the rank cutoff
    left_vectors: np.ndarray      # columns, in the flattened left space
    right_vectors: np.ndarray     # columns, in the flattened right space
    split: PartySplit
    all_coefficients: np.ndarray  # the full singular spectrum, zeros included

    @property
    def rank(self) -> int:
        return len(self.coefficients)

    @property
    def probabilities(self) -> np.ndarray:
        return self.coefficients ** 2


def flatten(psi: PureState, split: PartySplit) -> np.ndarray:
    split.check(psi.k)
    order = list(split.left) + list(split.right)
    dl = math.prod(psi.dims[i] for i in split.left)
    return psi.amplitudes.transpose(order).reshape(dl, -1)


def _rank_from_values(s: np.ndarray) -> int:
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))


def schmidt(psi: PureState, split: PartySplit) -> SchmidtDecomposition:
    U, s, Vh = np.linalg.svd(flatten(psi, split), full_matrices=False)
    r = _rank_from_values(s)
    U, V = U[:, :r], Vh[:r].T       # psi = sum_i s_i U[:, i] (x) V[:, i]
    ph = _phases(U)
    return SchmidtDecomposition(s[:r].copy(), U / ph, V * ph, split, s.copy())


def schmidt_rank(psi: PureState, split: PartySplit) -> int:
    return _rank_from_values(np.linalg.svd(flatten(psi, split), compute_uv=False))


def _cutoff_index(p: np.ndarray, target: float) -> int:
    c = np.cumsum(np.sort(p)[::-1])
    hit = np.nonzero(c >= target - CUTOFF_SLACK)[0]
    return int(hit[0]) + 1 if hit.size else len(p)


def approx_schmidt_rank(psi: PureState, split: PartySplit, eps: float) -> int:
    """Smallest ``r`` whose top-``r`` squared Schmidt coefficients reach ``(1 - eps)^2``."""
    if not 0 < eps < 1:
        raise InvariantError(f"eps must lie in (0, 1), got {eps!r}")
    s = np.linalg.svd(flatten(psi, split), compute_uv=False)
    return _cutoff_index(s ** 2, (1 - eps) ** 2)


def approx_matrix_rank(a, delta: float) -> int:
    """Smallest ``r`` whose top-``r`` squared singular values reach ``1 - delta``.

    ``a`` must have unit Frobenius norm.
    """
    a = np.asarray(a, dtype=complex)
    if abs(np.linalg.norm(a) - 1.0) > 1e-8:
        raise InvariantError("matrix must have unit Frobenius norm")
    if not 0 <= delta < 1:
        raise InvariantError(f"delta must lie in [0, 1), got {delta!r}")
    s = np.linalg.svd(a, compute_uv=False)
    if delta == 0:
        return _rank_from_values(s)
    return _cutoff_index(s ** 2, 1 - delta)


def single_party_split(k: int, i: int) -> PartySplit:
    return PartySplit.of(k, [i])


def marginal_ranks(psi: PureState) -> list[int]:
    if psi.k == 1:
        return [1]
    return [schmidt_rank(psi, single_party_split(psi.k, i)) for i in range(psi.k)]


def marginal_spectra(psi: PureState) -> list[np.ndarray]:
    """Eigenvalues (nonincreasing, zeros included) of each single-party marginal."""
    if psi.k == 1:
        return [np.array([1.0])]
    return [np.linalg.svd(flatten(psi, single_party_split(psi.k, i)), compute_uv=False) ** 2
            for i in range(psi.k)]


@dataclass(frozen=True)
class SupportDecomposition:
    """``psi = sum a[j1..jk] |alpha_{1 j1}> ... |alpha_{k jk}>`` over marginal supports."""

    bases: tuple[np.ndarray, ...]   # party i: d_i x r_i, orthonormal columns
    coefficients: np.ndarray        # shape r_1 x ... x r_k
    eigenvalues: tuple[np.ndarray, ...]

    @property
    def ranks(self) -> list[int]:
        return list(self.coefficients.shape)

    def reconstruct(self) -> np.ndarray:
        t = self.coefficients
        for i, B in enumerate(self.bases):
            t = np.moveaxis(np.tensordot(B, np.moveaxis(t, i, 0), axes=1), 0, i)
        return t


def project_onto(amplitudes: np.ndarray, bases) -> np.ndarray:
    """Coefficient tensor of ``amplitudes`` in the given per-party column bases."""
    t = amplitudes
    for i, B in enumerate(bases):
        t = np.moveaxis(np.tensordot(B.conj().T, np.moveaxis(t, i, 0), axes=1), 0, i)
    return t


def support_decomposition(psi: PureState) -> SupportDecomposition:
    if psi.k == 1:
        B = psi.vector.reshape(-1, 1)
        ph = _phases(B)
        B = B / ph
        return SupportDecomposition((B,), np.array([ph[0]]), (np.array([1.0]),))
    bases, evals = [], []
    for i in range(psi.k):
        dec = schmidt(psi, single_party_split(psi.k, i))
        bases.append(dec.left_vectors)
        evals.append(dec.probabilities)
    return SupportDecomposition(tuple(bases), project_onto(psi.amplitudes, bases), tuple(evals))


def connecting_unitary(psi: PureState, phi: PureState, split: PartySplit) -> np.ndarray:
    """Unitary ``U`` on the right side with ``(I x U) psi = phi``.

    Solved as an orthogonal Procrustes problem on the flattened amplitude
    matrices; the minimizer is exact whenever the left marginals agree.
    """
    if psi.dims != phi.dims:
        raise InvariantError(f"dims mismatch: {psi.dims} vs {phi.dims}")
    P, F = flatten(psi, split), flatten(phi, split)
    if np.max(np.abs(P @ P.conj().T - F @ F.conj().T)) > DECOMP_TOL:
        raise InvariantError("not locally connected")
    W, _, Vh = np.linalg.svd(P.conj().T @ F)
    R = W @ Vh                      # P @ R == F
    U = R.T                         # (I x U) acts as P -> P U^T
    if np.max(np.abs(P @ R - F)) > DECOMP_TOL:
        raise InvariantError("not locally connected")
    return U


def apply_right(psi: PureState, split: PartySplit, U: np.ndarray) -> PureState:
    """Apply ``I x U`` across ``split`` and restore the original party order."""
    M = flatten(psi, split) @ U.T
    order = list(split.left) + list(split.right)
    t = M.reshape([psi.dims[i] for i in order]).transpose(np.argsort(order))
    return PureState(psi.dims, t)


def uhlmann_partner(psi: PureState, sigma: DensityOperator, split: PartySplit) -> PureState:
    """Purification of ``sigma`` on the left side with maximal overlap with ``psi``.

    ``psi`` must purify some ``rho`` on the left parties; then
    ``|<phi|psi>| = F(rho, sigma)``.
    """
    split.check(psi.k)
    left_dims = [psi.dims[i] for i in split.left]
    if list(sigma.dims) != left_dims:
        raise InvariantError(f"sigma dims {list(sigma.dims)} do not match left dims {left_dims}")
    Psi = flatten(psi, split)
    dl, dr = Psi.shape
    if dr < dl:
        raise InvariantError("purification precondition violated: right side smaller than left")
    # polar form Psi = sqrt(rho) V with V V^dag = I
    Us, s, Vh = np.linalg.svd(Psi, full_matrices=False)
    V = Us @ Vh
    rho = DensityOperator(left_dims, Psi @ Psi.conj().T)
    # sqrt(sigma) sqrt(rho) = Q |.|, pick W = Q V
    M = _psd_sqrt(sigma.matrix) @ _psd_sqrt(rho.matrix)
    Wm, _, Wh = np.linalg.svd(M)
    Q = Wm @ Wh
    Phi = _psd_sqrt(sigma.matrix) @ Q @ V
    order = list(split.left) + list(split.right)
    t = Phi.reshape([psi.dims[i] for i in order]).transpose(np.argsort(order))
    return PureState(psi.dims, t)
