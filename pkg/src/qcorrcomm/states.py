"""Named states and distributions used in examples and tests."""
from __future__ import annotations

import numpy as np

from .tensor_core import ClassicalDistribution, DensityOperator, PureState


def ghz(k: int = 3) -> PureState:
    t = np.zeros([2] * k)
    t[(0,) * k] = t[(1,) * k] = 1 / np.sqrt(2)
    return PureState([2] * k, t)


def w_state(k: int = 3) -> PureState:
    v = np.zeros(2 ** k)
    for j in range(k):
        v[1 << (k - 1 - j)] = 1 / np.sqrt(k)
    return PureState([2] * k, v.reshape([2] * k))


def epr() -> PureState:
    return ghz(2)


def product(dims, index=None) -> PureState:
    return PureState.basis(dims, index if index is not None else [0] * len(dims))


def psi0() -> PureState:
    """``(GHZ |1> + W |0>) / sqrt2`` with the flag qubit held by the third party.

    The third party's register has dimension 4, system qubit slower.
    """
    t = np.zeros((2, 2, 2, 2), dtype=complex)
    t[..., 1] = ghz().amplitudes / np.sqrt(2)
    t[..., 0] = w_state().amplitudes / np.sqrt(2)
    return PureState([2, 2, 4], t.reshape(2, 2, 4))


def rho0() -> DensityOperator:
    g, w = ghz().vector, w_state().vector
    return DensityOperator([2, 2, 2], 0.5 * np.outer(g, g.conj()) + 0.5 * np.outer(w, w.conj()))


def correlated_bits(k: int = 2) -> ClassicalDistribution:
    t = np.zeros([2] * k)
    t[(0,) * k] = t[(1,) * k] = 0.5
    return ClassicalDistribution([2] * k, t)


def product_distribution(*marginals) -> ClassicalDistribution:
    t = np.array(1.0)
    for m in marginals:
        t = np.multiply.outer(t, np.asarray(m, dtype=float))
    return ClassicalDistribution([len(m) for m in marginals], t)


def random_pure(dims, rng: np.random.Generator) -> PureState:
    v = rng.normal(size=dims) + 1j * rng.normal(size=dims)
    return PureState(dims, v / np.linalg.norm(v))
