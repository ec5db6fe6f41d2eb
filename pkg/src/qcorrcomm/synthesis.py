"""Constructive witnesses: canonical seeds, purifications from PSD
factorizations, truncations, and a protocol simulator that certifies the
generated state and counts the qubits exchanged.

A protocol acts on numbered registers. Each register has a dimension and an
owner (a party index, or ``None`` once discarded). Steps are applied in
order and may only touch registers owned by the acting party.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.linalg import null_space

from .psd_rank import PsdFactorization, _hadamard_sum
from .spectral import approx_schmidt_rank, single_party_split, support_decomposition
from .tensor_core import DensityOperator, InvariantError, PureState

ISOMETRY_TOL = 1e-8


class ProtocolError(ValueError):
    """Bookkeeping violation while running a protocol."""


def ceil_log2(n: int) -> int:
    if n < 1:
        raise ValueError(f"ceil_log2 needs a positive integer, got {n}")
    return (n - 1).bit_length()


@dataclass(frozen=True)
class LocalIsometry:
    party: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] < m.shape[1]:
            raise ProtocolError(f"isometry must be tall, got shape {m.shape}")
        if np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))) > ISOMETRY_TOL:
            raise ProtocolError(f"party {self.party}: matrix is not an isometry")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class IsometryStep:
    party: int
    matrix: np.ndarray
    inputs: tuple[int, ...] | None = None     # None: every register the party owns
    outputs: tuple[int, ...] | None = None    # output register dims; None: one register


@dataclass(frozen=True)
class SendStep:
    src: int
    dst: int
    qubits: int
    register: int | None = None


@dataclass(frozen=True)
class DiscardStep:
    party: int
    register: int


Step = Union[IsometryStep, SendStep, DiscardStep]


@dataclass
class GenerationProtocol:
    """Seed registers with owners, an ordered step list, and the declared target."""

    k: int
    seed: PureState
    owners: list[int]
    steps: list[Step]
    target: PureState | DensityOperator
    label: str = ""

    def __post_init__(self):
        if len(self.owners) != self.seed.k:
            raise ProtocolError("one owner per seed register is required")
        if any(o < 0 or o >= self.k for o in self.owners):
            raise ProtocolError(f"seed owner out of range for k={self.k}")
        for d in self.seed.dims:
            if d & (d - 1):
                raise ProtocolError(f"seed register of dim {d} is not qubit-shaped")

    @property
    def qubits_per_party(self) -> list[int]:
        n = [0] * self.k
        for d, o in zip(self.seed.dims, self.owners):
            n[o] += ceil_log2(d)
        return n

    @property
    def size(self) -> int:
        return sum(self.qubits_per_party)


@dataclass
class SimulationResult:
    final: PureState | DensityOperator
    fidelity: float
    size: int
    communication: int
    ledger: dict[tuple[int, int], int] = field(default_factory=dict)


def simulate_protocol(p: GenerationProtocol) -> SimulationResult:
    state = np.array(p.seed.amplitudes, dtype=complex)
    regs = list(range(p.seed.k))          # axis i of ``state`` holds register regs[i]
    dims = {i: d for i, d in enumerate(p.seed.dims)}
    owner: dict[int, int | None] = dict(enumerate(p.owners))
    next_id = p.seed.k
    ledger: dict[tuple[int, int], int] = {}

    def owned_by(party: int, rid: int) -> None:
        if rid not in owner:
            raise ProtocolError(f"unknown register {rid}")
        if owner[rid] != party:
            raise ProtocolError(f"party {party} does not own register {rid}")

    for n, step in enumerate(p.steps):
        if isinstance(step, IsometryStep):
            if step.inputs is None:
                inputs = [r for r in regs if owner[r] == step.party]
            else:
                inputs = list(step.inputs)
            for r in inputs:
                owned_by(step.party, r)
            iso = LocalIsometry(step.party, step.matrix)
            din = math.prod(dims[r] for r in inputs)
            if iso.matrix.shape[1] != din:
                raise ProtocolError(
                    f"step {n}: isometry expects input dim {iso.matrix.shape[1]}, registers give {din}")
            outs = list(step.outputs) if step.outputs is not None else [iso.matrix.shape[0]]
            if math.prod(outs) != iso.matrix.shape[0]:
                raise ProtocolError(f"step {n}: output dims {outs} do not match matrix rows")
            axes = [regs.index(r) for r in inputs]
            rest = [i for i in range(len(regs)) if i not in axes]
            t = state.transpose(axes + rest).reshape(din, -1)
            t = (iso.matrix @ t).reshape(outs + [state.shape[i] for i in rest])
            new_ids = list(range(next_id, next_id + len(outs)))
            next_id += len(outs)
            for rid, d in zip(new_ids, outs):
                dims[rid] = d
                owner[rid] = step.party
            for r in inputs:
                del owner[r]
            regs = new_ids + [regs[i] for i in rest]
            state = t
        elif isinstance(step, SendStep):
            if step.src == step.dst:
                raise ProtocolError(f"step {n}: send from a party to itself")
            if not 0 <= step.dst < p.k:
                raise ProtocolError(f"step {n}: destination {step.dst} out of range")
            rid = step.register
            if rid is None:
                cands = [r for r in regs if owner[r] == step.src and dims[r] == 2 ** step.qubits]
                if not cands:
                    raise ProtocolError(f"step {n}: party {step.src} owns no {step.qubits}-qubit register")
                rid = cands[0]
            owned_by(step.src, rid)
            if dims[rid] != 2 ** step.qubits:
                raise ProtocolError(
                    f"step {n}: register {rid} has dim {dims[rid]}, not {step.qubits} qubits")
            owner[rid] = step.dst
            pair = (min(step.src, step.dst), max(step.src, step.dst))
            ledger[pair] = ledger.get(pair, 0) + step.qubits
        elif isinstance(step, DiscardStep):
            owned_by(step.party, step.register)
            owner[step.register] = None
        else:
            raise ProtocolError(f"step {n}: unknown step type {type(step).__name__}")

    order, party_dims = [], []
    for party in range(p.k):
        mine = sorted(r for r in regs if owner[r] == party)
        order += [regs.index(r) for r in mine]
        party_dims.append(math.prod(dims[r] for r in mine))
    dropped = [i for i, r in enumerate(regs) if owner[r] is None]
    if list(party_dims) != list(p.target.dims):
        raise ProtocolError(f"final party dims {party_dims} do not match target {list(p.target.dims)}")
    m = state.transpose(order + dropped).reshape(math.prod(party_dims), -1)
    target = p.target.vector if isinstance(p.target, PureState) else None
    if m.shape[1] > 1:
        # discarded registers that factor out leave a pure state behind
        u, s, _ = np.linalg.svd(m, full_matrices=False)
        if s.size < 2 or s[1] <= 1e-10 * s[0]:
            m = (u[:, :1] * s[0]).reshape(-1, 1)
            if target is not None:
                ov = np.vdot(m[:, 0], target)
                if abs(ov) > 0:
                    m = m * (ov / abs(ov))
    if m.shape[1] == 1:
        final = PureState(party_dims, m[:, 0])
        if target is not None:
            fid = float(min(1.0, abs(np.vdot(target, final.vector))))
        else:
            fid = float(min(1.0, math.sqrt(max(0.0, np.vdot(final.vector, p.target.matrix @ final.vector).real))))
    else:
        final = DensityOperator(party_dims, m @ m.conj().T)
        if target is not None:
            fid = float(min(1.0, math.sqrt(max(0.0, np.vdot(target, final.matrix @ target).real))))
        else:
            from .tensor_core import fidelity
            fid = fidelity(final, p.target)
    return SimulationResult(final, fid, p.size, sum(ledger.values()), ledger)


def _embedding(basis: np.ndarray, din: int) -> tuple[np.ndarray, list[int]]:
    """Isometry sending |i> to basis column i (i < r), padding inputs go elsewhere.

    When ``din`` exceeds the local dimension an extra flag qubit is attached:
    used inputs map to ``|alpha_i>|0>`` and padding inputs to ``|e_m>|1>``.
    """
    d, r = basis.shape
    if din <= d:
        cols = [basis]
        if din > r:
            comp = null_space(basis.conj().T) if r else np.eye(d)
            cols.append(comp[:, : din - r])
        return np.hstack(cols), [d]
    v = np.zeros((2 * d, din), dtype=complex)
    v[0::2, :r] = basis
    for m in range(din - r):
        v[2 * m + 1, r + m] = 1.0
    return v, [d, 2]


def _padded_seed(coefficients: np.ndarray) -> tuple[np.ndarray, list[int]]:
    n = [ceil_log2(r) for r in coefficients.shape]
    seed = np.zeros([2 ** q for q in n], dtype=complex)
    seed[tuple(slice(0, r) for r in coefficients.shape)] = coefficients
    return seed, n


def _local_steps(dec, n_qubits: Sequence[int]) -> list[Step]:
    steps: list[Step] = []
    for j, basis in enumerate(dec.bases):
        v, outs = _embedding(basis, 2 ** n_qubits[j])
        steps.append(IsometryStep(j, v, None, tuple(outs)))
        if len(outs) == 2:
            # the flag qubit is |0> on every occupied input, so dropping it keeps the state pure
            steps.append(DiscardStep(j, -1))
    return steps


def _bind_discards(p_steps: list[Step], seed_k: int) -> list[Step]:
    """Resolve ``DiscardStep(register=-1)`` to the flag register just created."""
    out, next_id = [], seed_k
    last_outputs: list[int] = []
    for s in p_steps:
        if isinstance(s, IsometryStep):
            n_out = len(s.outputs) if s.outputs is not None else 1
            last_outputs = list(range(next_id, next_id + n_out))
            next_id += n_out
            out.append(s)
        elif isinstance(s, DiscardStep) and s.register == -1:
            out.append(DiscardStep(s.party, last_outputs[-1]))
        else:
            out.append(s)
    return out


def canonical_seed(psi: PureState) -> GenerationProtocol:
    """Seed ``sum a_{i1..ik} |i1>...|ik>`` on ``ceil(log2 r_j)`` qubits per party,
    followed by local embeddings into the marginal eigenbases."""
    dec = support_decomposition(psi)
    seed, n = _padded_seed(dec.coefficients)
    steps = _bind_discards(_local_steps(dec, n), psi.k)
    return GenerationProtocol(psi.k, PureState(seed.shape, seed), list(range(psi.k)), steps, psi,
                              label="canonical_seed")


def qcomm_upper_protocol(psi: PureState) -> GenerationProtocol:
    """The party with the largest seed share prepares the whole canonical seed
    and sends every other party its share; ties go to the lowest index."""
    dec = support_decomposition(psi)
    seed, n = _padded_seed(dec.coefficients)
    preparer = int(np.argmax(n))
    owners = [preparer if n[j] > 0 else j for j in range(psi.k)]
    sends: list[Step] = [SendStep(preparer, j, n[j], j)
                         for j in range(psi.k) if j != preparer and n[j] > 0]
    steps = _bind_discards(sends + _local_steps(dec, n), psi.k)
    return GenerationProtocol(psi.k, PureState(seed.shape, seed), owners, steps, psi,
                              label="qcomm_upper")


def purification_from_psd(f: PsdFactorization) -> PureState:
    """Pure state on registers ``(X_t, X_t, r)`` per party whose first registers carry ``evaluate(f)``.

    Built as ``sum_i (x)_t sum_x |x>|x>|u^i_x>`` with ``u^i_x`` the i-th column of
    ``sqrt(C[t][x])``. ``renormalized`` is set when the factorization's total
    mass differs from one by more than 1e-6.
    """
    r = f.r
    parts = []
    for stack in f.factors:
        w, v = np.linalg.eigh(stack)
        if w.min() < -1e-10:
            raise InvariantError("non-PSD factor")
        root = np.einsum("xij,xj,xkj->xik", v, np.sqrt(np.clip(w, 0, None)), v.conj())
        d = stack.shape[0]
        blk = np.zeros((r, d, d, r), dtype=complex)
        for x in range(d):
            blk[:, x, x, :] = root[x].T          # blk[i, x, x, c] = root[x][c, i]
        parts.append(blk.reshape(r, -1))
    letters = "abcdefghijklmnopqrstuvwxyz"
    subscripts = ",".join("Z" + letters[t] for t in range(len(parts))) + "->" + letters[: len(parts)]
    amps = np.einsum(subscripts, *parts)
    mass = float(np.vdot(amps, amps).real)
    if mass <= 0:
        raise InvariantError("factorization evaluates to the zero tensor")
    dims = []
    for stack in f.factors:
        dims += [stack.shape[0], stack.shape[0], r]
    psi = PureState(dims, amps.reshape(dims) / math.sqrt(mass))
    psi.renormalized = abs(mass - 1.0) > 1e-6
    return psi


def psd_purification_parties(f: PsdFactorization) -> list[list[int]]:
    """Register groups turning a ``purification_from_psd`` output into ``k`` parties."""
    return [[3 * t, 3 * t + 1, 3 * t + 2] for t in range(f.k)]


@dataclass
class Truncation:
    state: PureState
    fidelity: float
    retained_mass: float
    kept: list[int]


def _restrict(psi: PureState, keep: Sequence[Sequence[int]]) -> Truncation:
    dec = support_decomposition(psi)
    bases = [dec.bases[j][:, list(keep[j])] for j in range(psi.k)]
    coeff = dec.coefficients[np.ix_(*[list(s) for s in keep])]
    mass = float(np.sum(np.abs(coeff) ** 2))
    t = coeff
    for j, B in enumerate(bases):
        t = np.moveaxis(np.tensordot(B, np.moveaxis(t, j, 0), axes=1), 0, j)
    phi = PureState(psi.dims, t / math.sqrt(mass))
    fid = float(min(1.0, abs(np.vdot(psi.vector, phi.vector))))
    return Truncation(phi, fid, mass, [len(s) for s in keep])


def truncate_pure(psi: PureState, eps: float) -> Truncation:
    """Keep each party's leading ``r_j^(eps/k)`` marginal eigenvectors and renormalize."""
    if not 0 < eps < 1:
        raise InvariantError(f"eps must lie in (0, 1), got {eps!r}")
    if psi.k == 1:
        return Truncation(psi, 1.0, 1.0, [1])
    ranks = [approx_schmidt_rank(psi, single_party_split(psi.k, j), eps / psi.k)
             for j in range(psi.k)]
    return _restrict(psi, [range(r) for r in ranks])


def subset_truncate(psi: PureState, subsets: Sequence[Sequence[int]]) -> tuple[PureState, float]:
    dec = support_decomposition(psi)
    if len(subsets) != psi.k:
        raise InvariantError(f"need {psi.k} subsets, got {len(subsets)}")
    for j, s in enumerate(subsets):
        if not len(s):
            raise InvariantError(f"empty subset for party {j}")
        if any(i < 0 or i >= dec.ranks[j] for i in s):
            raise InvariantError(f"subset for party {j} exceeds marginal rank {dec.ranks[j]}")
    tr = _restrict(psi, [sorted(set(s)) for s in subsets])
    return tr.state, tr.retained_mass


def standard_purification(rho: DensityOperator, party: int) -> PureState:
    """``sum_i sqrt(l_i) |e_i>|i>`` with the ancilla appended to ``party``'s register."""
    w, v = np.linalg.eigh(rho.matrix)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    keep = w > 1e-10 * w[0]
    w, v = w[keep], v[:, keep]
    anc = len(w)
    t = (v * np.sqrt(w)).reshape(list(rho.dims) + [anc])
    t = np.moveaxis(t, -1, party + 1)
    dims = list(rho.dims)
    dims[party] *= anc
    return PureState(dims, t.reshape(dims))


def evaluate_mass(f: PsdFactorization) -> float:
    return float(_hadamard_sum(f.factors).real.sum())
