"""Command-line entry point.

Each command loads JSON inputs, runs an analysis, prints a tab-delimited
summary to stdout and, with ``--out``, writes a JSON report plus witness files
beside it. ``--plot`` renders figures next to the report.

Exit codes: 0 success, 1 internal error, 2 invalid input, 3 purification
mismatch, 4 protocol violation.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, states
from .complexity import (
    ComplexityReport,
    PurificationError,
    comm_corr_consistency,
    cover_for_state,
    marginal_complexity,
    marginal_complexity_eps,
    purification_complexity_bounds,
    qcomm_mixed_bounds,
    qcomm_pure_bounds,
    qcorr_classical_bounds,
    qcorr_eps_classical,
    qcorr_eps_pure_bounds,
    qcorr_eps_pure_mixed_relation,
    qcorr_mixed_bounds,
)
from .psd_rank import FitOptions, flattening_ranks, psd_rank_lower
from .serialization import dumps, load, save
from .spectral import marginal_ranks, marginal_spectra
from .synthesis import (
    GenerationProtocol,
    ProtocolError,
    canonical_seed,
    qcomm_upper_protocol,
    simulate_protocol,
)
from .tensor_core import ClassicalDistribution, DensityOperator, InvariantError, PureState

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_PURIFICATION, EXIT_PROTOCOL = 0, 1, 2, 3, 4
VERIFY_EPS = 1e-8


class _Run:
    """Resolved configuration plus the output locations derived from ``--out``."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out) if args.out else None
        if self.out is not None:
            self.out.parent.mkdir(parents=True, exist_ok=True)
        stem = self.out.with_suffix("") if self.out else Path(f"{args.command}")
        self.stem = stem
        self.written: dict[str, str | None] = {}
        self.figures: list[str] = []

    @property
    def fit_options(self) -> FitOptions:
        a = self.args
        return FitOptions(restarts=a.restarts, max_iters=a.iters, rng_seed=a.seed, tol=a.tol)

    def config(self) -> dict:
        a = self.args
        cfg = {"command": a.command, "input": a.input, "eps": a.eps,
               "restarts": a.restarts, "iters": a.iters, "seed": a.seed, "tol": a.tol,
               "brute_cover": a.brute_cover, "candidates": list(a.candidate or []),
               "out": a.out, "plot": a.plot}
        if a.command == "verify":
            cfg["target"] = a.target
        return cfg

    def witness(self, name: str, obj) -> str | None:
        if self.out is None:
            self.written[name] = None
            return None
        path = self.stem.parent / f"{self.stem.name}.{name}.json"
        save(obj, path)
        self.written[name] = path.name
        return path.name

    def figure(self, name: str) -> Path:
        path = self.stem.parent / f"{self.stem.name}.{name}.png"
        self.figures.append(path.name)
        return path

    def finish(self, results: dict, summary: list[tuple[str, object]]) -> None:
        report = {"tool": "qcorrcomm", "version": __version__, "config": self.config(),
                  "results": results, "witnesses": self.written, "figures": self.figures}
        if self.out is not None:
            self.out.write_text(dumps(report))
        for key, value in summary:
            print(f"{key}\t{value}")


def _interval(rep) -> str:
    return f"[{rep.lower}, {rep.upper}]"


def _load_as(path, kind, what: str):
    obj = load(path)
    if not isinstance(obj, kind):
        raise InvariantError(f"{path}: expected a {what}, found {type(obj).__name__}")
    return obj


def _pure_results(run: _Run, psi: PureState) -> tuple[dict, list]:
    m = marginal_complexity(psi)
    qcomm = qcomm_pure_bounds(psi)
    qcorr = ComplexityReport("qcorr_pure", m, m, m, "canonical_seed", ["exact for pure states"])
    consistent = comm_corr_consistency(qcorr, qcomm, psi.k)
    seed = canonical_seed(psi)
    qcorr.witness = run.witness("canonical_seed", seed)
    qcomm.witness = run.witness("qcomm_protocol", qcomm.witness_data)
    res = {"dims": list(psi.dims), "marginal_ranks": marginal_ranks(psi), "m": m,
           "qcorr": qcorr.to_dict(), "qcomm": qcomm.to_dict(), "consistent": consistent}
    summary = [("m", m), ("qcorr", m), ("qcomm", _interval(qcomm)),
               ("consistent", consistent)]
    eps = run.args.eps
    if eps is not None:
        sandwich = qcorr_eps_pure_bounds(psi, eps)
        sandwich.witness = run.witness("truncation", sandwich.witness_data.state)
        cover = cover_for_state(psi, eps, brute_force=run.args.brute_cover)
        res["m_eps"] = marginal_complexity_eps(psi, eps)
        res["qcorr_eps_pure"] = sandwich.to_dict()
        res["cover"] = {"subsets": cover.subsets, "R": cover.R, "retained_mass": cover.retained_mass,
                        "exact": cover.exact, "stated_bound": cover.stated_bound,
                        "certified_bound": cover.certified_bound}
        summary += [("m_eps", res["m_eps"]), ("qcorr_eps_pure", _interval(sandwich))]
        if eps < 1 / psi.k:
            rel = qcorr_eps_pure_mixed_relation(psi, eps)
            res["qcorr_eps"] = rel.to_dict()
            summary.append(("qcorr_eps", _interval(rel)))
    if run.args.plot:
        from .plotting import plot_marginal_spectra
        plot_marginal_spectra(marginal_spectra(psi), run.figure("spectra"), eps)
    return res, summary


def cmd_analyze_pure(run: _Run) -> int:
    psi = _load_as(run.args.input, PureState, "pure state")
    res, summary = _pure_results(run, psi)
    run.finish(res, summary)
    return EXIT_OK


def cmd_analyze_dist(run: _Run) -> int:
    p = _load_as(run.args.input, ClassicalDistribution, "distribution")
    opts = run.fit_options
    rep = qcorr_classical_bounds(p, opts)
    rep.witness = run.witness("factorization", rep.witness_data) if rep.witness_data else None
    res = {"dims": list(p.dims),
           "flattening_ranks": {",".join(map(str, key)): v for key, v in flattening_ranks(p).items()},
           "psd_rank_lower": psd_rank_lower(p), "psd_rank_upper": rep.details.get("psd_rank_upper", 1),
           "qcorr": rep.to_dict()}
    summary = [("psd_rank", f"[{res['psd_rank_lower']}, {res['psd_rank_upper']}]"),
               ("qcorr", _interval(rep))]
    eps = run.args.eps
    if eps is not None:
        if p.k == 2:
            approx = qcorr_eps_classical(p, eps, opts)
            approx.witness = run.witness("approx_factorization", approx.witness_data.factorization)
            res["qcorr_eps"] = approx.to_dict()
            summary.append(("qcorr_eps", _interval(approx)))
        else:
            res["qcorr_eps"] = None
            summary.append(("qcorr_eps", "skipped: needs two parties"))
    if run.args.plot and p.k > 1:
        from .plotting import plot_fit_residuals
        tried = {int(r): v for r, v in rep.details.get("ranks_tried", {}).items()}
        plot_fit_residuals(tried, run.figure("fit"), opts.residual_target)
    run.finish(res, summary)
    return EXIT_OK


def _as_pure(rho: DensityOperator) -> PureState:
    w, v = np.linalg.eigh(rho.matrix)
    vec = v[:, -1]
    ph = vec[np.argmax(np.abs(vec))]
    return PureState(rho.dims, (vec * abs(ph) / ph).reshape(rho.dims))


def cmd_analyze_mixed(run: _Run) -> int:
    rho = _load_as(run.args.input, DensityOperator, "density operator")
    cands = [_load_as(c, PureState, "pure candidate") for c in run.args.candidate or []]
    opts = run.fit_options
    r = purification_complexity_bounds(rho, cands)
    qcorr = qcorr_mixed_bounds(rho, cands, opts)
    qcomm = qcomm_mixed_bounds(rho, cands, qcorr, opts)
    consistent = comm_corr_consistency(qcorr, qcomm, rho.k)
    r.witness = qcorr.witness = run.witness("purification", r.witness_data)
    qcomm.witness = run.witness("qcomm_protocol", qcomm.witness_data)
    res = {"dims": list(rho.dims), "rank": rho.rank(), "r": r.to_dict(), "qcorr": qcorr.to_dict(),
           "qcomm": qcomm.to_dict(), "consistent": consistent}
    summary = [("r", _interval(r)), ("qcorr", _interval(qcorr)), ("qcomm", _interval(qcomm)),
               ("consistent", consistent)]
    if rho.rank() == 1:
        pure, extra = _pure_results(run, _as_pure(rho))
        res["pure"] = pure
        summary += [(f"pure.{k}", v) for k, v in extra]
    run.finish(res, summary)
    return EXIT_OK


def cmd_verify(run: _Run) -> int:
    proto = load(run.args.input)
    if not isinstance(proto, GenerationProtocol):
        raise InvariantError(f"{run.args.input}: expected a protocol")
    if run.args.target:
        proto.target = load(run.args.target)
    eps = run.args.eps if run.args.eps is not None else VERIFY_EPS
    sim = simulate_protocol(proto)
    passed = sim.fidelity >= 1 - eps
    res = {"label": proto.label, "fidelity": sim.fidelity, "size": sim.size,
           "qubits_per_party": proto.qubits_per_party, "communication": sim.communication,
           "ledger": {f"{a}-{b}": c for (a, b), c in sorted(sim.ledger.items())},
           "threshold": 1 - eps, "passed": passed}
    run.finish(res, [("fidelity", f"{sim.fidelity:.12f}"), ("size", sim.size),
                     ("communication", sim.communication), ("passed", passed)])
    if not passed:
        print(f"fidelity {sim.fidelity:.3e} below threshold {1 - eps}", file=sys.stderr)
        return EXIT_PROTOCOL
    return EXIT_OK


EXAMPLES = {
    "ghz": lambda: states.ghz(3),
    "w": lambda: states.w_state(3),
    "epr": states.epr,
    "product": lambda: states.product([2, 2, 2]),
    "psi0": states.psi0,
    "rho0": states.rho0,
    "correlated-bits": lambda: states.correlated_bits(2),
    "ghz-dist": lambda: states.correlated_bits(3),
    "product-dist": lambda: states.product_distribution([0.25, 0.75], [0.5, 0.5]),
    "ghz-canonical": lambda: canonical_seed(states.ghz(3)),
    "ghz-qcomm": lambda: qcomm_upper_protocol(states.ghz(3)),
}


def cmd_example(args: argparse.Namespace) -> int:
    obj = EXAMPLES[args.name]()
    if args.out:
        save(obj, args.out)
    else:
        from .serialization import to_json
        sys.stdout.write(dumps(to_json(obj)))
    return EXIT_OK


def _eps(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"eps must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    d = FitOptions()
    parser = argparse.ArgumentParser(prog="qcorrcomm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", help="input JSON file")
    common.add_argument("--eps", type=_eps, default=None, help="approximation parameter in (0, 1)")
    common.add_argument("--restarts", type=int, default=d.restarts)
    common.add_argument("--iters", type=int, default=d.max_iters)
    common.add_argument("--seed", type=int, default=d.rng_seed, help="RNG seed for the fitter")
    common.add_argument("--tol", type=float, default=d.tol)
    common.add_argument("--brute-cover", action="store_true",
                        help="exhaustive product cover instead of the greedy one")
    common.add_argument("--candidate", action="append", metavar="PATH",
                        help="candidate purification (repeatable)")
    common.add_argument("--out", metavar="PATH", help="write the JSON report here")
    common.add_argument("--plot", action="store_true", help="render figures beside the report")

    sub.add_parser("analyze-pure", parents=[common], help="pure-state complexities")
    sub.add_parser("analyze-dist", parents=[common], help="classical distribution bounds")
    sub.add_parser("analyze-mixed", parents=[common], help="mixed-state bounds from purifications")
    v = sub.add_parser("verify", parents=[common], help="simulate a generation protocol")
    v.add_argument("--target", metavar="PATH", help="override the protocol's declared target")
    ex = sub.add_parser("example", help="write a built-in fixture as JSON")
    ex.add_argument("name", choices=sorted(EXAMPLES))
    ex.add_argument("--out", metavar="PATH")
    return parser


COMMANDS = {"analyze-pure": cmd_analyze_pure, "analyze-dist": cmd_analyze_dist,
            "analyze-mixed": cmd_analyze_mixed, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "example":
            return cmd_example(args)
        return COMMANDS[args.command](_Run(args))
    except PurificationError as e:
        print(f"purification mismatch: {e}", file=sys.stderr)
        return EXIT_PURIFICATION
    except ProtocolError as e:
        print(f"protocol violation: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    except InvariantError as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
