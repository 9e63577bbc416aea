"""Command-line front end: ``consensus-rate <subcommand> ...``.

Exit codes: 0 success, 2 usage or invalid input, 3 capacity exceeded,
4 not enough usable simulation data.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .disconnected import RateResult, enumerate_maximal_collections, p_max_brute
from .errors import CapacityError, InsufficientDataError, InvalidInputError
from .graph import Graph, random_geometric_graph, read_graph
from .mincut import stoer_wagner
from .models import load_model
from .rate import gossip_rate, link_failure_rate, regular_gossip_rate, regular_link_failure_rate
from .rng import stream

EXIT_OK, EXIT_USAGE, EXIT_CAPACITY, EXIT_DATA = 0, 2, 3, 4
NATS_PER_BIT = math.log(2.0)


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """What was run, with which resolved settings; hashed into every output."""

    subcommand: str
    config: dict[str, Any]
    seed: int | None = None
    version: str = __version__
    outputs: list[str] = field(default_factory=list)

    @property
    def digest(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k != "outputs"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {**asdict(self), "hash": self.digest}


def _finite(x: float | None):
    if x is None:
        return None
    return x if math.isfinite(x) else "inf"


def _dump_json(obj: dict, manifest: RunManifest, path: str | None):
    text = json.dumps({"manifest": manifest.to_json(), **obj}, indent=2, sort_keys=False) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _dump_csv(header: Sequence[str], rows, manifest: RunManifest, path: str | None):
    buf = io.StringIO()
    buf.write(f"# manifest {manifest.digest} {json.dumps(manifest.to_json(), sort_keys=True, default=str)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    if path:
        Path(path).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _in_units(rate: float, bits: bool) -> float:
    return rate / NATS_PER_BIT if bits and math.isfinite(rate) else rate


def _rate_json(res: RateResult, bits: bool) -> dict:
    partition = None
    w = res.witness
    if w is not None and hasattr(w, "partition"):
        partition = [list(w.partition[0]), list(w.partition[1])]
    return {
        "rate": _finite(_in_units(res.rate, bits)),
        "units": "bits" if bits else "nats",
        "p_max": res.p_max,
        "method": res.method,
        "witness_partition": partition,
    }


# -- subcommands ----------------------------------------------------------------------


def _parse_closed_form(text: str) -> tuple[int, int, float | None]:
    kind, _, rest = text.partition(":")
    parts = rest.split(",")
    if kind != "regular" or len(parts) not in (2, 3):
        raise InvalidInputError("--closed-form expects regular:<n>,<d>[,<p>]")
    try:
        n, d = int(parts[0]), int(parts[1])
        p = float(parts[2]) if len(parts) == 3 else None
    except ValueError:
        raise InvalidInputError("--closed-form expects regular:<n>,<d>[,<p>]") from None
    return n, d, p


def cmd_rate(args) -> int:
    config = {"model": args.model, "bits": args.bits, "p": args.p}
    if args.closed_form:
        n, d, p = _parse_closed_form(args.closed_form)
        config["closed_form"] = args.closed_form
        if args.model == "gossip":
            res = regular_gossip_rate(n, d)
        else:
            p = args.p if p is None else p
            if p is None:
                raise InvalidInputError("link-failure closed form needs p (regular:n,d,p or --p)")
            res = regular_link_failure_rate(n, d, p)
    else:
        if not args.graph:
            raise InvalidInputError("rate needs --graph or --closed-form")
        g = read_graph(args.graph)
        config.update(graph=str(args.graph), graph_sha256=_file_digest(args.graph))
        p = args.p
        if args.model == "gossip":
            if p is None and g.attr is None:
                p = 1.0 / g.m
            res = gossip_rate(g, p)
        else:
            if p is None and g.attr is None:
                raise InvalidInputError("link-failure needs per-edge probabilities in the graph file or --p")
            res = link_failure_rate(g, p)
    _dump_json(_rate_json(res, args.bits), RunManifest("rate", config), args.out)
    return EXIT_OK


def cmd_mincut(args) -> int:
    g = read_graph(args.graph)
    costs = None if g.attr is not None else np.ones(g.m)
    cut = stoer_wagner(g, costs)
    config = {"graph": str(args.graph), "graph_sha256": _file_digest(args.graph)}
    _dump_json(cut.to_json(), RunManifest("mincut", config), args.out)
    return EXIT_OK


def cmd_enumerate(args) -> int:
    model = load_model(args.model_file)
    maximal = enumerate_maximal_collections(model, args.cap)
    config = {"model_file": str(args.model_file), "model_sha256": _file_digest(args.model_file), "cap": args.cap}
    best = p_max_brute(model, args.cap)
    body = {
        "p_max": best.p_max,
        "rate": _finite(best.rate),
        "collections": [c.to_json() for c in maximal],
    }
    _dump_json(body, RunManifest("enumerate", config), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import estimate_rate_empirical, exact_disconnect_series

    model = load_model(args.model_file)
    if args.k_min < 1 or args.k_max < args.k_min or args.k_step < 1:
        raise InvalidInputError("need 1 <= k-min <= k-max and k-step >= 1")
    ks = list(range(args.k_min, args.k_max + 1, args.k_step))
    config = {
        "model_file": str(args.model_file),
        "model_sha256": _file_digest(args.model_file),
        "k": ks,
        "epsilon": args.epsilon,
        "trials": args.trials,
        "fast_graph_path": args.fast_graph_path,
        "bits": args.bits,
    }
    # exact quantities are optional extras; large models simply go without
    try:
        p_max = p_max_brute(model).p_max
    except CapacityError:
        p_max = None
    try:
        exact = exact_disconnect_series(model, ks[-1])
    except CapacityError:
        exact = None
    manifest = RunManifest("simulate", config, seed=args.seed)
    if args.out:
        manifest.outputs.append(str(args.out))
    if args.summary:
        manifest.outputs.append(str(args.summary))

    try:
        emp = estimate_rate_empirical(
            model, ks, args.epsilon, args.trials, args.seed,
            fast_graph_path=args.fast_graph_path, threads=args.threads, p_max=p_max,
        )
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    rows = []
    for e in emp.estimates:
        dp = float(exact[e.k]) if exact is not None and args.epsilon == 1 else None
        rows.append((e.k, e.p_hat, e.ci_low, e.ci_high, dp))
    _dump_csv(("k", "p_hat", "ci_low", "ci_high", "exact_dp"), rows, manifest, args.out)
    summary = {
        "empirical_rate": _in_units(emp.rate, args.bits),
        "stderr": _in_units(emp.stderr, args.bits),
        "units": "bits" if args.bits else "nats",
        "chi2_dof": emp.chi2_dof,
        "used_k": emp.used_k,
        "refused_k": emp.refused_k,
        "exact_rate": _finite(_in_units(-math.log(p_max), args.bits)) if p_max else None,
    }
    text = json.dumps({"manifest": manifest.to_json(), **summary}, indent=2) + "\n"
    if args.summary:
        Path(args.summary).write_text(text)
    elif args.out:
        sys.stdout.write(text)
    else:
        sys.stderr.write(text)
    return EXIT_OK


def _detect_graph(cfg: dict, base: Path) -> Graph:
    if "graph" in cfg:
        path = Path(cfg["graph"])
        return read_graph(path if path.is_absolute() else base / path)
    gen = cfg.get("generator")
    if not gen:
        raise InvalidInputError("detect config needs 'graph' or 'generator'")
    g, _ = random_geometric_graph(int(gen["n"]), int(gen["edges"]), stream(int(gen.get("seed", 0)), 0x6E0))
    return g


def _powers_from_file(g: Graph, path: Path) -> np.ndarray:
    """Per-edge online probabilities from an ``allocate`` output."""
    data = json.loads(Path(path).read_text())
    probs = {(int(e["i"]), int(e["j"])): float(e["P_ij"]) for e in data["edges"]}
    if set(probs) != set(g.edges):
        raise InvalidInputError(f"{path}: allocation edges do not match the detection graph")
    return np.array([probs[e] for e in g.edges])


_DETECT_KEYS = {"graph", "generator", "m", "sigma2", "horizon", "trials", "seed", "power_file",
                "link_p", "hypothesis", "average_hypotheses"}


def cmd_detect(args) -> int:
    from .detect import DetectionConfig, run_detection

    cfg_path = Path(args.config)
    try:
        cfg = json.loads(cfg_path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{cfg_path}: {exc}") from None
    unknown = set(cfg) - _DETECT_KEYS
    if unknown:
        raise InvalidInputError(f"unknown detect config keys: {sorted(unknown)}")
    g = _detect_graph(cfg, cfg_path.parent)
    power_file = args.power_file or cfg.get("power_file")
    if power_file:
        pf = Path(power_file)
        if not pf.is_absolute() and not args.power_file:
            pf = cfg_path.parent / pf
        link_p = _powers_from_file(g, pf)
    elif "link_p" in cfg:
        link_p = np.broadcast_to(np.asarray(cfg["link_p"], dtype=float), (g.m,))
    else:
        raise InvalidInputError("detect needs a power allocation (--power-file / power_file) or link_p")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    dc = DetectionConfig(
        graph=g,
        link_p=tuple(float(x) for x in link_p),
        m=float(cfg["m"]),
        sigma2=float(cfg.get("sigma2", 1.0)),
        horizon=int(cfg["horizon"]),
        trials=int(cfg["trials"]),
        seed=seed,
        hypothesis=cfg.get("hypothesis", "H1"),
        average_hypotheses=bool(args.average_hypotheses or cfg.get("average_hypotheses", False)),
        threads=args.threads,
    )
    config = {
        "config": str(cfg_path),
        "config_sha256": _file_digest(cfg_path),
        "power_file": str(power_file) if power_file else None,
        "power_sha256": _file_digest(pf) if power_file else None,
        "average_hypotheses": dc.average_hypotheses,
    }
    manifest = RunManifest("detect", config, seed=seed, outputs=[str(args.out)] if args.out else [])
    trace = run_detection(dc)
    rows = [
        (int(k), float(e), float(lo), float(hi))
        for k, e, lo, hi in zip(trace.k, trace.worst_error, trace.ci_low, trace.ci_high)
    ]
    _dump_csv(("k", "worst_error", "ci_low", "ci_high"), rows, manifest, args.out)
    return EXIT_OK


def cmd_allocate(args) -> int:
    from .power import FadingNetwork, initial_allocation, optimize_allocation

    g = read_graph(args.graph)
    if g.attr is None:
        raise InvalidInputError("allocate needs per-edge distances (or K with --attr K) in the graph file")
    attr = g.attr_vector()
    K = attr if args.attr == "K" else args.scale * attr**args.alpha
    if (K <= 0).any():
        raise InvalidInputError("every K must be positive")
    gen = stream(args.seed, 0xA110C) if args.jitter else None
    net0 = initial_allocation(g, K, args.istar, jitter=args.jitter, rng=gen)
    res = optimize_allocation(net0, mu=args.mu, I_star=args.istar, beta=args.beta, iters=args.iters)
    config = {
        "graph": str(args.graph),
        "graph_sha256": _file_digest(args.graph),
        "attr": args.attr,
        "scale": args.scale,
        "alpha": args.alpha,
        "istar": args.istar,
        "mu": args.mu,
        "beta": args.beta,
        "iters": args.iters,
        "jitter": args.jitter,
    }
    body = res.to_json()
    body["initial_total_power"] = net0.total_power
    _dump_json(body, RunManifest("allocate", config, seed=args.seed), args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="consensus-rate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", help="rate of consensus via min-cut or closed form")
    p.add_argument("--model", choices=("gossip", "link-failure"), required=True)
    p.add_argument("--graph", help="graph file; edge attributes are link probabilities")
    p.add_argument("--p", type=float, help="same probability on every link")
    p.add_argument("--closed-form", metavar="regular:N,D[,P]")
    p.add_argument("--bits", action="store_true", help="report the rate in bits instead of nats")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("mincut", help="global minimum cut; edge attributes are costs")
    p.add_argument("--graph", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mincut)

    p = sub.add_parser("enumerate", help="list maximal disconnected collections")
    p.add_argument("--model-file", required=True)
    p.add_argument("--cap", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("simulate", help="Monte Carlo tail estimates and empirical rate")
    p.add_argument("--model-file", required=True)
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--k-step", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast-graph-path", action=argparse.BooleanOptionalAction, default=None,
                   help="count disconnected edge unions instead of multiplying matrices (epsilon = 1 only)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--bits", action="store_true")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--summary", help="JSON summary path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="consensus+innovations detection error curve")
    p.add_argument("--config", required=True)
    p.add_argument("--power-file", help="allocation JSON written by 'allocate'")
    p.add_argument("--seed", type=int)
    p.add_argument("--average-hypotheses", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("allocate", help="minimum-power allocation reaching a target rate")
    p.add_argument("--graph", required=True)
    p.add_argument("--attr", choices=("distance", "K"), default="distance")
    p.add_argument("--scale", type=float, default=6.25, help="K = scale * d^alpha")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--istar", type=float, required=True)
    p.add_argument("--mu", type=float, default=500.0)
    p.add_argument("--beta", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.0, help="relative random spread of the initial powers")
    p.add_argument("--out")
    p.set_defaults(func=cmd_allocate)
    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (InvalidInputError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(dispatch())
