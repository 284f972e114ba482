"""Command-line front end.

Every artifact is a JSON object carrying a ``manifest``: the subcommand, its
normalized configuration and digest, generator id, seeds, tool version and
input file digests. Thread count and output location are not part of the
manifest, so replaying a manifest reproduces the artifact byte for byte
whatever ``--threads`` is. Wall-clock duration goes only to the sidecar file
``<output>.run.json``.

Exit codes: 0 success, 2 invalid input (JSON diagnostics on stderr),
1 internal assertion.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .cone import RATIONAL, DistanceMatrix, DomainError, MetricViolation, StructureError
from .distribution import (
    coverage_report,
    constant_source,
    compare,
    default_threads,
    fingerprint,
    iid_source,
    invariance_check,
    uniform_edges,
)
from .formats import (
    FORMAT_VERSION,
    FormatError,
    dumps,
    fingerprint_to_json,
    load_fingerprint,
    load_matrix,
    load_triple,
    matrix_to_json,
    num_to_json,
    polytope_to_json,
)
from .polytope import DEFAULT_VERTEX_CAP, InadmissibleVector, VertexCapExceeded, build, dimensions, extremal_points
from .rng import GENERATOR_ID
from .sampler import BaseMeasure, GrowthConfig, UniversalSchedule, grow_random, grow_universal, random_graph_metric
from .universality import universality_defect

OUTPUT_DIR_ENV = "DISTCONE_OUTPUT_DIR"
# not part of the reproducible configuration
RUNTIME_KEYS = ("threads", "output", "pretty", "func", "command")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- subcommands ---------------------------------------------------------------

def _matrix_payload(r: DistanceMatrix, provenance: dict) -> dict:
    return matrix_to_json(r, provenance=provenance)


def cmd_gen_random(args, inputs):
    policy = {"vertex": "vertex_mixture", "vertex_mixture": "vertex_mixture",
              "har": "hit_and_run", "hit_and_run": "hit_and_run"}[args.policy]
    cfg = GrowthConfig(BaseMeasure.parse(args.gamma), policy, args.seed, args.burn_in)
    r = grow_random(cfg, args.steps)
    return _matrix_payload(r, {"generator": GENERATOR_ID, "seed": args.seed, "steps": args.steps,
                               "config": cfg.as_dict()})


def cmd_gen_universal(args, inputs):
    sched = UniversalSchedule(args.seed, args.dense_set, args.schedule)
    run = grow_universal(sched, args.steps, domain=RATIONAL if args.rational else "float")
    return _matrix_payload(run.matrix, {
        "generator": GENERATOR_ID, "seed": args.seed, "steps": args.steps,
        "schedule": sched.as_dict(), "max_projection_error": max(run.projection_errors),
    })


def cmd_gen_graph(args, inputs):
    r = random_graph_metric(args.n, args.p, args.seed)
    return _matrix_payload(r, {"generator": GENERATOR_ID, "seed": args.seed, "n": args.n, "p": args.p})


def cmd_extremal(args, inputs):
    r = inputs["matrix"]
    if not r.exact:
        r = DistanceMatrix._trusted(np.vectorize(Fraction, otypes=[object])(r.to_array()), RATIONAL)
    P = build(r)
    verts = extremal_points(P, cap=args.cap)
    out = polytope_to_json(P, verts)
    dim_a, dim_m = dimensions(P, cap=args.cap)
    out.update(num_vertices=len(verts), dim_admissible=dim_a, dim_compact=dim_m)
    return out


def cmd_check_universal(args, inputs):
    rep = universality_defect(inputs["matrix"], args.n, args.probes, args.seed)
    out = rep.as_dict()
    if args.epsilon is not None:
        out["epsilon"] = args.epsilon
        out["within_epsilon"] = rep.epsilon_achieved < args.epsilon
    return out


def cmd_fingerprint(args, inputs):
    T = inputs["triple"]
    hi = args.max if args.max is not None else float(T.metric.diameter)
    f = fingerprint(T, args.k, args.samples, uniform_edges(hi, args.bins), args.seed, threads=args.threads)
    return fingerprint_to_json(f)


def cmd_compare(args, inputs):
    return compare(inputs["f1"], inputs["f2"], alpha=args.alpha).as_dict()


def cmd_coverage(args, inputs):
    return coverage_report(inputs["matrix"], args.epsilon, args.N).as_dict()


def cmd_invariance(args, inputs):
    if "triple" in inputs:
        source = inputs["triple"]
    else:
        name, _, rest = args.source.partition(":")
        vals = [float(x) for x in rest.split(",")] if rest else []
        if name == "iid":
            source = iid_source(*(vals or [0.5, 1.0]))
        elif name == "constant":
            source = constant_source(*(vals or [1.0]))
        else:
            raise ValueError(f"unknown source {args.source!r}")
    rep = invariance_check(source, args.k, args.samples, args.seed, adversarial=args.adversarial)
    return rep.as_dict()


INPUTS = {
    "extremal": {"matrix": load_matrix},
    "check-universal": {"matrix": load_matrix},
    "coverage": {"matrix": load_matrix},
    "fingerprint": {"triple": load_triple},
    "invariance": {"triple": load_triple},
    "compare": {"f1": load_fingerprint, "f2": load_fingerprint},
}


# -- parser ----------------------------------------------------------------------

def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=_positive, default=argparse.SUPPRESS,
                        help="worker threads (default: available parallelism)")
    common.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS,
                        help="plain-text table on stdout instead of JSON")
    common.add_argument("-o", "--output", default=argparse.SUPPRESS, help="output file (default stdout)")

    p = _Parser(prog="distcone", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version",
                   version=f"distcone {__version__} (file formats {FORMAT_VERSION}, {GENERATOR_ID})")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("gen-random", parents=[common], help="Markov growth chain")
    s.add_argument("--steps", type=_positive, required=True)
    s.add_argument("--gamma", default="exp:1")
    s.add_argument("--policy", default="vertex", choices=["vertex", "vertex_mixture", "har", "hit_and_run"])
    s.add_argument("--burn-in", type=_positive, default=None)
    s.add_argument("--seed", type=_seed, required=True)
    s.set_defaults(func=cmd_gen_random)

    s = sub.add_parser("gen-universal", parents=[common], help="inductive universal construction")
    s.add_argument("--steps", type=_positive, required=True)
    s.add_argument("--schedule", default="diagonal", choices=["diagonal"])
    s.add_argument("--dense-set", default="halton", choices=["halton", "random"])
    s.add_argument("--rational", action="store_true")
    s.add_argument("--seed", type=_seed, required=True)
    s.set_defaults(func=cmd_gen_universal)

    s = sub.add_parser("gen-graph", parents=[common], help="random {1,2} graph metric")
    s.add_argument("--n", type=_positive, required=True)
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--seed", type=_seed, required=True)
    s.set_defaults(func=cmd_gen_graph)

    s = sub.add_parser("extremal", parents=[common], help="vertices of the admissible polytope")
    s.add_argument("matrix")
    s.add_argument("--cap", type=_positive, default=DEFAULT_VERTEX_CAP)
    s.set_defaults(func=cmd_extremal)

    s = sub.add_parser("check-universal", parents=[common], help="universality defect")
    s.add_argument("matrix")
    s.add_argument("--n", type=_positive, required=True)
    s.add_argument("--probes", type=_positive, default=200)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--seed", type=_seed, required=True)
    s.set_defaults(func=cmd_check_universal)

    s = sub.add_parser("fingerprint", parents=[common], help="fingerprint of a metric triple")
    s.add_argument("--triple", required=True)
    s.add_argument("--k", type=_positive, default=3)
    s.add_argument("--samples", type=_positive, default=10_000)
    s.add_argument("--bins", type=_positive, default=64)
    s.add_argument("--max", type=float, default=None, help="upper end of the bin grid (default diameter)")
    s.add_argument("--seed", type=_seed, required=True)
    s.set_defaults(func=cmd_fingerprint)

    s = sub.add_parser("compare", parents=[common], help="two-sample comparison of fingerprints")
    s.add_argument("f1")
    s.add_argument("f2")
    s.add_argument("--alpha", type=float, default=0.01)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("coverage", parents=[common], help="coverage condition of a matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--N", type=_positive, required=True)
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("invariance", parents=[common], help="permutation and shift invariance check")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--triple")
    g.add_argument("--source", help="iid:LO,HI or constant:C")
    s.add_argument("--k", type=_positive, default=3)
    s.add_argument("--samples", type=_positive, default=10_000)
    s.add_argument("--adversarial", action="store_true")
    s.add_argument("--seed", type=_seed, required=True)
    s.set_defaults(func=cmd_invariance)

    s = sub.add_parser("replay", parents=[common], help="re-run the manifest embedded in an artifact")
    s.add_argument("artifact")
    s.set_defaults(func=None)
    return p


# -- driver ----------------------------------------------------------------------

def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in RUNTIME_KEYS}


def _command_line(command: str, config: dict) -> str:
    parts = ["distcone", command]
    for key, val in config.items():
        if key in ("matrix", "f1", "f2", "artifact") and command in ("extremal", "check-universal", "compare"):
            parts.append(str(val))
        elif val is None or val is False:
            continue
        elif val is True:
            parts.append("--" + key.replace("_", "-"))
        else:
            flag = key if key == "N" else key.replace("_", "-")
            parts += [f"--{flag}", str(val)]
    return " ".join(parts)


def _manifest(command: str, config: dict, inputs: dict) -> dict:
    seeds = [config["seed"]] if "seed" in config else []
    return {
        "command": command,
        "command_line": _command_line(command, config),
        "config": config,
        "config_digest": hashlib.sha256(dumps({"command": command, "config": config}).encode()).hexdigest(),
        "generator": GENERATOR_ID,
        "seeds": seeds,
        "tool_version": __version__,
        "format_version": FORMAT_VERSION,
        "inputs": inputs,
    }


def _load_inputs(command: str, config: dict):
    loaded, digests = {}, {}
    for key, loader in INPUTS.get(command, {}).items():
        path = config.get(key)
        if path is None:
            continue
        digests[key] = {"path": str(path), "sha256": _digest(path)}
        loaded[key] = loader(path)
    return loaded, digests


def execute(command: str, config: dict, threads: int, expect_inputs: dict | None = None) -> bytes:
    """Run one subcommand from its configuration; returns the artifact bytes."""
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    args = argparse.Namespace(**config, threads=threads)
    loaded, digests = _load_inputs(command, config)
    if expect_inputs is not None and digests != expect_inputs:
        raise DomainError("input files differ from the ones recorded in the manifest")
    payload = sub.get_default("func")(args, loaded)
    payload["manifest"] = _manifest(command, config, digests)
    return dumps(payload).encode()


def _pretty(payload: dict) -> str:
    lines = []
    if "vertices" in payload:
        lines.append(f"{payload.get('num_vertices', len(payload['vertices']))} vertices")
        for v in payload["vertices"]:
            lines.append("  " + "  ".join(f"{str(x):>10}" for x in v))
    for key in sorted(payload):
        val = payload[key]
        if key in ("vertices", "manifest", "constraints", "witness_targets", "counts", "upper", "bin_edges"):
            continue
        if isinstance(val, dict):
            lines.append(f"{key}:")
            lines += [f"  {k:<20} {v}" for k, v in sorted(val.items())]
        else:
            lines.append(f"{key:<22} {val}")
    return "\n".join(lines) + "\n"


def _resolve_output(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _diagnose(kind: str, exc: BaseException) -> dict:
    out = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("source", "location"):
        if getattr(exc, attr, None):
            out[attr] = getattr(exc, attr)
    if isinstance(exc, MetricViolation):
        out["report"] = exc.report.as_dict()
    if isinstance(exc, FileNotFoundError):
        out["source"] = exc.filename
    return out


def _run(argv) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None) or default_threads()
    pretty = getattr(args, "pretty", False)
    output = getattr(args, "output", None)
    started = time.perf_counter()
    if args.command == "replay":
        art = json.loads(Path(args.artifact).read_text())
        man = art.get("manifest") if isinstance(art, dict) else None
        if not isinstance(man, dict) or "command" not in man:
            raise FormatError("no manifest in artifact", args.artifact)
        if man.get("tool_version") != __version__ or man.get("generator") != GENERATOR_ID:
            raise DomainError("artifact was produced by a different tool version or generator")
        command, config = man["command"], man["config"]
        data = execute(command, config, threads, man.get("inputs", {}))
        if output is None:
            identical = data == Path(args.artifact).read_bytes()
            sys.stdout.write(dumps({"artifact": args.artifact, "identical": identical}))
            return 0 if identical else 1
    else:
        config = _config(args)
        command = args.command
        data = execute(command, config, threads)
    if output is None:
        if pretty:
            sys.stdout.write(_pretty(json.loads(data)))
        else:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
        return 0
    path = _resolve_output(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    run = json.loads(data)["manifest"]
    run.update(duration_seconds=time.perf_counter() - started, threads=threads, output=str(path))
    path.with_name(path.name + ".run.json").write_text(dumps(run))
    if pretty:
        sys.stdout.write(_pretty(json.loads(data)))
    return 0


def main(argv=None) -> int:
    try:
        return _run(sys.argv[1:] if argv is None else argv)
    except (UsageError, FormatError, StructureError, MetricViolation, DomainError, InadmissibleVector,
            VertexCapExceeded, ValueError, OSError) as exc:
        sys.stderr.write(dumps(_diagnose("validation", exc)))
        return 2
    except AssertionError as exc:
        sys.stderr.write(dumps(_diagnose("internal", exc)))
        return 1


if __name__ == "__main__":
    sys.exit(main())
