"""Command line front end.

Subcommands: explain one target against a model, run benchmark cases,
check an external model server's protocol compliance, and dump a unit's
Gram matrix.  Option precedence is flags over ``--config`` JSON over
built-in defaults.  Exit codes: 0 ok, 2 input error, 3 model or protocol
error, 4 degenerate output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .benchmarks import CASE_IDS, default_case, run_case, write_csv, write_json
from .explain import (
    ExplainRequest,
    explain,
    explanation_obj,
    walk_group_structure,
)
from .graphs import Graph, GraphSeries, UnitId, parse_graph, parse_series
from .kernels import DegenerateOutputError, KernelConfig, unit_gram
from .models import ModelError, resolve_model
from .perturb import (
    GroupStructure,
    PerturbationScheme,
    RemoveEdges,
    RemoveNodes,
    generate,
    scheme_from_obj,
)
from .solvers import SolverConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MODEL = 3
EXIT_DEGENERATE = 4

_UNIT_KINDS = {"node": "node", "edge": "edge", "node-time": "node_time"}

# --scheme presets; positional parameters after the colon.
_SCHEME_PRESETS = {
    "remove-nodes": ("remove_nodes", (("k", int),)),
    "remove-edges": ("remove_edges", (("k", int),)),
    "feature-noise": ("feature_noise", (("node_fraction", float), ("noise_std", float))),
    "walk-remove": ("walk_remove_nodes", (("walk_len", int),)),
    "walk-noise": ("walk_feature_noise", (("walk_len", int), ("noise_std", float))),
}

# config-file key -> argparse dest (identity unless noted)
_CONFIG_KEYS = {
    "graph": "graph",
    "series": "series",
    "model": "model",
    "units": "units",
    "scheme": "scheme",
    "m_samples": "m_samples",
    "seed": "seed",
    "method": "method",
    "lambda": "lam",
    "mu": "mu",
    "groups": "groups",
    "jobs": "jobs",
    "methods": "methods",
    "seeds": "seeds",
    "out": "out",
    "case": "case",
    "unit": "unit",
    "timeout": "timeout",
}


class CliError(Exception):
    """Carries the exit code and the machine-parsable error name."""

    def __init__(self, code: int, name: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.name = name
        self.detail = detail


def _input_error(detail: str) -> CliError:
    return CliError(EXIT_INPUT, "input_error", detail)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise _input_error("config file must hold a JSON object")
    unknown = sorted(set(obj) - set(_CONFIG_KEYS))
    if unknown:
        raise _input_error(f"unknown config keys: {', '.join(unknown)}")
    return obj


def _opt(args: argparse.Namespace, config: dict, key: str, default=None):
    """flag > config > default"""
    dest = _CONFIG_KEYS[key]
    value = getattr(args, dest, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _resolve_jobs(args: argparse.Namespace, config: dict) -> int:
    jobs = _opt(args, config, "jobs")
    if jobs is None:
        env = os.environ.get("HSIC_EXPLAIN_JOBS")
        if env is not None:
            try:
                jobs = int(env)
            except ValueError:
                raise _input_error(f"HSIC_EXPLAIN_JOBS is not an integer: {env!r}")
        else:
            jobs = os.cpu_count() or 1
    jobs = int(jobs)
    if jobs < 1:
        raise _input_error("jobs must be >= 1")
    return jobs


def _load_target(args: argparse.Namespace, config: dict) -> Graph | GraphSeries:
    graph_path = _opt(args, config, "graph")
    series_path = _opt(args, config, "series")
    if (graph_path is None) == (series_path is None):
        raise _input_error("exactly one of --graph and --series is required")
    path = graph_path if graph_path is not None else series_path
    with open(path) as fh:
        text = fh.read()
    return parse_graph(text) if graph_path is not None else parse_series(text)


def _resolve_unit_kind(args: argparse.Namespace, config: dict) -> str:
    name = _opt(args, config, "units", "node")
    kind = _UNIT_KINDS.get(name)
    if kind is None:
        raise _input_error(f"unknown unit kind {name!r}; choices: {sorted(_UNIT_KINDS)}")
    return kind


def _resolve_scheme(args: argparse.Namespace, config: dict, unit_kind: str) -> PerturbationScheme:
    text = _opt(args, config, "scheme")
    m_samples = _opt(args, config, "m_samples")
    seed = _opt(args, config, "seed")
    if text is None:
        kind = RemoveEdges(1) if unit_kind == "edge" else RemoveNodes(2)
        return PerturbationScheme(
            kind,
            m_samples=201 if m_samples is None else int(m_samples),
            seed=0 if seed is None else int(seed),
        )
    if isinstance(text, dict):
        obj = dict(text)
    else:
        text = text.strip()
        if text.startswith("{"):
            obj = json.loads(text)
            if not isinstance(obj, dict):
                raise _input_error("scheme JSON must be an object")
        else:
            name, _, argstr = text.partition(":")
            preset = _SCHEME_PRESETS.get(name)
            if preset is None:
                raise _input_error(
                    f"unknown scheme preset {name!r}; choices: {sorted(_SCHEME_PRESETS)}"
                )
            kind_name, params = preset
            raw = [p for p in argstr.split(",") if p] if argstr else []
            if len(raw) != len(params):
                names = ",".join(p[0] for p in params)
                raise _input_error(f"scheme preset {name!r} needs values {names}")
            obj = {"kind": kind_name}
            for (pname, conv), value in zip(params, raw):
                try:
                    obj[pname] = conv(value)
                except ValueError:
                    raise _input_error(f"bad value for {pname}: {value!r}")
    if m_samples is not None:
        obj["m_samples"] = int(m_samples)
    if seed is not None:
        obj["seed"] = int(seed)
    return scheme_from_obj(obj)


def _resolve_groups(args: argparse.Namespace, config: dict, target, unit_kind: str, seed: int):
    text = _opt(args, config, "groups")
    if text is None:
        return None
    if text.startswith("walks:"):
        rest = text[len("walks:"):]
        parts = rest.split(",")
        if len(parts) != 2:
            raise _input_error("groups walks preset needs walks:<n>,<len>")
        try:
            n_walks, walk_len = int(parts[0]), int(parts[1])
        except ValueError:
            raise _input_error(f"bad walks parameters: {rest!r}")
        return walk_group_structure(target, unit_kind, n_walks, walk_len, seed=seed)
    if text.startswith("file:"):
        path = text[len("file:"):]
        with open(path) as fh:
            obj = json.load(fh)
        if not isinstance(obj, list) or not all(isinstance(g, list) for g in obj):
            raise _input_error("groups file must hold a JSON list of lists of unit keys")
        try:
            return GroupStructure(
                tuple(tuple(UnitId.from_key(k) for k in grp) for grp in obj)
            )
        except (TypeError, ValueError) as exc:
            raise _input_error(f"bad groups file: {exc}")
    raise _input_error("groups must be walks:<n>,<len> or file:<path>")


def _build_request(args: argparse.Namespace, config: dict) -> ExplainRequest:
    model_spec = _opt(args, config, "model")
    if model_spec is None:
        raise _input_error("--model is required")
    target = _load_target(args, config)
    unit_kind = _resolve_unit_kind(args, config)
    scheme = _resolve_scheme(args, config, unit_kind)
    model = resolve_model(model_spec)
    method = _opt(args, config, "method", "l1")
    lam = _opt(args, config, "lambda")
    mu = _opt(args, config, "mu")
    solver = SolverConfig(
        lam=1e-3 if lam is None else float(lam),
        mu=0.0 if mu is None else float(mu),
    )
    groups = _resolve_groups(args, config, target, unit_kind, scheme.seed)
    return ExplainRequest(
        target=target,
        model=model,
        unit_kind=unit_kind,
        scheme=scheme,
        kernels=KernelConfig(),
        method=method,
        solver=solver,
        groups=groups,
        jobs=_resolve_jobs(args, config),
    )


def cmd_explain(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    req = _build_request(args, config)
    result = explain(req)
    print(json.dumps(explanation_obj(result, req), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    case_id = _opt(args, config, "case")
    if args.all == (case_id is not None):
        raise _input_error("exactly one of --case and --all is required")
    if case_id is not None and case_id not in CASE_IDS:
        raise _input_error(f"unknown case id {case_id!r}; choices: {list(CASE_IDS)}")
    case_ids = list(CASE_IDS) if args.all else [case_id]
    methods = tuple(_opt(args, config, "methods", "l1,group,fused").split(","))
    try:
        seeds = tuple(int(s) for s in str(_opt(args, config, "seeds", "0,1,2")).split(","))
    except ValueError as exc:
        raise _input_error(f"bad seeds: {exc}")
    out = _opt(args, config, "out", ".")
    jobs = _resolve_jobs(args, config)
    os.makedirs(out, exist_ok=True)
    failures = []
    for cid in case_ids:
        try:
            result = run_case(default_case(cid), methods=methods, seeds=seeds, jobs=jobs)
        except ValueError:
            raise
        except Exception as exc:  # runner errors propagate per case
            failures.append((cid, exc))
            continue
        write_csv(result.rows, os.path.join(out, f"{cid}.csv"))
        write_json(result, os.path.join(out, f"{cid}.json"))
        for row in result.rows:
            print(
                f"{row.case_id:<14} {row.method:<7} {row.metric:<13} "
                f"{row.mean:.3f} (+-{row.stddev:.3f}, n={row.n})"
            )
    if failures:
        detail = "; ".join(f"{cid}: {exc}" for cid, exc in failures)
        print(f"error_code=benchmark_error detail={detail}", file=sys.stderr)
        return 1
    return EXIT_OK


def _canned_targets(accepts: str) -> list:
    triangle = Graph(3, ((0, 1), (0, 2), (1, 2)), None)
    square = Graph(4, ((0, 1), (0, 3), (1, 2), (2, 3)), None)
    wedge = Graph(4, ((0, 1), (0, 2), (0, 3), (1, 2)), None)
    if accepts == "graph":
        return [triangle, square, wedge]
    return [
        GraphSeries((triangle, triangle)),
        GraphSeries((square, square)),
        GraphSeries((wedge, wedge, wedge)),
    ]


def cmd_protocol_check(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    spec = _opt(args, config, "model")
    if spec is None:
        raise _input_error("--model is required")
    if not (spec.startswith("exec:") or spec.startswith("tcp:")):
        raise _input_error("protocol check needs an external model (exec: or tcp:)")
    timeout = float(_opt(args, config, "timeout", 30.0))
    model = resolve_model(spec, timeout=timeout)
    try:
        probs = model.predict_many(_canned_targets(model.accepts))
    finally:
        close = getattr(model, "close", None)
        if close is not None:
            close()
    # predict_many already validates each vector is a simplex of n_classes
    assert len(probs) == 3
    print(f"protocol ok: n_classes={model.n_classes} accepts={model.accepts}")
    return EXIT_OK


def cmd_gram(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    model_spec = _opt(args, config, "model")
    if model_spec is None:
        raise _input_error("--model is required")
    if args.unit is None:
        raise _input_error("--unit is required")
    target = _load_target(args, config)
    unit_kind = _resolve_unit_kind(args, config)
    scheme = _resolve_scheme(args, config, unit_kind)
    unit = UnitId.from_key(args.unit)
    model = resolve_model(model_spec)
    aux = generate(target, model, scheme, unit_kind, jobs=_resolve_jobs(args, config))
    if unit not in aux.unit_features:
        raise _input_error(f"unit {unit.key} is not a {unit_kind} unit of this target")
    gm = unit_gram(aux.unit_features[unit], aux.feature_kind, KernelConfig(), label=unit.key)
    for row in gm.values:
        print(",".join(f"{x:.17g}" for x in row))
    return EXIT_OK


def _add_target_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", help="path to a graph JSON file")
    p.add_argument("--series", help="path to a graph-series JSON file")
    p.add_argument("--model", help="builtin:<name>, exec:<command>, or tcp:<host:port>")
    p.add_argument("--units", choices=sorted(_UNIT_KINDS), help="unit kind (default node)")
    p.add_argument("--scheme", help="perturbation scheme JSON or preset like remove-nodes:2")
    p.add_argument("--m-samples", dest="m_samples", type=int, help="auxiliary sample count")
    p.add_argument("--seed", type=int, help="perturbation seed")


def _add_common_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for any option")
    p.add_argument("--jobs", type=int, help="parallel workers (env HSIC_EXPLAIN_JOBS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsic-explain",
        description="Explain black-box graph classifiers by sparse kernel dependence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="score one target's units against a model")
    _add_target_options(p)
    p.add_argument("--method", choices=("l1", "group", "fused"), help="solver (default l1)")
    p.add_argument("--lambda", dest="lam", type=float, help="sparsity weight")
    p.add_argument("--mu", type=float, help="fusion weight (fused method)")
    p.add_argument("--groups", help="walks:<n>,<len> or file:<path>")
    _add_common_options(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("benchmark", help="run synthetic benchmark cases")
    p.add_argument("--case", help=f"one of {', '.join(CASE_IDS)}")
    p.add_argument("--all", action="store_true", help="run every case")
    p.add_argument("--methods", help="comma list of l1,group,fused,random")
    p.add_argument("--seeds", help="comma list of integers")
    p.add_argument("--out", help="report directory (default .)")
    _add_common_options(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("protocol-check", help="validate an external model server")
    p.add_argument("--model", help="exec:<command> or tcp:<host:port>")
    p.add_argument("--timeout", type=float, help="per-response timeout in seconds")
    _add_common_options(p)
    p.set_defaults(func=cmd_protocol_check)

    p = sub.add_parser("gram", help="dump one unit's centered Gram matrix as CSV")
    _add_target_options(p)
    p.add_argument("--unit", help="unit key, e.g. node:3 or edge:2-5 or node:3@t1")
    _add_common_options(p)
    p.set_defaults(func=cmd_gram)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        detail = err.detail.replace("\n", " ")
        print(f"error_code={err.name} detail={detail}", file=sys.stderr)
        return err.code
    except DegenerateOutputError as exc:
        print(f"error_code=degenerate_output detail={exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ModelError as exc:
        detail = str(exc).replace("\n", " ")
        print(f"error_code=model_error detail={detail}", file=sys.stderr)
        return EXIT_MODEL
    except (ValueError, OSError) as exc:
        detail = str(exc).replace("\n", " ")
        print(f"error_code=input_error detail={detail}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
