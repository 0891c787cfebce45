"""Command-line entry point: instance files in, CSV or JSON report rows out."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bumps import ARG_MODES, BumpProfile, EPSILON_FAMILIES, EpsilonFunction, normalize_epsilon
from .corona import run_corona
from .grid import MAX_DEPTH, GridError, WeightGrid
from .orlicz import YoungFunction, log_bump, loglog_bump, power
from .search import KINDS, OBJECTIVES, Instance, default_family, generate_instance, local_search
from .selfimprove import CASES, proposition_eta
from .sparse import NotSparse, SparseCollection, SparseOperator, apply_sparse, dense_norm_p2, norm_oracle, testing_constant

__all__ = ["main", "run_command", "read_instance", "write_instance", "instance_to_dict", "instance_from_dict", "COLUMNS"]

FORMAT_VERSION = 1

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

COLUMNS = (
    "instance",
    "p",
    "depth",
    "ap",
    "separated_sw",
    "separated_ws",
    "entangled_sw",
    "entangled_ws",
    "entangled_sw_rho",
    "entangled_ws_rho",
    "skipped_cubes",
    "testing",
    "norm",
    "norm_converged",
    "sandwich",
    "dense_norm",
    "lemma_S",
    "lemma_S1",
    "lemma_S2",
    "lemma_S3",
    "lemma_S3_literal",
    "gT",
    "sum",
    "decrease",
    "packing",
    "corona_ok",
    "theorem_ratio",
    "conjecture_ratio",
    "search_start",
    "search_best",
    "search_rejected",
    "prop_case",
    "prop_separated",
    "prop_entangled",
    "prop_ratio",
    "prop_chain",
    "prop_finite",
    "runtime",
)


class InputError(ValueError):
    """Malformed instance file or option value."""


class NumericFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# instance files


def instance_to_dict(inst: Instance, ident: str | None = None) -> dict:
    return {
        "version": FORMAT_VERSION,
        "id": ident or f"{inst.kind}-d{inst.d}-L{inst.L}-s{inst.seed}",
        "kind": inst.kind,
        "dimension": inst.d,
        "depth": inst.L,
        "p": float(inst.p),
        "sigma": [float(x) for x in inst.sigma.cells.ravel()],
        "w": [float(x) for x in inst.w.cells.ravel()],
        "sparse": inst.collection.to_list(),
        "young": {"A": inst.A.to_dict(), "B": inst.B.to_dict()},
        "epsilon": {"p": inst.eps_p.to_dict(), "p_prime": inst.eps_pp.to_dict()},
        "seed": int(inst.seed),
    }


def _field(data: dict, name: str, kind):
    if name not in data:
        raise InputError(f"field '{name}': missing")
    value = data[name]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise InputError(f"field '{name}': expected {kind.__name__}, got {type(value).__name__}")
    return value


def instance_from_dict(data: dict) -> tuple[Instance, str]:
    if not isinstance(data, dict):
        raise InputError("top level: expected an object")
    version = _field(data, "version", int)
    if version != FORMAT_VERSION:
        raise InputError(f"field 'version': unsupported version {version}")
    d = _field(data, "dimension", int)
    L = _field(data, "depth", int)
    p = _field(data, "p", float)
    if not p > 1:
        raise InputError("field 'p': must exceed 1")
    if d not in MAX_DEPTH or not 0 <= L <= MAX_DEPTH[d]:
        raise InputError(f"field 'depth': {L} not supported for dimension {d}")
    n = (1 << L) ** d
    weights = {}
    for name in ("sigma", "w"):
        arr = _field(data, name, list)
        if len(arr) != n:
            raise InputError(f"field '{name}': expected {n} values, got {len(arr)}")
        for k, x in enumerate(arr):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) or x < 0:
                raise InputError(f"field '{name}[{k}]': expected a finite nonnegative number, got {x!r}")
        weights[name] = WeightGrid(d, L, np.asarray(arr, dtype=float))
    rows = _field(data, "sparse", list)
    for k, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != d + 1 or not all(isinstance(v, int) for v in row):
            raise InputError(f"field 'sparse[{k}]': expected [level, {d} indices]")
    try:
        collection = SparseCollection.from_list(rows)
    except (NotSparse, GridError, ValueError) as exc:
        raise InputError(f"field 'sparse': {exc}") from exc
    if max(Q.level for Q in collection.cubes) > L:
        raise InputError("field 'sparse': cube finer than the grid")
    young = _field(data, "young", dict)
    eps = _field(data, "epsilon", dict)
    try:
        A = YoungFunction.from_dict(_field(young, "A", dict))
        B = YoungFunction.from_dict(_field(young, "B", dict))
    except (KeyError, ValueError) as exc:
        raise InputError(f"field 'young': {exc}") from exc
    pp = p / (p - 1.0)
    try:
        eps_p = EpsilonFunction.from_dict(_field(eps, "p", dict), pp)
        eps_pp = EpsilonFunction.from_dict(_field(eps, "p_prime", dict), p)
    except (KeyError, ValueError) as exc:
        raise InputError(f"field 'epsilon': {exc}") from exc
    seed = _field(data, "seed", int)
    kind = data.get("kind", "custom")
    ident = data.get("id") or f"{kind}-d{d}-L{L}-s{seed}"
    inst = Instance(weights["sigma"], weights["w"], collection, p, A, B, eps_p, eps_pp, seed, str(kind))
    return inst, str(ident)


def dumps_instance(inst: Instance, ident: str | None = None) -> str:
    return json.dumps(instance_to_dict(inst, ident), indent=1) + "\n"


def write_instance(inst: Instance, path, ident: str | None = None) -> None:
    Path(path).write_text(dumps_instance(inst, ident), encoding="utf-8", newline="\n")


def read_instance(path) -> tuple[Instance, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return instance_from_dict(data)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# option parsing helpers


def _kv(spec: str, what: str) -> tuple[str, dict[str, float]]:
    family, _, rest = spec.partition(":")
    params = {}
    if rest:
        for part in rest.split(","):
            key, eq, value = part.partition("=")
            if not eq:
                raise InputError(f"--{what}: expected key=value, got {part!r}")
            try:
                params[key.strip()] = float(value)
            except ValueError as exc:
                raise InputError(f"--{what}: {key} is not a number") from exc
    return family.strip(), params


def young_override(spec: str, p: float) -> tuple[YoungFunction, YoungFunction]:
    """--A FAMILY:eta=R gives A at exponent p and B of the same family at p'."""
    family, params = _kv(spec, "A")
    pp = p / (p - 1.0)
    eta = params.get("eta", 1.0)
    makers = {"log-bump": log_bump, "loglog-bump": loglog_bump}
    if family == "power":
        return power(p), power(pp)
    if family not in makers:
        raise InputError(f"--A: unknown family {family!r}")
    return makers[family](p, eta), makers[family](pp, eta)


def eps_override(spec: str, p: float) -> tuple[EpsilonFunction, EpsilonFunction]:
    """--eps FAMILY:key=R, normalized against p' for eps_p and against p for eps_{p'}."""
    family, params = _kv(spec, "eps")
    if family not in EPSILON_FAMILIES:
        raise InputError(f"--eps: unknown family {family!r}")
    key = {"power": "a", "log-power": "b", "triple-log": "eta"}[family]
    if key not in params:
        raise InputError(f"--eps: {family} needs {key}=R")
    pp = p / (p - 1.0)
    try:
        return normalize_epsilon(family, params[key], pp), normalize_epsilon(family, params[key], p)
    except ValueError as exc:
        raise InputError(f"--eps: {exc}") from exc


def _apply_overrides(inst: Instance, args) -> Instance:
    if getattr(args, "A", None):
        A, B = young_override(args.A, inst.p)
        inst = replace(inst, A=A, B=B)
    if getattr(args, "eps", None):
        e1, e2 = eps_override(args.eps, inst.p)
        inst = replace(inst, eps_p=e1, eps_pp=e2)
    if getattr(args, "p", None) is not None and args.p != inst.p:
        p = args.p
        if not p > 1:
            raise InputError("--p: must exceed 1")
        A, B, e1, e2 = default_family(p)
        inst = replace(inst, p=p, A=A, B=B, eps_p=e1, eps_pp=e2)
        if args.A:
            A, B = young_override(args.A, p)
            inst = replace(inst, A=A, B=B)
        if args.eps:
            e1, e2 = eps_override(args.eps, p)
            inst = replace(inst, eps_p=e1, eps_pp=e2)
    return inst


# ---------------------------------------------------------------------------
# computations


def _constants(inst: Instance) -> dict:
    fwd = BumpProfile(inst.sigma, inst.w, inst.A, inst.p)
    bwd = BumpProfile(inst.w, inst.sigma, inst.B, inst.p_prime)
    return {
        "ap": fwd.ap(),
        "separated_sw": fwd.separated(),
        "separated_ws": bwd.separated(),
        "entangled_sw": fwd.entangled(inst.eps_p, "one-plus-rho"),
        "entangled_ws": bwd.entangled(inst.eps_pp, "one-plus-rho"),
        "entangled_sw_rho": fwd.entangled(inst.eps_p, "rho"),
        "entangled_ws_rho": bwd.entangled(inst.eps_pp, "rho"),
        "skipped_cubes": fwd.skipped + bwd.skipped,
    }


def _testing(inst: Instance) -> dict:
    T = SparseOperator(inst.collection, inst.L)
    return {"testing": testing_constant(T, inst.sigma, inst.w, inst.p)}


def _norm(inst: Instance, restarts: int, tol: float):
    T = SparseOperator(inst.collection, inst.L)
    est = norm_oracle(T, inst.sigma, inst.w, inst.p, restarts=restarts, tol=tol)
    row = {"norm": est.value, "norm_converged": int(est.converged)}
    if inst.p == 2.0:
        row["dense_norm"] = dense_norm_p2(T, inst.sigma, inst.w)
    return row, est


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else math.inf


def _corona(inst: Instance, arg_mode: str, restarts: int, tol: float) -> dict:
    T = SparseOperator(inst.collection, inst.L)
    est = norm_oracle(T, inst.sigma, inst.w, inst.p, restarts=restarts, tol=tol)
    # the extremal dual function of the norm problem
    g = apply_sparse(T, inst.sigma, est.f) ** (inst.p - 1.0)
    summary = run_corona(inst.collection, inst.sigma, inst.w, inst.A, inst.eps_p, inst.p, g, arg_mode)
    rep, inv = summary.report, summary.invariants
    ok = inv["T_subset_S"] and inv["iS_le_iT"] and inv["regimes_partition"] and inv["packing"] and inv["sharp_failures"] == 0
    return {
        "lemma_S": rep.ratios["S"],
        "lemma_S1": rep.ratios["S1"],
        "lemma_S2": rep.ratios["S2"],
        "lemma_S3": rep.ratios["S3"],
        "lemma_S3_literal": rep.ratios["S3_literal"],
        "gT": rep.gT_ratio,
        "sum": rep.sum_max,
        "decrease": rep.decrease_max,
        "packing": rep.packing_max,
        "corona_ok": int(ok),
    }, est


# ---------------------------------------------------------------------------
# formatting


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(value)


def render(rows: list[dict], form: str) -> str:
    if form == "csv":
        lines = [",".join(COLUMNS)]
        for row in rows:
            lines.append(",".join(_csv_cell(fmt(row.get(c))) for c in COLUMNS))
        return "\n".join(lines) + "\n"
    out = []
    for row in rows:
        items = []
        for c in COLUMNS:
            if c not in row:
                continue
            text = fmt(row[c])
            v = row[c]
            numeric = isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
            if not numeric or text in ("nan", "inf", "-inf"):
                text = json.dumps(text)
            items.append(f"{json.dumps(c)}: {text}")
        out.append("{" + ", ".join(items) + "}")
    return "[\n" + ",\n".join(out) + "\n]\n"


def _csv_cell(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


# ---------------------------------------------------------------------------
# commands


def _base_row(inst: Instance, ident: str) -> dict:
    return {"instance": ident, "p": float(inst.p), "depth": inst.L}


def _row_for(command: str, inst: Instance, ident: str, args) -> tuple[dict, bool]:
    row = _base_row(inst, ident)
    converged = True
    if command == "constants":
        row.update(_constants(inst))
    elif command == "testing":
        row.update(_testing(inst))
    elif command == "norm":
        part, est = _norm(inst, args.restarts, args.tol)
        row.update(part)
        converged = est.converged
    elif command == "corona-report":
        part, est = _corona(inst, args.arg_mode, args.restarts, args.tol)
        row.update(part)
        converged = est.converged
    elif command == "verify-theorem":
        row.update(_testing(inst))
        part, est = _norm(inst, args.restarts, args.tol)
        row.update(part)
        converged = est.converged
        row.update(_constants(inst))
        row["sandwich"] = _ratio(row["norm"], row["testing"])
        row["theorem_ratio"] = _ratio(row["norm"], row["entangled_sw"] + row["entangled_ws"])
        row["conjecture_ratio"] = _ratio(row["norm"], row["separated_sw"] + row["separated_ws"])
        if args.steps > 0:
            res = local_search(inst, "theorem-ratio", args.steps, seed=args.seed, arg_mode=args.arg_mode)
            row["search_start"] = res.start_value
            row["search_best"] = res.best_value
            row["search_rejected"] = res.rejected
    elif command == "prop-eta":
        rep = proposition_eta(inst.sigma, inst.w, inst.p, args.eta, args.case, args.eta_prime, args.arg_mode)
        row.update(
            prop_case=rep.case,
            prop_separated=rep.separated,
            prop_entangled=rep.entangled,
            prop_ratio=rep.ratio,
            prop_chain=rep.chain_max,
            prop_finite=rep.finite_integral,
        )
    elif command == "search":
        res = local_search(inst, args.objective, args.steps, seed=args.seed, arg_mode=args.arg_mode)
        row["search_start"] = res.start_value
        row["search_best"] = res.best_value
        row["search_rejected"] = res.rejected
        key = "theorem_ratio" if args.objective == "theorem-ratio" else "conjecture_ratio"
        row[key] = res.best_value
        if args.save_best:
            write_instance(res.best, args.save_best, ident + "-best")
        if args.trace:
            _write_trace(res.trace, args.trace)
    else:  # pragma: no cover - argparse restricts the choices
        raise InputError(f"unknown command {command!r}")
    return row, converged


def _write_trace(trace: list[dict], path) -> None:
    cols = ("step", "move", "value", "current", "best", "accepted")
    lines = [",".join(cols)]
    for rec in trace:
        move = " ".join(fmt(x) for x in rec.get("move", ()))
        lines.append(",".join(_csv_cell(fmt(rec.get(c)) if c != "move" else move) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _threads() -> int:
    raw = os.environ.get("BUMPLAB_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _progress(args, message: str) -> None:
    if not args.quiet:
        print(f"bumplab: {message}", file=sys.stderr)


def _cmd_gen(args) -> int:
    if args.d not in MAX_DEPTH or not 0 <= args.L <= MAX_DEPTH[args.d]:
        raise InputError(f"--L: depth {args.L} not supported for d={args.d}")
    if not args.p > 1:
        raise InputError("--p: must exceed 1")
    inst = generate_instance(args.kind, args.d, args.L, args.p, args.seed, s=args.s, eta=args.eta)
    if args.A or args.eps:
        inst = _apply_overrides(inst, argparse.Namespace(A=args.A, eps=args.eps, p=None))
    text = dumps_instance(inst)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    _progress(args, f"gen {args.kind} seed {args.seed} done")
    return EXIT_OK


def _cmd_report(args) -> int:
    inputs = [read_instance(path) for path in args.input]
    inputs = [(_apply_overrides(inst, args), ident) for inst, ident in inputs]

    def work(item):
        inst, ident = item
        start = time.perf_counter()
        row, ok = _row_for(args.command, inst, ident, args)
        if args.timing:
            row["runtime"] = time.perf_counter() - start
        return row, ok

    workers = min(_threads(), len(inputs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, inputs))
    else:
        results = [work(item) for item in inputs]
    rows = [r for r, _ in results]
    for (_, ident), (_, ok) in zip(inputs, results):
        _progress(args, f"{args.command} {ident} done" + ("" if ok else " (not converged)"))
    text = render(rows, args.format)
    if args.output and args.append and args.format == "csv" and Path(args.output).exists():
        # header already present; add rows only
        with open(args.output, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(text.split("\n", 1)[1])
    elif args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK if all(ok for _, ok in results) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bumplab", description=__doc__, allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_input=True):
        if with_input:
            p.add_argument("--input", nargs="+", required=True, metavar="PATH")
        p.add_argument("--output", metavar="PATH")
        p.add_argument("--p", type=float, default=None)
        p.add_argument("--A", metavar="FAMILY:eta=R")
        p.add_argument("--eps", metavar="FAMILY:key=R")
        p.add_argument("--arg-mode", choices=ARG_MODES, default="one-plus-rho")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--steps", type=int, default=0)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--append", action="store_true", help="append CSV rows to an existing --output file")
        p.add_argument("--restarts", type=int, default=8)
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--timing", action="store_true", help="add wall-clock runtime (not reproducible)")
        p.add_argument("--quiet", action="store_true")

    for name in ("constants", "testing", "norm", "corona-report", "verify-theorem"):
        common(sub.add_parser(name, allow_abbrev=False))
    prop = sub.add_parser("prop-eta", allow_abbrev=False)
    common(prop)
    prop.add_argument("--case", choices=CASES, default="log")
    prop.add_argument("--eta", type=float, default=1.0)
    prop.add_argument("--eta-prime", type=float, default=None)
    search = sub.add_parser("search", allow_abbrev=False)
    common(search)
    search.set_defaults(steps=100)
    search.add_argument("--objective", choices=OBJECTIVES, default="theorem-ratio")
    search.add_argument("--save-best", metavar="PATH")
    search.add_argument("--trace", metavar="PATH")
    gen = sub.add_parser("gen", allow_abbrev=False)
    gen.add_argument("--kind", choices=KINDS, default="lognormal")
    gen.add_argument("--d", type=int, default=1)
    gen.add_argument("--L", type=int, default=4)
    gen.add_argument("--p", type=float, default=2.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--s", type=float, default=1.0, help="log-normal spread")
    gen.add_argument("--eta", type=float, default=1.0)
    gen.add_argument("--A", metavar="FAMILY:eta=R")
    gen.add_argument("--eps", metavar="FAMILY:key=R")
    gen.add_argument("--output", metavar="PATH")
    gen.add_argument("--quiet", action="store_true")
    return parser


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        return _cmd_report(args)
    except InputError as exc:
        print(f"bumplab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericFailure as exc:
        print(f"bumplab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_command())
