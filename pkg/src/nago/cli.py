"""Command-line entry point.

Every search run writes three deterministic files into its run directory:
``config.json`` (the fully resolved configuration including the root
seed), ``history.jsonl`` (one evaluation per line, in scheduler order)
and ``summary.json``.  Re-running with ``--config <run>/config.json``
replays builtin/proxy runs byte for byte.  Flags override config-file
values.

Exit codes: 0 success, 1 runtime error (structured message on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analytics, costs
from .bohb import BudgetSchedule, SamplerConfig, Trial, run_bohb
from .errors import NagoError
from .evalbridge import default_param_budget, make_evaluator, resolution_for
from .graphs import Dag, RandomGraph
from .mobo import MoboPoint, ParetoArchive, hypervolume, pareto_filter, run_mobo
from .rng import derive_seed, generator
from .space import ArchitectureIR, make_search_space, sample_architecture, theta_from_flat
from .surrogate import BnnSurrogate, SurrogateDataset, nll, rmse

OBJECTIVE_ALIASES = {
    "error": "val_error",
    "val_error": "val_error",
    "accuracy": "val_error",
    "memory": "memory_mb",
    "memory_mb": "memory_mb",
    "time": "train_time_s",
    "train_time_s": "train_time_s",
    "f1": "f1",
    "f2": "f2",
}

WS_ODD_K_NOTE = (
    "Watts-Strogatz graphs wire floor(k/2) ring neighbours per side, so an "
    "odd k behaves like k-1."
)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _objectives(spec: str) -> list[str]:
    names = []
    for part in spec.split(","):
        part = part.strip()
        if part not in OBJECTIVE_ALIASES:
            raise NagoError(f"unknown objective {part!r} (have {sorted(set(OBJECTIVE_ALIASES))})")
        names.append(OBJECTIVE_ALIASES[part])
    return names


def _run_dir(base: str | None, kind: str) -> Path:
    if base:
        return Path(base)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"{kind}-{stamp}"


def _resolve(args: argparse.Namespace, config_path: str | None, defaults: dict) -> dict:
    """Merge flag values over config-file values over defaults."""
    merged = dict(defaults)
    if config_path:
        merged.update(_load_json(config_path))
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


# ---------------------------------------------------------------- sample

def cmd_sample(args) -> int:
    seed = args.seed
    if args.theta:
        theta = theta_from_flat(_load_json(args.theta))
    else:
        rng = generator(derive_seed(seed, "cli-theta"))
        theta = analytics.sample_uniform_theta(args.space, rng)
    budget = args.budget if args.budget else default_param_budget(args.dataset)
    ir = sample_architecture(theta, seed, budget, input_channels=args.input_channels)
    text = ir.to_json(pretty=args.pretty)
    if args.out:
        _write(Path(args.out), text + "\n")
    else:
        print(text)
    return 0


def cmd_cost(args) -> int:
    ir = ArchitectureIR.from_json(Path(args.ir).read_text())
    report = costs.price(ir, args.resolution, args.bytes, args.train_multiplier)
    if args.json:
        _write(Path(args.json), report.to_json() + "\n")
    print(f"nodes            {len(ir.nodes)}")
    print(f"edges            {len(ir.edges)}")
    print(f"param_count      {report.param_count}")
    print(f"memory_per_sample {report.memory_mb:.3f} MB ({report.memory_bytes} bytes)")
    print(f"flops            {report.flops}")
    print(f"time_proxy       {report.time_proxy:.6f}")
    return 0


# ---------------------------------------------------------------- analyze

def cmd_analyze_cardinality(args) -> int:
    p = analytics.CardinalityParams(
        n_o_max=args.no or args.max, n_c_max=args.nc or args.max, n_s_max=args.ns or args.max, m=args.ops
    )
    total = analytics.hnag_cardinality(p)
    print(f"hierarchical space size: {total}")
    print(f"  ~= {analytics.sci_notation(total)}")
    print(f"reference cell-based space: {analytics.darts_cardinality()} (8^14)")
    return 0


def cmd_analyze_histogram(args) -> int:
    counts, edges = analytics.memory_histogram(
        args.space, args.samples, args.seed, args.resolution, args.param_budget, args.bins
    )
    csv_text = analytics.histogram_csv(counts, edges)
    if args.out:
        _write(Path(args.out), csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_analyze_rankcorr(args) -> int:
    lines = Path(args.history).read_text().splitlines()
    trials = [Trial.from_json_line(l) for l in lines if l.strip()]
    by_config: dict[int, dict[float, float]] = {}
    for t in trials:
        if t.status == "ok" and t.objective is not None:
            by_config.setdefault(t.config_id, {})[t.budget] = t.objective
    pairs = [
        (scores[args.low], scores[args.high])
        for scores in by_config.values()
        if args.low in scores and args.high in scores
    ]
    rho = analytics.rank_correlation(pairs)
    print(f"pairs: {len(pairs)}")
    print(f"spearman_rho: {rho:.4f}")
    return 0


def cmd_analyze_study(args) -> int:
    rows = analytics.sample_study(
        args.space, args.thetas, args.draws, args.seed, args.resolution, args.param_budget
    )
    csv_text = analytics.study_csv(rows)
    if args.out:
        _write(Path(args.out), csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


# ---------------------------------------------------------------- surrogate

def _load_dataset(path: str) -> SurrogateDataset:
    doc = _load_json(path)
    return SurrogateDataset(np.asarray(doc["inputs"], dtype=float), np.asarray(doc["targets"], dtype=float))


def cmd_surrogate_fit(args) -> int:
    data = _load_dataset(args.data)
    model = BnnSurrogate(heteroscedastic=not args.hom).fit(data, seed=args.seed)
    model.save(args.out)
    print(f"fitted {'homoscedastic' if args.hom else 'heteroscedastic'} surrogate on {len(data)} points -> {args.out}")
    return 0


def cmd_surrogate_predict(args) -> int:
    model = BnnSurrogate.load(args.model)
    doc = _load_json(args.inputs)
    X = np.asarray(doc["inputs"] if isinstance(doc, dict) else doc, dtype=float)
    mean, var = model.predict(X)
    out = [{"mean": float(m), "variance": float(v)} for m, v in zip(mean, var)]
    text = json.dumps(out, sort_keys=True, indent=2)
    if args.out:
        _write(Path(args.out), text + "\n")
    else:
        print(text)
    return 0


def cmd_surrogate_nll(args) -> int:
    model = BnnSurrogate.load(args.model)
    data = _load_dataset(args.data)
    mean, var = model.predict(data.inputs)
    print(f"nll:  {nll(mean, var, data.targets):.6f}")
    print(f"rmse: {rmse(mean, data.targets):.6f}")
    return 0


# ---------------------------------------------------------------- search

BOHB_DEFAULTS = {
    "evaluator": "proxy",
    "space": "hnag",
    "dims": "graph",
    "budgets": "30,60,120",
    "eta": 2.0,
    "iterations": 6,
    "seed": 0,
    "dataset": "tiny32",
    "param_budget": 0,  # 0 -> per-dataset default
    "objective": "error",
}


def cmd_search_bohb(args) -> int:
    cfg = _resolve(args, args.config, BOHB_DEFAULTS)
    run_dir = _run_dir(args.out_dir, "bohb")
    run_dir.mkdir(parents=True, exist_ok=True)
    _write(run_dir / "config.json", json.dumps({"command": "search bohb", **cfg}, sort_keys=True, indent=2) + "\n")

    budgets = tuple(float(b) for b in str(cfg["budgets"]).split(","))
    schedule = BudgetSchedule(budgets=budgets, eta=float(cfg["eta"]))
    if cfg["evaluator"].startswith("builtin:"):
        evaluator = make_evaluator(cfg["evaluator"])
        from .space import SearchSpace

        space = SearchSpace("vector", {f"x{i}": (0.0, 1.0, False) for i in range(evaluator.bench.dimension)})
        objective_key = evaluator.bench.objective_names[0]
    else:
        evaluator = make_evaluator(cfg["evaluator"])
        space = make_search_space(cfg["space"], cfg["dims"])
        objective_key = OBJECTIVE_ALIASES[cfg["objective"]]
    param_budget = int(cfg["param_budget"]) or default_param_budget(cfg["dataset"])

    history_path = run_dir / "history.jsonl"
    with open(history_path, "w") as fh:
        result = run_bohb(
            evaluator,
            space,
            schedule,
            iterations=int(cfg["iterations"]),
            seed=int(cfg["seed"]),
            objective_key=objective_key,
            dataset=cfg["dataset"],
            param_budget=param_budget,
            on_trial=lambda t: fh.write(t.to_json_line() + "\n"),
        )
    evaluator.close()
    summary = {
        "trials": len(result.history),
        "total_cost": result.total_cost,
        "bracket_costs": result.bracket_costs,
        "best": json.loads(result.best.to_json_line()) if result.best else None,
    }
    _write(run_dir / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    if result.best:
        print(f"best objective {result.best.objective:.6f} at budget {result.best.budget} "
              f"(trial {result.best.id}, config {result.best.config_id})")
    print(f"run directory: {run_dir}")
    return 0


MOBO_DEFAULTS = {
    "evaluator": "proxy",
    "space": "hnag",
    "dims": "graph",
    "iterations": 5,
    "batch": 4,
    "seed": 0,
    "budget": 60.0,
    "dataset": "tiny32",
    "param_budget": 0,
    "objectives": "error,memory",
    "init": "",
    "init_count": 50,
    "ref": "",
}


def cmd_search_mobo(args) -> int:
    cfg = _resolve(args, args.config, MOBO_DEFAULTS)
    run_dir = _run_dir(args.out_dir, "mobo")
    run_dir.mkdir(parents=True, exist_ok=True)
    _write(run_dir / "config.json", json.dumps({"command": "search mobo", **cfg}, sort_keys=True, indent=2) + "\n")

    evaluator = make_evaluator(cfg["evaluator"])
    if cfg["evaluator"].startswith("builtin:"):
        from .space import SearchSpace

        space = SearchSpace("vector", {f"x{i}": (0.0, 1.0, False) for i in range(evaluator.bench.dimension)})
        names = list(evaluator.bench.objective_names)
    else:
        space = make_search_space(cfg["space"], cfg["dims"])
        names = _objectives(cfg["objectives"])
    param_budget = int(cfg["param_budget"]) or default_param_budget(cfg["dataset"])

    init_points = None
    if cfg["init"]:
        lines = Path(cfg["init"]).read_text().splitlines()
        seen: dict[int, tuple[float, ...]] = {}
        for line in lines:
            if not line.strip():
                continue
            t = Trial.from_json_line(line)
            if t.status == "ok":
                seen[t.config_id] = t.x
        init_points = [np.asarray(x) for x in list(seen.values())[: int(cfg["init_count"])]]

    reference = tuple(float(v) for v in str(cfg["ref"]).split(",")) if cfg["ref"] else None
    history_path = run_dir / "history.jsonl"
    with open(history_path, "w") as fh:
        result = run_mobo(
            evaluator,
            space,
            names,
            iterations=int(cfg["iterations"]),
            batch_size=int(cfg["batch"]),
            seed=int(cfg["seed"]),
            budget=float(cfg["budget"]),
            dataset=cfg["dataset"],
            param_budget=param_budget,
            init_points=init_points,
            reference=reference,
            on_point=lambda p: fh.write(p.to_json_line() + "\n"),
        )
    evaluator.close()
    summary = {
        "points": len(result.history),
        "archive": result.archive.entries,
        "hypervolume_trace": result.hypervolume_trace,
        "objectives": names,
    }
    _write(run_dir / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"archive size: {len(result.archive)}")
    if result.hypervolume_trace:
        print(f"final hypervolume: {result.hypervolume_trace[-1]:.6f}")
    print(f"run directory: {run_dir}")
    return 0


# ---------------------------------------------------------------- export / report

def cmd_export(args) -> int:
    text = Path(args.infile).read_text()
    doc = json.loads(text)
    schema = doc.get("schema", "")
    if schema == "nago-ir/1":
        obj = ArchitectureIR.from_json(text)
    elif schema == "nago-graph/1":
        obj = RandomGraph.from_json(text)
    elif schema == "nago-dag/1":
        obj = Dag.from_json(text)
    else:
        raise NagoError(f"unknown schema {schema!r} in {args.infile}")
    out_text = obj.to_dot() if args.format == "dot" else obj.to_json(pretty=True) + "\n" if schema == "nago-ir/1" else obj.to_json() + "\n"
    if args.out:
        _write(Path(args.out), out_text)
    else:
        sys.stdout.write(out_text)
    return 0


def cmd_report_pareto(args) -> int:
    names = _objectives(args.objectives)
    lines = Path(args.history).read_text().splitlines()
    archive = ParetoArchive()
    for line in lines:
        if not line.strip():
            continue
        p = MoboPoint.from_json_line(line)
        if p.status == "ok" and p.objectives:
            archive.insert(p.theta, p.x, [p.objectives[k] for k in names])
    rows = ["" for _ in range(0)]
    header = ",".join(names) + ",theta"
    rows = [header]
    for e in archive.entries:
        vals = ",".join(f"{v:.6f}" for v in e["objectives"])
        rows.append(f'{vals},"{json.dumps(e["theta"], sort_keys=True).replace(chr(34), chr(39))}"')
    csv_text = "\n".join(rows) + "\n"
    if args.out:
        _write(Path(args.out), csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.ref:
        ref = tuple(float(v) for v in args.ref.split(","))
        print(f"hypervolume at {ref}: {hypervolume(archive.vectors(), ref):.6f}", file=sys.stderr)
    return 0


def cmd_report_history(args) -> int:
    lines = [l for l in Path(args.history).read_text().splitlines() if l.strip()]
    docs = [json.loads(l) for l in lines]
    if docs and "bracket" in docs[0]:
        by_budget: dict[float, list[float]] = {}
        failed = 0
        for d in docs:
            if d["status"] == "ok":
                by_budget.setdefault(d["budget"], []).append(d["objective"])
            else:
                failed += 1
        print(f"{len(docs)} trials, {failed} failed")
        for b in sorted(by_budget):
            vals = by_budget[b]
            print(f"budget {b:g}: {len(vals)} ok, best {min(vals):.6f}, median {sorted(vals)[len(vals) // 2]:.6f}")
    else:
        ok = [d for d in docs if d["status"] == "ok"]
        print(f"{len(docs)} evaluations, {len(docs) - len(ok)} failed")
        if ok and ok[0].get("objectives"):
            for k in sorted(ok[0]["objectives"]):
                vals = [d["objectives"][k] for d in ok]
                print(f"{k}: min {min(vals):.6f}, max {max(vals):.6f}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nago", description="Architecture-generator search toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample an architecture from a generator", epilog=WS_ODD_K_NOTE)
    p.add_argument("--space", choices=["hnag", "rnag"], default="hnag")
    p.add_argument("--theta", help="flat theta JSON file (uniform random draw when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=0, help="parameter budget (0: per-dataset default)")
    p.add_argument("--dataset", default="tiny32")
    p.add_argument("--input-channels", type=int, default=3)
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("cost", help="price an architecture file")
    p.add_argument("ir")
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--bytes", type=int, default=4)
    p.add_argument("--train-multiplier", type=float, default=1.0)
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_cost)

    pa = sub.add_parser("analyze", help="search-space analytics")
    asub = pa.add_subparsers(dest="analyze_command", required=True)

    p = asub.add_parser("cardinality")
    p.add_argument("--max", type=int, default=10, help="shared maximum for all three levels")
    p.add_argument("--no", type=int, help="operation-level maximum (overrides --max)")
    p.add_argument("--nc", type=int, help="cell-level maximum")
    p.add_argument("--ns", type=int, help="stage-level maximum")
    p.add_argument("--ops", type=int, default=5)
    p.set_defaults(func=cmd_analyze_cardinality)

    p = asub.add_parser("histogram")
    p.add_argument("--space", choices=["hnag", "rnag"], default="hnag")
    p.add_argument("--samples", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--param-budget", type=int, default=4_000_000)
    p.add_argument("--bins", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze_histogram)

    p = asub.add_parser("rankcorr")
    p.add_argument("--history", required=True)
    p.add_argument("--low", type=float, required=True)
    p.add_argument("--high", type=float, required=True)
    p.set_defaults(func=cmd_analyze_rankcorr)

    p = asub.add_parser("study")
    p.add_argument("--space", choices=["hnag", "rnag"], default="hnag")
    p.add_argument("--thetas", type=int, default=40)
    p.add_argument("--draws", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--param-budget", type=int, default=4_000_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze_study)

    ps = sub.add_parser("surrogate", help="fit/evaluate the BNN surrogate")
    ssub = ps.add_subparsers(dest="surrogate_command", required=True)

    p = ssub.add_parser("fit")
    p.add_argument("--data", required=True, help='JSON {"inputs": [[...]], "targets": [...]}')
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--hom", action="store_true", help="homoscedastic noise (default heteroscedastic)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_surrogate_fit)

    p = ssub.add_parser("predict")
    p.add_argument("--model", required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_surrogate_predict)

    p = ssub.add_parser("nll")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_surrogate_nll)

    pse = sub.add_parser("search", help="hyperparameter search")
    sesub = pse.add_subparsers(dest="search_command", required=True)

    p = sesub.add_parser("bohb")
    p.add_argument("--config", help="config.json of a previous run (flags override)")
    p.add_argument("--evaluator")
    p.add_argument("--space", choices=["hnag", "rnag"])
    p.add_argument("--dims", choices=["graph", "graph+mergeop", "graph+stagechannel", "all"])
    p.add_argument("--budgets", help="comma-separated ascending epochs, e.g. 30,60,120")
    p.add_argument("--eta", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset")
    p.add_argument("--param-budget", type=int, dest="param_budget")
    p.add_argument("--objective")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_search_bohb)

    p = sesub.add_parser("mobo")
    p.add_argument("--config")
    p.add_argument("--evaluator")
    p.add_argument("--space", choices=["hnag", "rnag"])
    p.add_argument("--dims", choices=["graph", "graph+mergeop", "graph+stagechannel", "all"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=float, help="fixed evaluation budget in epochs")
    p.add_argument("--dataset")
    p.add_argument("--param-budget", type=int, dest="param_budget")
    p.add_argument("--objectives")
    p.add_argument("--init", help="history.jsonl with initial evaluations")
    p.add_argument("--init-count", type=int, dest="init_count")
    p.add_argument("--ref", help="hypervolume reference point, e.g. 1,1")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_search_mobo)

    pe = sub.add_parser("export", help="convert graph/architecture files")
    esub = pe.add_subparsers(dest="export_command", required=True)
    for fmt in ("dot", "json"):
        p = esub.add_parser(fmt)
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--out")
        p.set_defaults(func=cmd_export, format=fmt)

    pr = sub.add_parser("report", help="summaries of run artifacts")
    rsub = pr.add_subparsers(dest="report_command", required=True)

    p = rsub.add_parser("pareto")
    p.add_argument("--history", required=True)
    p.add_argument("--objectives", default="error,memory")
    p.add_argument("--ref")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report_pareto)

    p = rsub.add_parser("history")
    p.add_argument("--history", required=True)
    p.set_defaults(func=cmd_report_history)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NagoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
