"""Command line interface: ``polyform <command> [options]``.

Exit codes: 0 success, 1 validation or usage error, 2 numerical failure,
3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from ._fs import atomic_write
from .data import DatasetSpec, Task, gen_dataset, load_dataset, random_multipolygon, save_dataset, split
from .featurizer import ReconstructionError, reconstruct_from_tuples, tuple_multiset
from .geometry import GeometryError
from .hetgraph import HeteroVisibilityGraph, build_graph, canonical_form, reconstruct_multipolygon
from .io import ParseError, multipolygon_to_dict, parse_multipolygon
from .metrics import count_messages, evaluate
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.model import MultipolygonGNN, NumericalError, interaction_weights
from .nn.training import TrainConfig, eval_paths, graph_paths, predict_logits, train
from .sampler import reduced_graph, sample_spanning_tree

log = logging.getLogger("polyform")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    return int(os.environ.get("POLYFORM_SEED", "0"))


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _coerce(parser: argparse.ArgumentParser, values: dict) -> dict:
    actions = {a.dest: a for a in parser._actions}
    out = {}
    for key, value in values.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            out[key] = action.type(value)
        else:
            out[key] = value
    return out


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if path is None or str(path) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        atomic_write(path, buf.getvalue())


def _emit(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        atomic_write(path, text if text.endswith("\n") else text + "\n")


def _load_geometry_items(path) -> list:
    """A file holding one WKT/JSON geometry, a graph JSON, or JSON lines of either."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if not stripped:
        return []
    lines = [ln for ln in stripped.splitlines() if ln.strip()]
    chunks = lines if stripped.startswith("{") and len(lines) > 1 else [stripped]
    items = []
    for k, chunk in enumerate(chunks, 1):
        try:
            if chunk.lstrip().startswith("{") and '"nodes"' in chunk:
                items.append(HeteroVisibilityGraph.from_dict(json.loads(chunk)))
            else:
                items.append(parse_multipolygon(chunk))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{k}: invalid JSON: {exc}") from None
        except GeometryError as exc:
            raise type(exc)(f"{path}:{k}: {exc}") from None
    return items


def _as_graph(item) -> HeteroVisibilityGraph:
    return item if isinstance(item, HeteroVisibilityGraph) else build_graph(item)


# -- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    spec = DatasetSpec(args.task, args.n, args.classes, args.noise, args.seed)
    samples = gen_dataset(spec)
    lines = []
    for s in samples:
        obj = multipolygon_to_dict(s.mp)
        obj.update(label=s.label, meta=s.meta)
        lines.append(json.dumps(obj))
    _emit("\n".join(lines), args.out)
    log.info("generated %d samples, %d classes", len(samples), spec.num_classes)
    return EXIT_OK


def cmd_graph(args) -> int:
    graphs = [_as_graph(x) for x in _load_geometry_items(args.input)]
    _emit("\n".join(g.to_json() for g in graphs), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    out = []
    for item in _load_geometry_items(args.input):
        g = _as_graph(item)
        out.append(reduced_graph(sample_spanning_tree(g, args.sample_seed)).to_json())
    _emit("\n".join(out), args.out)
    return EXIT_OK


def cmd_featurize(args) -> int:
    seed = None if args.no_sample else args.sample_seed
    rows = []
    for item in _load_geometry_items(args.input):
        p = graph_paths(_as_graph(item), seed)
        for r in range(len(p)):
            rows.append([int(p.head[r]), int(p.mid[r]), int(p.tail[r]), repr(float(p.d_ij[r])),
                         repr(float(p.d_jk[r])), repr(float(p.theta[r])),
                         "inner" if p.type_ij[r] == 0 else "cross",
                         "inner" if p.type_jk[r] == 0 else "cross"])
    _write_csv(args.out, ["head_id", "mid_id", "tail_id", "d_ij", "d_jk", "theta",
                          "type_ij", "type_jk"], rows)
    return EXIT_OK


def _roundtrip_case(item, seeds) -> list[str]:
    """Failure descriptions for one geometry (empty when every check passes)."""
    failures = []
    if isinstance(item, HeteroVisibilityGraph):
        g = item
        mp = reconstruct_multipolygon(g)
        target = canonical_form(mp)
    else:
        g = build_graph(item)
        target = canonical_form(item)
        if canonical_form(reconstruct_multipolygon(g)) != target:
            failures.append("graph -> multipolygon mismatch")
    for seed in seeds:
        s = sample_spanning_tree(g, seed)
        if len(s.selected_cross) != g.n_parts - 1:
            failures.append(f"seed {seed}: {len(s.selected_cross)} tree edges for {g.n_parts} parts")
        if canonical_form(reconstruct_multipolygon(reduced_graph(s))) != target:
            failures.append(f"seed {seed}: sampled graph -> multipolygon mismatch")
    paths = tuple_multiset(g)
    if len(paths):
        rebuilt = reconstruct_from_tuples(paths)
        if (rebuilt.inner_edges.tolist() != sorted(g.inner_edges.tolist())
                or rebuilt.cross_edges.tolist() != sorted(np.sort(g.cross_edges, 1).tolist())):
            failures.append("tuple reconstruction changed the edge sets")
        rms = alignment_rms(rebuilt.coords, g.coords)
        if rms > 1e-6:
            failures.append(f"tuple reconstruction RMS residual {rms:.3g}")
    return failures


def alignment_rms(a: np.ndarray, b: np.ndarray) -> float:
    """RMS distance between point sets after the best rotation+translation of a onto b."""
    ca, cb = a.mean(0), b.mean(0)
    h = (a - ca).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, d]) @ u.T
    aligned = (a - ca) @ rot.T + cb
    return float(np.sqrt(((aligned - b) ** 2).sum(1).mean()))


def cmd_roundtrip(args) -> int:
    if (args.input is None) == (args.random is None):
        raise UsageError("give exactly one of --input or --random")
    if args.random is not None:
        items = [(f"random[{k}]", random_multipolygon([args.seed, k])) for k in range(args.random)]
    else:
        items = [(f"{args.input}[{k}]", x) for k, x in enumerate(_load_geometry_items(args.input))]
    seeds = list(range(args.sample_seed, args.sample_seed + args.seeds))
    failed = 0
    rows = []
    for name, item in items:
        try:
            failures = _roundtrip_case(item, seeds)
        except (GeometryError, ReconstructionError, ValueError) as exc:
            failures = [f"{type(exc).__name__}: {exc}"]
        rows.append([name, "pass" if not failures else "fail", "; ".join(failures)])
        failed += bool(failures)
    _write_csv(args.out, ["case", "status", "detail"], rows)
    print(f"{len(items) - failed}/{len(items)} passed", file=sys.stderr)
    if failed:
        structural = all("Error:" in r[2] for r in rows if r[1] == "fail")
        return EXIT_USAGE if structural else EXIT_INVARIANT
    return EXIT_OK


def _dataset_from_args(args):
    if getattr(args, "data", None):
        return load_dataset(args.data), None
    spec = DatasetSpec(args.task, args.n, args.classes, args.noise, args.data_seed)
    return gen_dataset(spec), spec


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.hidden < 1 or args.layers < 1 or args.lr <= 0:
        raise UsageError("need --hidden >= 1, --layers >= 1 and --lr > 0")
    samples, spec = _dataset_from_args(args)
    tr, va, te = split(samples, (0.6, 0.2, 0.2), args.data_seed)
    for name, part in (("train", tr), ("val", va), ("test", te)):
        save_dataset(part, out / f"{name}.jsonl")
    num_classes = spec.num_classes if spec else max(s.label for s in samples) + 1
    snapshot = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    atomic_write(out / "config.txt", "".join(f"{k}={v}\n" for k, v in snapshot.items()))

    g_tr = [build_graph(s.mp) for s in tr]
    g_va = [build_graph(s.mp) for s in va]
    g_te = [build_graph(s.mp) for s in te]
    y_tr = [s.label for s in tr]
    y_va = [s.label for s in va]
    y_te = np.array([s.label for s in te])
    metrics_rows = []
    status = EXIT_OK
    for trial in range(args.trials):
        seed = args.seed + trial
        cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.max_epochs,
                          sample=not args.no_sample, sample_seed=args.sample_seed, seed=seed)
        model = MultipolygonGNN(hidden=args.hidden, n_layers=args.layers, num_classes=num_classes,
                                seed=seed)
        t0 = time.perf_counter()
        report = train(model, g_tr, y_tr, g_va, y_va, cfg)
        log.info("trial %d: %d epochs in %.1fs, best epoch %d", trial, len(report.history),
                 time.perf_counter() - t0, report.best_epoch)
        suffix = "" if args.trials == 1 else f"_trial{trial}"
        atomic_write(out / f"report{suffix}.csv", report.to_csv())
        save_checkpoint(model, out / f"model{suffix}.ckpt", extra={
            "seeds": {"model": seed, "data": args.data_seed, "sample": args.sample_seed},
            "sample": not args.no_sample})
        atomic_write(out / f"interaction_weights{suffix}.json",
                     json.dumps(interaction_weights(model), indent=2) + "\n")
        ev = evaluate(predict_logits(model, eval_paths(g_te, cfg)), y_te)
        metrics_rows.append(ev.as_dict())
        if report.diverged:
            log.error("trial %d diverged: %s", trial, report.message)
            status = EXIT_NUMERIC
    names = ["acc", "weighted_precision", "weighted_f1", "weighted_auc"]
    rows = [[t] + [repr(m[n]) for n in names] for t, m in enumerate(metrics_rows)]
    if args.trials > 1:
        arr = np.array([[m[n] for n in names] for m in metrics_rows])
        rows.append(["mean"] + [repr(float(v)) for v in arr.mean(0)])
        rows.append(["std"] + [repr(float(v)) for v in arr.std(0)])
    _write_csv(out / "eval.csv", ["trial"] + names, rows)
    return status


def cmd_eval(args) -> int:
    model, header = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.data)
    if not samples:
        raise UsageError(f"{args.data} holds no samples")
    sample = header.get("sample", True) if args.no_sample is None else not args.no_sample
    seed = args.sample_seed if args.sample_seed is not None else header.get("seeds", {}).get("sample", 0)
    cfg = TrainConfig(sample=sample, sample_seed=seed)
    logits = predict_logits(model, eval_paths([build_graph(s.mp) for s in samples], cfg))
    ev = evaluate(logits, [s.label for s in samples])
    d = ev.as_dict()
    _write_csv(args.out, list(d), [[repr(v) for v in d.values()]])
    return EXIT_OK


def cmd_bench(args) -> int:
    samples, _ = _dataset_from_args(args)
    name = args.name or (Path(args.data).stem if args.data else args.task)
    total = None
    ratios_full, ratios_red = [], []
    for s in samples:
        c = count_messages(build_graph(s.mp), seed=args.sample_seed)
        total = c if total is None else total + c
        ratios_full.append(c.two_hop_full / c.one_hop)
        ratios_red.append(c.two_hop_reduced / c.one_hop)
    _write_csv(args.out, ["dataset", "samples", "one_hop", "two_hop_full", "two_hop_reduced",
                          "ratio_full", "ratio_reduced", "mean_ratio_full", "mean_ratio_reduced"],
               [[name, len(samples), total.one_hop, total.two_hop_full, total.two_hop_reduced,
                 repr(total.two_hop_full / total.one_hop), repr(total.two_hop_reduced / total.one_hop),
                 repr(float(np.mean(ratios_full))), repr(float(np.mean(ratios_red)))]])
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _add_dataset_flags(p, n_default=500):
    p.add_argument("--task", choices=[t.value for t in Task], default="single-shape")
    p.add_argument("--n", type=int, default=n_default, help="number of generated samples")
    p.add_argument("--classes", type=int, default=5,
                   help="number of letter templates (I, L, T, U, O); the class count follows from the task")
    p.add_argument("--noise", type=float, default=0.05, help="per-vertex jitter amplitude")
    p.add_argument("--data-seed", type=int, default=None, help="dataset generation/split seed (default: --seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polyform", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="key=value file; command-line flags take precedence")
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="base seed (default: $POLYFORM_SEED or 0)")
        p.set_defaults(func=func)
        return p

    p = command("generate", cmd_generate, "generate a synthetic JSON-lines dataset")
    _add_dataset_flags(p)
    p.add_argument("--out", default="-", help="output .jsonl (default stdout)")

    p = command("graph", cmd_graph, "build heterogeneous visibility graphs as JSON")
    p.add_argument("--input", required=True, help="WKT/JSON multipolygon file or JSON-lines dataset")
    p.add_argument("--out", default="-")

    p = command("sample", cmd_sample, "reduce cross edges to a random spanning tree over parts")
    p.add_argument("--input", required=True, help="multipolygon or graph JSON file")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--out", default="-")

    p = command("featurize", cmd_featurize, "emit two-hop five-tuples as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--no-sample", action="store_true", help="use the full visibility graph")
    p.add_argument("--out", default="-")

    p = command("roundtrip", cmd_roundtrip, "check graph, sampled-graph and tuple reconstructions")
    p.add_argument("--input", help="WKT/JSON multipolygon, graph JSON, or JSON-lines file")
    p.add_argument("--random", type=int, help="check N random multipolygons instead")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=5, help="spanning-tree seeds per case")
    p.add_argument("--out", default="-")

    p = command("train", cmd_train, "train a classifier and write report/checkpoint/eval files")
    _add_dataset_flags(p)
    p.add_argument("--data", help="JSON-lines dataset to use instead of generating one")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--no-sample", action="store_true", help="train on full graphs without resampling")
    p.add_argument("--trials", type=int, default=1, help="independent model seeds; eval.csv gets mean and std")
    p.add_argument("--out", default="runs/latest", help="output directory")

    p = command("eval", cmd_eval, "evaluate a checkpoint on a JSON-lines dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample-seed", type=int, default=None)
    p.add_argument("--no-sample", action="store_const", const=True, default=None)
    p.add_argument("--out", default="-")

    p = command("bench", cmd_bench, "count one-hop, two-hop and sampled two-hop messages")
    _add_dataset_flags(p, n_default=200)
    p.add_argument("--data", help="JSON-lines dataset to use instead of generating one")
    p.add_argument("--name", help="dataset name for the CSV")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--out", default="-")
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**_coerce(sub, read_config_file(args.config)))
        args = parser.parse_args(argv)
    if getattr(args, "data_seed", 0) is None:
        args.data_seed = args.seed
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # --help, or an argparse usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, FileNotFoundError, ValueError) as exc:
        print(f"polyform: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, GeometryError, ParseError, ReconstructionError, FileNotFoundError,
            ValueError) as exc:
        print(f"polyform: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"polyform: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
