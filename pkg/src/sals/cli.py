"""``sals`` command line: synth, targets, train, analyze, sweep.

All randomness comes from numpy's PCG64 generator seeded from the explicit
``--split-seed`` / ``--seeds`` flags, so repeating a command with the same
flags rewrites byte-identical CSV and JSON files. Wall-clock timings go to
``timing.log`` only.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .analysis import (export_embeddings, gini, median_ratio, ratio_profile, reliability,
                       summarize, sweep, verify_ce_decomposition)
from .data import (DatasetFormatError, SbmConfig, generate_sbm, load_dataset, load_mask, make_splits,
                   save_dataset)
from .gnn import (TrainConfig, TrainingDiverged, accuracy, forward, load_model, node_logit_gradients,
                  normalize_adjacency, per_node_cross_entropy, save_model, train_select_depth)
from .graph import Role
from .targets import SmoothingConfig, TargetKind, compute_ratios, hard_targets, make_targets

log = logging.getLogger("sals")

REPORT_FILE = "report.json"


class CliError(Exception):
    pass


def parse_int_list(text: str) -> list[int]:
    """``"5"`` -> 0..4, ``"2..6"`` -> 2..6 inclusive, ``"1,4,9"`` -> that list."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(t) for t in text.split(".."))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        if "," in text:
            return [int(t) for t in text.split(",") if t.strip()]
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if n <= 0:
        raise argparse.ArgumentTypeError("a count must be positive")
    return list(range(n))


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load(args):
    missing = [f for f in ("edges", "features", "labels") if getattr(args, f) is None]
    if missing:
        raise CliError("missing dataset flags: " + ", ".join("--" + m for m in missing))
    ds = load_dataset(args.edges, args.features, args.labels)
    mask = _mask(ds, args.mask, args.split_seed)
    ds.labels.check_against(mask)
    return ds, mask


def _mask(ds, mask_path, split_seed):
    if mask_path is not None:
        return load_mask(mask_path, ds.num_nodes)
    return make_splits(ds.num_nodes, seed=split_seed)


def _dataset_echo(args) -> dict:
    return {"edges": str(args.edges), "features": str(args.features), "labels": str(args.labels),
            "split_seed": args.split_seed, "mask": None if args.mask is None else str(args.mask)}


def _smoothing(args) -> SmoothingConfig:
    try:
        return SmoothingConfig(args.epsilon, args.gamma)
    except ValueError as err:
        raise CliError(str(err)) from None


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(learning_rate=args.lr, weight_decay=args.weight_decay, dropout=args.dropout,
                           epochs=args.epochs, hidden_dim=args.hidden, num_layers=args.layers[0],
                           early_stop_patience=args.patience, residual=args.residual)
    except ValueError as err:
        raise CliError(str(err)) from None


def cmd_synth(args) -> int:
    try:
        cfg = SbmConfig.from_json(Path(args.config).read_text())
    except (OSError, ValueError, TypeError) as err:
        raise CliError(f"invalid SBM config {args.config}: {err}") from None
    out = Path(args.out_dir)
    ds = generate_sbm(cfg)
    try:
        paths = save_dataset(ds, out)
    except OSError as err:
        raise CliError(f"cannot write to {out}: {err}") from None
    print(f"wrote {ds.num_nodes}-node dataset to {out}: "
          + ", ".join(p.name for p in paths.values()))
    return 0


def cmd_targets(args) -> int:
    ds, mask = _load(args)
    cfg = _smoothing(args)
    targets = make_targets(args.kind, ds.labels, mask, ds.graph, cfg)
    out = Path(args.out) if args.out else Path(args.out_dir) / f"targets_{args.kind}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["node_id"] + [f"class_{c}" for c in range(ds.num_classes)])
        for i, row in enumerate(targets.matrix):
            w.writerow([i] + [repr(float(v)) for v in row])
    print(f"wrote {args.kind} targets for {ds.num_nodes} nodes to {out}")
    return 0


def _train_runs(ds, mask, kind, smoothing, base: TrainConfig, seeds, depths, out: Path | None):
    adj = normalize_adjacency(ds.graph)
    targets = make_targets(kind, ds.labels, mask, ds.graph, smoothing)
    runs, failures = [], []
    for seed in seeds:
        cfg = replace(base, seed=seed)
        try:
            model, history, depth = train_select_depth(ds.graph, ds.features, ds.labels, targets,
                                                       mask, cfg, depths, adj=adj)
        except TrainingDiverged as err:
            failures.append({"seed": seed, "error": str(err)})
            runs.append({"seed": seed, "status": "failed"})
            continue
        probs = forward(model, adj, ds.features).probabilities
        run = {
            "seed": seed, "status": "ok", "num_layers": depth, "best_epoch": history.best_epoch,
            "train_acc": accuracy(probs, ds.labels, mask, Role.TRAIN),
            "val_acc": accuracy(probs, ds.labels, mask, Role.VAL),
            "test_acc": accuracy(probs, ds.labels, mask, Role.TEST),
            "test_ece": reliability(probs, ds.labels, mask, Role.TEST).ece,
        }
        if out is not None:
            run["history_csv"] = f"history_seed{seed}.csv"
            run["model"] = f"model_seed{seed}.json"
            history.to_csv(out / run["history_csv"])
            save_model(model, out / run["model"])
        runs.append(run)
    return runs, failures


def _aggregate(runs) -> dict:
    ok = [r for r in runs if r["status"] == "ok"]
    agg = {"runs_ok": len(ok), "runs_failed": len(runs) - len(ok)}
    for key in ("test_acc", "val_acc", "test_ece"):
        agg[f"{key}_mean"], agg[f"{key}_std"] = summarize(r[key] for r in ok)
    return agg


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    ds, mask = _load(args)
    smoothing = _smoothing(args)
    base = _train_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs, failures = _train_runs(ds, mask, args.kind, smoothing, base, args.seeds, args.layers, out)
    agg = _aggregate(runs)
    report = {
        "command": "train",
        "dataset": _dataset_echo(args),
        "target": {"kind": args.kind, "epsilon": smoothing.epsilon, "gamma": smoothing.gamma},
        "train": {k: v for k, v in asdict(base).items() if k != "seed"},
        "layers": args.layers,
        "seeds": args.seeds,
        "runs": runs,
        "failures": failures,
        "aggregate": agg,
    }
    _write_json(out / REPORT_FILE, report)
    elapsed = time.perf_counter() - t0
    (out / "timing.log").write_text(f"train wall_clock_seconds {elapsed:.3f}\n")
    print(f"{args.kind}: test acc {agg['test_acc_mean']:.4f} +- {agg['test_acc_std']:.4f} "
          f"over {agg['runs_ok']} runs ({agg['runs_failed']} failed), ECE {agg['test_ece_mean']:.4f}")
    for f in failures:
        print(f"  seed {f['seed']} failed: {f['error']}", file=sys.stderr)
    return 0 if not failures else (1 if agg["runs_ok"] == 0 else 2)


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    report_path = run_dir / REPORT_FILE
    if not report_path.exists():
        raise CliError(f"no {REPORT_FILE} in {run_dir}; run 'sals train' first")
    report = json.loads(report_path.read_text())
    ok = [r for r in report["runs"] if r["status"] == "ok"]
    if args.seed is not None:
        ok = [r for r in ok if r["seed"] == args.seed]
    if not ok:
        raise CliError("no completed run matches")
    run = ok[0]
    model_path = run_dir / run["model"]
    if not model_path.exists():
        raise CliError(f"missing checkpoint {model_path}")
    echo = report["dataset"]
    ds = load_dataset(echo["edges"], echo["features"], echo["labels"])
    mask = _mask(ds, echo.get("mask"), echo["split_seed"])
    smoothing = SmoothingConfig(report["target"]["epsilon"], report["target"]["gamma"])
    model = load_model(model_path)
    adj = normalize_adjacency(ds.graph)
    stats = compute_ratios(ds.graph, ds.labels, mask)
    targets = make_targets(report["target"]["kind"], ds.labels, mask, ds.graph, smoothing)

    cache = forward(model, adj, ds.features)
    probs = cache.probabilities
    out = Path(args.out_dir) if args.out_dir else run_dir
    out.mkdir(parents=True, exist_ok=True)
    rel = reliability(probs, ds.labels, mask, Role(args.role))
    rel.to_csv(out / "reliability.csv")
    loss = per_node_cross_entropy(cache, hard_targets(ds.labels, mask))
    norms = np.linalg.norm(node_logit_gradients(cache, targets), axis=1)
    profile = ratio_profile(loss, norms, stats, ds.labels, mask)
    profile.to_csv(out / "ratio_profile.csv")
    profile.cumulative_to_csv(out / "cumulative_loss.csv")
    residual = verify_ce_decomposition(ds.graph, ds.labels, mask, stats, smoothing, probs)
    emitted = ["reliability.csv", "ratio_profile.csv", "cumulative_loss.csv"]
    threshold = args.threshold if args.threshold is not None else median_ratio(stats, ds.labels, mask)
    if model.num_layers >= 2:
        export_embeddings(model, adj, ds.features, ds.labels, mask, stats, threshold).to_csv(
            out / "embeddings.csv")
        emitted.append("embeddings.csv")
    summary = {
        "seed": run["seed"], "role": Role(args.role).name.lower(), "ece": rel.ece,
        "ce_decomposition_max_residual": residual,
        "train_loss_gini": gini(loss[mask.train]),
        "bucket_grad_norms": profile.bucket_grad_norms.tolist(),
        "embedding_threshold": threshold,
        "files": emitted,
    }
    _write_json(out / "analysis.json", summary)
    print(f"CE decomposition max residual: {residual:.3e}")
    print(f"ECE ({summary['role']}): {rel.ece:.4f}; wrote {', '.join(emitted)} to {out}")
    return 0


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    ds, mask = _load(args)
    if not args.epsilon or not args.gamma:
        raise CliError("--epsilon and --gamma grids must be non-empty")
    for e in args.epsilon:
        for g in args.gamma:
            _smoothing(argparse.Namespace(epsilon=e, gamma=g))
    base = _train_config(args)
    grid = sweep(ds, mask, args.epsilon, args.gamma, args.seeds, base, kind=args.kind)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid.to_csv(out / "sweep.csv")
    grid.matrix_to_csv(out / "sweep_matrix.csv")
    failures = [{"epsilon": grid.epsilon_values[a], "gamma": grid.gamma_values[b], "seed": s, "error": e}
                for (a, b), items in sorted(grid.failures.items()) for s, e in items]
    _write_json(out / "sweep.json", {
        "command": "sweep", "dataset": _dataset_echo(args), "kind": args.kind,
        "train": {k: v for k, v in asdict(base).items() if k != "seed"},
        "epsilon": args.epsilon, "gamma": args.gamma, "seeds": args.seeds,
        "mean_test_acc": [[None if np.isnan(v) else float(v) for v in row] for row in grid.accuracy],
        "failures": failures, "files": ["sweep.csv", "sweep_matrix.csv"],
    })
    (out / "timing.log").write_text(f"sweep wall_clock_seconds {time.perf_counter() - t0:.3f}\n")
    n = len(args.epsilon) * len(args.gamma) * len(args.seeds)
    print(f"sweep: {n} runs over {len(args.epsilon)}x{len(args.gamma)} cells, {len(failures)} failed")
    for a, e in enumerate(grid.epsilon_values):
        print("  eps=%-6g " % e + " ".join("gamma=%g: %.4f" % (g, grid.accuracy[a, b])
                                        for b, g in enumerate(grid.gamma_values)))
    return 0 if not failures else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sals", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=True):
        if dataset:
            sp.add_argument("--edges", type=Path)
            sp.add_argument("--features", type=Path)
            sp.add_argument("--labels", type=Path)
            sp.add_argument("--split-seed", type=int, default=0)
            sp.add_argument("--mask", type=Path, help="explicit split CSV (node_id,role); overrides --split-seed")
        sp.add_argument("--out-dir", type=Path, default=Path("."))

    def smoothing(sp):
        sp.add_argument("--kind", choices=[k.value for k in TargetKind], default="sals")
        sp.add_argument("--epsilon", type=float, default=0.4)
        sp.add_argument("--gamma", type=float, default=0.8)

    def training(sp):
        d = TrainConfig()
        sp.add_argument("--seeds", type=parse_int_list, default=[0],
                        help="count N (seeds 0..N-1), range a..b, or list a,b,c")
        sp.add_argument("--layers", type=parse_int_list, default=[d.num_layers],
                        help="depth, or a range/list to select on validation accuracy")
        sp.add_argument("--hidden", type=int, default=d.hidden_dim)
        sp.add_argument("--lr", type=float, default=d.learning_rate)
        sp.add_argument("--weight-decay", type=float, default=d.weight_decay)
        sp.add_argument("--dropout", type=float, default=d.dropout)
        sp.add_argument("--epochs", type=int, default=d.epochs)
        sp.add_argument("--patience", type=int, default=d.early_stop_patience)
        sp.add_argument("--residual", action="store_true", help="ResGCN skip connections")

    sp = sub.add_parser("synth", help="write an SBM dataset from a JSON config")
    sp.add_argument("--config", type=Path, required=True)
    common(sp, dataset=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("targets", help="export the N x C target matrix as CSV")
    common(sp)
    smoothing(sp)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_targets)

    sp = sub.add_parser("train", help="train one model per seed and report accuracy")
    common(sp)
    smoothing(sp)
    training(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("analyze", help="calibration, ratio profile, CE identity, embeddings")
    sp.add_argument("--run-dir", type=Path, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--role", type=lambda s: Role[s.upper()], default=Role.TEST)
    sp.add_argument("--threshold", type=float, help="own-class ratio cut for embeddings (default: median)")
    sp.add_argument("--out-dir", type=Path)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="test accuracy over an epsilon x gamma grid")
    common(sp)
    sp.add_argument("--kind", choices=[k.value for k in TargetKind], default="sals")
    sp.add_argument("--epsilon", type=parse_float_list, default=[0.4])
    sp.add_argument("--gamma", type=parse_float_list, default=[0.8])
    training(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, DatasetFormatError, ValueError, OSError) as err:
        print(f"sals {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
