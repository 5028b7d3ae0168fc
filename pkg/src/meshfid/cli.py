"""Unified command-line front door.

Subcommands: metric, score, train, eval, synth, dataset-stats, serve.
Every subcommand takes --seed and emits machine-readable output with
--json.  Exit codes: 2 mesh load failure, 3 metric/evaluation failure,
4 checkpoint fingerprint mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import metrics as metrics_mod
from .meshio import MeshError, MeshLoadError, load_mesh
from .metrics import METRIC_ORIENTATIONS, MetricConfig, run_all
from .model import (
    FingerprintMismatchError,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
    toy_config,
    default_config,
)
from .losses import LossWeights
from .stats import cross_validate, estimate_flops
from .train import TrainConfig, load_manifest, make_synthetic_dataset, train

EXIT_LOAD = 2
EXIT_METRIC = 3
EXIT_FINGERPRINT = 4


def _emit(payload: dict, json_path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if json_path in (None, "-"):
        print(text)
    else:
        Path(json_path).write_text(text + "\n")
        print(f"wrote {json_path}")


def _load_config_file(path: str | None) -> dict:
    """KEY=VALUE lines; '#' starts a comment."""
    if not path:
        return {}
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _resolved(args, cfg_file: dict, key: str, cast=str):
    """Flags beat the config file beats the parser default."""
    val = getattr(args, key.replace("-", "_"))
    if val is None and key in cfg_file:
        return cast(cfg_file[key])
    return val


def cmd_metric(args) -> int:
    try:
        mesh_in = load_mesh(args.input)
        mesh_ref = load_mesh(args.reference)
    except MeshLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    names = tuple(args.metrics.split(",")) if args.metrics else MetricConfig().metrics
    bad = [n for n in names if n not in METRIC_ORIENTATIONS]
    if bad:
        print(f"error: unknown metrics {bad}", file=sys.stderr)
        return EXIT_METRIC
    config = MetricConfig(n_points=args.points, seed=args.seed, metrics=names,
                          iou_resolution=args.iou_resolution)
    try:
        results = run_all(mesh_in, mesh_ref, config)
    except MeshError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_METRIC
    payload = {"input": args.input, "reference": args.reference, "seed": args.seed,
               "results": [r.to_dict() for r in results]}
    if args.json is not None:
        _emit(payload, args.json)
    else:
        for r in results:
            arrow = "higher-better" if r.higher_better else "lower-better"
            print(f"{r.name:8s} {r.value:.6g}  ({arrow})")
    return 0


def cmd_score(args) -> int:
    try:
        model = load_checkpoint(args.checkpoint)
    except FingerprintMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FINGERPRINT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    try:
        mesh_in = load_mesh(args.input)
        mesh_ref = load_mesh(args.reference)
    except MeshLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    if args.seed is not None and args.seed != model.config.seed:
        from dataclasses import replace
        model.config = replace(model.config, seed=args.seed)
    score = predict(mesh_in, mesh_ref, model)
    if args.json is not None:
        _emit({"input": args.input, "reference": args.reference,
               "checkpoint": args.checkpoint, "score": score}, args.json)
    else:
        print(f"{score:.6f}")
    return 0


def _train_configs(args, cfg_file):
    seed = args.seed if args.seed is not None else 0
    model_config = toy_config(seed=seed, n_points=args.points) if args.toy else default_config(seed=seed)
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        weights=LossWeights(),
        seed=seed,
        log_path=args.log,
        early_stop_srocc=args.early_stop_srocc,
    )
    return model_config, train_config


def cmd_train(args) -> int:
    cfg_file = _load_config_file(args.config)
    try:
        manifest = load_manifest(args.manifest)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    model_config, train_config = _train_configs(args, cfg_file)
    base_dir = Path(args.manifest).parent
    model, log = train(manifest, train_config, model_config, base_dir=base_dir)
    save_checkpoint(model, args.out)
    final = {k: v for k, v in log[-1].items() if k != "wall_time_s"}
    payload = {"checkpoint": args.out, "epochs_run": len(log), "final": final,
               "fingerprint": model.fingerprint, "seed": train_config.seed}
    if args.json is not None:
        _emit(payload, args.json)
    else:
        print(f"trained {len(log)} epochs; final loss {final['loss']:.6g}; wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    base = Path(args.manifest).parent
    if args.metric:
        if args.metric not in METRIC_ORIENTATIONS:
            print(f"error: unknown metric {args.metric!r}", file=sys.stderr)
            return EXIT_METRIC
        name = args.metric
        config = MetricConfig(n_points=args.points, seed=args.seed or 0, metrics=(name,))
        sign = 1.0 if METRIC_ORIENTATIONS[name] else -1.0  # orient higher-better

        def scorer(input_path, ref_path):
            mesh_in = load_mesh(base / input_path)
            mesh_ref = load_mesh(base / ref_path)
            return sign * run_all(mesh_in, mesh_ref, config)[0].value

        metric_name = name
    else:
        try:
            model = load_checkpoint(args.checkpoint)
        except FingerprintMismatchError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_FINGERPRINT

        def scorer(input_path, ref_path):
            return predict(load_mesh(base / input_path), load_mesh(base / ref_path), model)

        metric_name = f"tge:{model.fingerprint}"
    try:
        report = cross_validate(manifest, scorer, metric_name)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_METRIC
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    if args.json is not None:
        _emit(report.to_dict(), args.json)
    else:
        agg = report.aggregate()
        for f in report.folds:
            print(f"{f.held_out_object:20s} plcc {f.plcc:+.4f}  srocc {f.srocc:+.4f}  krocc {f.krocc:+.4f}  n={f.n_samples}")
        print(f"{'mean':20s} plcc {agg['mean']['plcc']:+.4f}  srocc {agg['mean']['srocc']:+.4f}  krocc {agg['mean']['krocc']:+.4f}")
    return 0


def cmd_synth(args) -> int:
    levels = [float(x) for x in args.levels.split(",")]
    try:
        refs = [load_mesh(p) for p in args.references]
    except MeshLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    manifest = make_synthetic_dataset(refs, levels, seed=args.seed or 0, out_dir=args.out)
    payload = {"out": args.out, "objects": len(manifest["objects"]),
               "pairs": sum(len(o["distorted"]) for o in manifest["objects"]),
               "levels": levels, "seed": args.seed or 0}
    if args.json is not None:
        _emit(payload, args.json)
    else:
        print(f"wrote {payload['pairs']} distorted meshes for {payload['objects']} objects to {args.out}")
    return 0


def cmd_dataset_stats(args) -> int:
    from .service import AnnotationStore

    try:
        store = AnnotationStore(args.dataset_root, store_dir=args.store)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    groups = {}
    for group in sorted(store.groups):
        try:
            groups[group] = store.export_group(group)
        except Exception:
            groups[group] = {"group": group, "n_sessions": 0}
    if args.json is not None:
        _emit({"groups": groups}, args.json)
    else:
        for group, g in groups.items():
            if g.get("n_sessions"):
                print(f"{group}: sessions={g['n_sessions']} mean CI before={g['mean_ci_before']} "
                      f"after={g['mean_ci_after']} removed={g['removed_fraction']:.1%}")
            else:
                print(f"{group}: no completed sessions")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.addr.partition(":")
    app = create_app(args.dataset_root, store_dir=args.store, rounds_total=args.rounds)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))
    return 0


def cmd_flops(args) -> int:
    config = toy_config() if args.toy else default_config()
    gflops = estimate_flops(config, n_points=args.points)
    if args.json is not None:
        _emit({"n_points": args.points or config.n_points, "gflops": gflops}, args.json)
    else:
        print(f"{gflops:.3f} GFLOPs at {args.points or config.n_points} points")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshfid",
                                     description="Rendering-free fidelity evaluation for textured meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metric", help="run classical full-reference metrics on a mesh pair")
    p.add_argument("input")
    p.add_argument("reference")
    p.add_argument("--metrics", help="comma-separated subset: cd,iou,fscore,p2s,nd,uhd")
    p.add_argument("--points", type=int, default=2048)
    p.add_argument("--iou-resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(fn=cmd_metric)

    p = sub.add_parser("score", help="predict a learned fidelity score for a mesh pair")
    p.add_argument("input")
    p.add_argument("reference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("train", help="train the fidelity model on a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--toy", action="store_true", help="use the small test-scale architecture")
    p.add_argument("--points", type=int, default=64, help="sampled points per mesh (toy config)")
    p.add_argument("--early-stop-srocc", type=float, default=None)
    p.add_argument("--log", help="JSON-lines training log path")
    p.add_argument("--config", help="KEY=VALUE config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="object-level cross-validation of a metric or checkpoint")
    p.add_argument("manifest")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--metric", help="baseline metric name")
    g.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--csv", help="also write a CSV table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("synth", help="generate a graded synthetic distortion dataset")
    p.add_argument("references", nargs="+")
    p.add_argument("--levels", default="0,0.25,0.5,1.0")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("dataset-stats", help="annotation statistics for a dataset root")
    p.add_argument("dataset_root")
    p.add_argument("--store", help="annotation store directory (default <root>/annotations)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(fn=cmd_dataset_stats)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("dataset_root")
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.add_argument("--store")
    p.add_argument("--rounds", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("flops", help="analytic FLOP estimate for the model")
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--toy", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(fn=cmd_flops)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
