"""Command-line surface tying the library together.

Subcommands: ``synth`` (write a synthetic dataset), ``train`` (fit a
model and write a checkpoint plus a JSONL log), ``decode`` (per-video
localizations), ``classify``, ``eval`` (metric report), and
``pca-export``.  Failures exit nonzero with a single ``error: ...`` line
on stderr; output files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataio, evalkit, model as model_mod, pseudo as pseudo_mod
from . import synth as synth_mod, train as train_mod
from .core import Architecture
from .decode import DEFAULT_OPTIONS, classify, detect_multi, localize


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line machine-parsable errors
        raise CliError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="statechange",
                     description="Temporal localization of object states and "
                                 "state-modifying actions over frame features.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON file with generator settings")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit a model on a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", default="joint2",
                   choices=[a.value for a in Architecture])
    p.add_argument("--rules", default="A,B,C,D,E",
                   help="comma-separated label rules to enable")
    p.add_argument("--delta", type=float, default=2.0,
                   help="positive-window radius in seconds")
    p.add_argument("--delta-prime", type=float, default=60.0,
                   help="action-background distance in seconds")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4, help="head learning rate")
    p.add_argument("--adapter-lr", type=float, default=1e-5)
    p.add_argument("--warmup-epochs", type=int, default=5)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--l2", type=float, default=1e-3, help="head L2 penalty")
    p.add_argument("--action-loss-scale", type=float, default=0.2)
    p.add_argument("--max-labels", type=int, default=25,
                   help="per-video label budget per step")
    p.add_argument("--hidden", type=int, default=64, help="hidden layer width")
    p.add_argument("--state-background", action=argparse.BooleanOptionalAction,
                   default=None, help="add a background state class "
                                      "(default: per-architecture)")
    p.add_argument("--optimizer", default="momentum-sgd",
                   choices=["momentum-sgd", "plain-gd"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="JSONL training log (default: <out>.log.jsonl)")
    p.add_argument("--dump-labels",
                   help="write first-epoch pseudo labels to this JSONL file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("decode", help="localize state-change triples")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--category", help="decode this category for every video")
    p.add_argument("--threshold", type=float,
                   help="detect every category scoring above this value")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("classify", help="predict the most probable category")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("eval", help="compute metrics against annotations")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations",
                   help="annotation JSON (default: from the manifest)")
    p.add_argument("--metrics", default="precision,map,accuracy")
    p.add_argument("--split", default="all", choices=["all", "train", "heldout"],
                   help="restrict to one manifest split")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pca-export", help="export 2-D feature-space coordinates")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_pca)

    return parser


def _load_for_inference(args):
    params, ckpt_catalog = model_mod.load_checkpoint(args.ckpt)
    data = dataio.load_dataset(args.manifest)
    if ckpt_catalog is not None and ckpt_catalog.n != data.catalog.n:
        raise CliError(f"checkpoint has {ckpt_catalog.n} categories, "
                       f"manifest has {data.catalog.n}")
    if params.n_categories != data.catalog.n:
        raise CliError(f"checkpoint expects {params.n_categories} categories, "
                       f"manifest has {data.catalog.n}")
    if params.feature_dim != data.videos[0].dim:
        raise CliError(f"checkpoint expects {params.feature_dim}-d features, "
                       f"dataset has {data.videos[0].dim}-d")
    return params, data


def _cmd_synth(args) -> int:
    settings = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            settings = json.load(fh)
    if "confusable_pairs" in settings and settings["confusable_pairs"] is not None:
        settings["confusable_pairs"] = tuple(
            tuple(p) for p in settings["confusable_pairs"])
    settings["seed"] = args.seed
    cfg = synth_mod.SynthConfig(**settings)
    data = synth_mod.generate(cfg)
    splits = {vid: "heldout" for vid in data.heldout_ids}
    splits.update({vid: "train" for vid in data.train_ids})
    manifest = dataio.write_dataset(args.out, data.catalog, data.videos,
                                    data.annotations, splits)
    print(manifest)
    return 0


def _cmd_train(args) -> int:
    data = dataio.load_dataset(args.manifest)
    rules = frozenset(r.strip().upper() for r in args.rules.split(",") if r.strip())
    rule_cfg = pseudo_mod.LabelRuleConfig(
        delta_seconds=args.delta, delta_prime_seconds=args.delta_prime,
        rules_enabled=rules, seed=args.seed)
    cfg = train_mod.TrainConfig(
        epochs=args.epochs, batch_videos=args.batch, base_lr_heads=args.lr,
        base_lr_adapter=args.adapter_lr, warmup_epochs=min(args.warmup_epochs,
                                                           args.epochs),
        momentum=args.momentum, l2_penalty_heads=args.l2,
        action_loss_scale=args.action_loss_scale, optimizer_mode=args.optimizer,
        max_labeled_frames_per_video=args.max_labels, seed=args.seed)
    train_videos = data.split("train")
    heldout = data.split("heldout")
    params = model_mod.init_params(
        Architecture(args.arch), data.catalog.n, data.videos[0].dim,
        hidden_dim=args.hidden, seed=args.seed,
        state_background=args.state_background)

    dumped: list[dict] = []
    sink = None
    if args.dump_labels:
        sink = lambda step, labels: dumped.extend(pseudo_mod.label_rows(labels))
    params, logs = train_mod.fit(
        params, train_videos, cfg, rule_cfg, heldout=heldout,
        heldout_annotations=data.annotations_for(heldout),
        catalog=data.catalog, label_sink=sink)

    model_mod.save_checkpoint(params, args.out, data.catalog)
    log_path = args.log or f"{args.out}.log.jsonl"
    dataio.atomic_write_text(log_path, dataio.jsonl_dumps(
        log.to_json_dict() for log in logs))
    if args.dump_labels:
        dataio.atomic_write_text(args.dump_labels, dataio.jsonl_dumps(dumped))
    print(args.out)
    return 0


def _loc_row(data, video, loc) -> dict:
    return {"video_id": video.id, "category": loc.category,
            "category_name": data.catalog.categories[loc.category].name,
            "s1_frame": loc.s1_frame, "action_frame": loc.action_frame,
            "s2_frame": loc.s2_frame, "score": loc.score}


def _cmd_decode(args) -> int:
    if args.category is not None and args.threshold is not None:
        raise CliError("--category and --threshold are mutually exclusive")
    params, data = _load_for_inference(args)
    rows = []
    for video in data.videos:
        scores = model_mod.forward(params, video.frames)
        if args.threshold is not None:
            rows.extend(_loc_row(data, video, loc)
                        for loc in detect_multi(scores, args.threshold))
        else:
            category = (data.catalog.index_of(args.category)
                        if args.category is not None else video.label)
            rows.append(_loc_row(data, video, localize(scores, category)))
    dataio.atomic_write_text(args.out, dataio.jsonl_dumps(rows))
    print(args.out)
    return 0


def _cmd_classify(args) -> int:
    params, data = _load_for_inference(args)
    rows = []
    for video in data.videos:
        category, score = classify(model_mod.forward(params, video.frames))
        rows.append({"video_id": video.id, "category": category,
                     "category_name": data.catalog.categories[category].name,
                     "score": score})
    dataio.atomic_write_text(args.out, dataio.jsonl_dumps(rows))
    print(args.out)
    return 0


def _cmd_eval(args) -> int:
    params, data = _load_for_inference(args)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - {"precision", "map", "accuracy"}
    if unknown:
        raise CliError(f"unknown metrics: {sorted(unknown)}")
    annotations = data.annotations
    if args.annotations:
        with open(args.annotations, "r", encoding="utf-8") as fh:
            annotations = tuple(dataio.annotations_from_json(fh.read()))
    annotated = {a.video_id for a in annotations}
    videos = data.videos if args.split == "all" else data.split(args.split)
    videos = [v for v in videos if v.id in annotated]
    if not videos:
        raise CliError("no annotated videos to evaluate")

    forwards = {v.id: model_mod.forward(params, v.frames) for v in videos}
    report: dict = {"num_videos": len(videos)}
    if "precision" in metrics:
        predictions = [(v.id, localize(forwards[v.id], v.label)) for v in videos]
        state_p, action_p = evalkit.precision_at_1(predictions, annotations,
                                                   data.catalog)
        report["state_precision"] = state_p
        report["action_precision"] = action_p
    if "map" in metrics:
        probs = {v.id: np.column_stack(forwards[v.id].tracks(v.label))
                 for v in videos}
        report["map"] = evalkit.mean_average_precision(probs, annotations)
    if "accuracy" in metrics:
        report["accuracy"] = evalkit.classification_accuracy(
            [forwards[v.id] for v in videos], [v.label for v in videos])
    dataio.atomic_write_text(args.out,
                             json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(args.out)
    return 0


def _cmd_pca(args) -> int:
    params, data = _load_for_inference(args)
    rows = evalkit.pca_export(params, data.videos)
    dataio.atomic_write_text(args.out, evalkit.pca_rows_to_csv(rows))
    print(args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
