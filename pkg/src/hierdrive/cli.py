"""Command-line entry point.

Subcommands: gen-data, train, eval-open, eval-closed, infer, plot. Flag
values override config-file values, which override built-in defaults. Every
run writes an effective-config record beside its outputs. Exit codes:
0 ok, 2 usage error, 3 data error, 4 runtime error. HIERDRIVE_OUT sets the
default output root (default: current directory).
"""

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import CheckpointError
from .closed_loop import closed_loop_rollout
from .config import TrainConfig
from .evaluation import long_tail_eval, open_loop_eval, write_report
from .inference import MODES, InferenceMode, infer
from .model import load_model
from .scenes import (
    SCENARIO_KINDS,
    SceneFormatError,
    ZERO_SHOT_KINDS,
    build_dataset,
    load_scenes,
    save_scenes,
)
from .train import fit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

DEFAULT_MIX = "lane_keep=2,turn_left=1,turn_right=1,lane_change=1,stop_resume=1,overtake=1"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _out_root():
    return os.environ.get("HIERDRIVE_OUT", ".")


def _resolve(path, subdir=None):
    if os.path.isabs(path) or os.path.dirname(path):
        return path
    root = _out_root() if subdir is None else os.path.join(_out_root(), subdir)
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, path)


def _parse_seeds(text):
    if ".." not in text:
        raise UsageError(f"--seeds expects A..B (half-open), got {text!r}")
    a, _, b = text.partition("..")
    try:
        lo, hi = int(a), int(b)
    except ValueError as err:
        raise UsageError(f"--seeds expects integers, got {text!r}") from err
    if hi <= lo or lo < 0:
        raise UsageError(f"--seeds range {text!r} is empty or negative")
    return range(lo, hi)


def _parse_mix(text):
    mix = []
    for part in text.split(","):
        name, _, weight = part.partition("=")
        name = name.strip()
        if name not in SCENARIO_KINDS:
            raise UsageError(f"unknown scenario kind {name!r} in --mix")
        try:
            mix.append((name, float(weight) if weight else 1.0))
        except ValueError as err:
            raise UsageError(f"bad weight in --mix entry {part!r}") from err
    return mix


def _write_effective_config(out_path, payload):
    path = out_path + ".config.txt"
    with open(path, "w") as f:
        for key, value in payload.items():
            f.write(f"{key}={value}\n")
    return path


def _load_config_with_overrides(args):
    cfg = TrainConfig()
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                cfg = TrainConfig.from_kv_text(f.read())
        except FileNotFoundError as err:
            raise DataError(f"config file not found: {args.config}") from err
        except ValueError as err:
            raise DataError(f"{args.config}: {err}") from err
    overrides = {}
    for flag, field in (
        ("epochs", "epochs"), ("batch_size", "batch_size"), ("lr0", "lr0"),
        ("lr_min", "lr_min"), ("weight_decay", "weight_decay"), ("seed", "seed"),
        ("k", "k_anchors"), ("m", "m_modes"), ("d", "dim"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return cfg.replace(**overrides)


def _load_ckpt(path):
    try:
        return load_model(path)
    except FileNotFoundError as err:
        raise DataError(f"checkpoint not found: {path}") from err
    except (CheckpointError, KeyError) as err:
        raise DataError(str(err)) from err


def _load_data(path):
    try:
        return load_scenes(path)
    except FileNotFoundError as err:
        raise DataError(f"dataset not found: {path}") from err
    except SceneFormatError as err:
        raise DataError(f"{path}: {err}") from err


def _mode_from_args(args):
    return InferenceMode(args.mode, args.temperature, args.seed)


def cmd_gen_data(args):
    seeds = _parse_seeds(args.seeds)
    mix = _parse_mix(args.mix)
    if args.train_out and args.val_out:
        split = tuple(float(x) for x in args.split.split(","))
        train, val = build_dataset(seeds, mix, split)
        train_path = _resolve(args.train_out)
        val_path = _resolve(args.val_out)
        save_scenes(train_path, train)
        save_scenes(val_path, val)
        _write_effective_config(train_path, {
            "command": "gen-data", "seeds": args.seeds, "mix": args.mix,
            "split": args.split, "train_out": train_path, "val_out": val_path,
        })
        print(f"wrote {len(train)} train scenes to {train_path}, {len(val)} val to {val_path}")
        return EXIT_OK
    if not args.out:
        raise UsageError("gen-data needs --out, or both --train-out and --val-out")
    train, val = build_dataset(seeds, mix, (1.0, 0.0))
    scenes = train + val
    out_path = _resolve(args.out)
    save_scenes(out_path, scenes)
    _write_effective_config(out_path, {
        "command": "gen-data", "seeds": args.seeds, "mix": args.mix, "out": out_path,
    })
    print(f"wrote {len(scenes)} scenes to {out_path}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_config_with_overrides(args)
    scenes = _load_data(args.data)
    ckpt_path = _resolve(args.ckpt, "checkpoints")
    log_path = _resolve(os.path.basename(ckpt_path) + ".metrics.jsonl", "logs")
    try:
        result = fit(scenes, cfg, log_file=log_path, progress=not args.quiet)
    except RuntimeError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    from .model import save_model

    save_model(ckpt_path, result.model, result.anchors, cfg)
    with open(ckpt_path + ".config.txt", "w") as f:
        f.write(f"command=train\ndata={args.data}\nckpt={ckpt_path}\n")
        f.write(cfg.to_kv_text())
    print(f"wrote checkpoint {ckpt_path} (metrics: {log_path})")
    return EXIT_OK


def cmd_eval_open(args):
    model, anchors, _ = _load_ckpt(args.ckpt)
    scenes = _load_data(args.data)
    mode = _mode_from_args(args)
    report_path = _resolve(args.report, "reports")
    if args.long_tail:
        out = long_tail_eval(model, anchors, mode=mode)
        records = []
        for family, data in out.items():
            for rec in data["records"]:
                rec["family"] = family
                records.append(rec)
            agg = data["report"].as_record()
            agg["family"] = family
            agg["static_l2_avg"] = data["static"].l2[3]
            records.append(agg)
        with open(report_path, "w") as f:
            for rec in records:
                f.write(json.dumps(rec) + "\n")
        print(f"wrote long-tail report {report_path}")
    else:
        report, records = open_loop_eval(model, anchors, scenes, mode)
        write_report(report_path, records, report)
        print(
            f"open-loop over {report.n_scenes} scenes: "
            f"L2 avg {report.l2[3]:.3f} m, collision avg {report.collision[3]:.4f}"
        )
    _write_effective_config(report_path, {"command": "eval-open", **vars(args)})
    return EXIT_OK


def cmd_eval_closed(args):
    model, anchors, _ = _load_ckpt(args.ckpt)
    if args.scenario not in SCENARIO_KINDS:
        raise UsageError(f"unknown scenario {args.scenario!r}")
    mode = _mode_from_args(args)
    seeds = _parse_seeds(args.seeds)
    report_path = _resolve(args.report, "reports")
    records = []
    for seed in seeds:
        rep = closed_loop_rollout(model, anchors, args.scenario, seed, mode, args.budget)
        records.append({
            "scenario": args.scenario, "seed": seed, "completion": rep.completion,
            "collisions": rep.collisions, "success": rep.success, "steps": rep.steps,
        })
    aggregate = {
        "aggregate": True,
        "success_rate": float(np.mean([r["success"] for r in records])),
        "mean_completion": float(np.mean([r["completion"] for r in records])),
        "total_collisions": int(sum(r["collisions"] for r in records)),
    }
    write_report(report_path, records, aggregate)
    _write_effective_config(report_path, {"command": "eval-closed", **vars(args)})
    print(f"closed-loop success rate {aggregate['success_rate']:.2f} -> {report_path}")
    return EXIT_OK


def cmd_infer(args):
    model, anchors, _ = _load_ckpt(args.ckpt)
    scenes = _load_data(args.data)
    scene = _select_scene(scenes, args)
    mode = _mode_from_args(args)
    traj, plan, (k, m) = infer(model, anchors, scene, mode)
    record = {
        "scene_id": scene.id, "anchor": k, "mode": m,
        "trajectory": [[float(x), float(y)] for x, y in traj],
        "intent_probs": [float(p) for p in plan.intent_probs()],
    }
    text = json.dumps(record)
    if args.out:
        out_path = _resolve(args.out)
        with open(out_path, "w") as f:
            f.write(text + "\n")
        _write_effective_config(out_path, {"command": "infer", **vars(args)})
        print(f"wrote {out_path}")
    else:
        print(text)
    return EXIT_OK


def _select_scene(scenes, args):
    if args.id:
        for s in scenes:
            if s.id == args.id:
                return s
        raise DataError(f"scene id {args.id!r} not in dataset")
    if args.index >= len(scenes):
        raise DataError(f"scene index {args.index} out of range ({len(scenes)} scenes)")
    return scenes[args.index]


def cmd_plot(args):
    from .plots import plot_scene

    model, anchors, _ = _load_ckpt(args.ckpt)
    scenes = _load_data(args.data)
    out_dir = args.out_dir or os.path.join(_out_root(), "plots")
    os.makedirs(out_dir, exist_ok=True)
    chosen = scenes[: args.limit] if not args.id else [_select_scene(scenes, args)]
    paths = []
    for scene in chosen:
        _, plan, _ = infer(model, anchors, scene, _mode_from_args(args))
        path = os.path.join(out_dir, f"{scene.id}.svg")
        plot_scene(scene, plan, path)
        paths.append(path)
    _write_effective_config(os.path.join(out_dir, "plot"), {"command": "plot", **vars(args)})
    print(f"wrote {len(paths)} plots to {out_dir}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hierdrive",
        description="Synthetic-world hierarchical driving planner: data, training, evaluation.",
        epilog="Precedence: flags > --config file > built-in defaults. "
               "HIERDRIVE_OUT sets the output root for bare filenames.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a .scenes dataset")
    p.add_argument("--seeds", required=True, help="half-open range A..B")
    p.add_argument("--mix", default=DEFAULT_MIX, help="kind=weight list; default excludes zero-shot kinds")
    p.add_argument("--out", help="single output .scenes file")
    p.add_argument("--train-out", help="train split output (with --val-out)")
    p.add_argument("--val-out", help="val split output (zero-shot kinds land here)")
    p.add_argument("--split", default="0.8,0.2", help="train,val fractions")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a .scenes dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="output checkpoint path")
    p.add_argument("--config", help="TrainConfig key=value file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr0", type=float)
    p.add_argument("--lr-min", type=float, dest="lr_min")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int, help="intent anchor count")
    p.add_argument("--m", type=int, help="trajectory mode count")
    p.add_argument("--d", type=int, help="feature width")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    for name, help_text in (("eval-open", "open-loop metrics"),
                            ("eval-closed", "closed-loop rollouts")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--mode", default="deterministic", choices=MODES)
        p.add_argument("--temperature", type=float, default=1.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report", required=True)
        if name == "eval-open":
            p.add_argument("--data", required=True)
            p.add_argument("--long-tail", action="store_true",
                           help="evaluate the long-tail families instead of --data scenes")
            p.set_defaults(func=cmd_eval_open)
        else:
            p.add_argument("--scenario", required=True)
            p.add_argument("--seeds", default="0..5")
            p.add_argument("--budget", type=int, default=40)
            p.set_defaults(func=cmd_eval_closed)

    p = sub.add_parser("infer", help="plan one scene from a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--id", help="scene id (default: --index)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--mode", default="deterministic", choices=MODES)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the record here instead of stdout")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("plot", help="render scenes with planned hypotheses")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--id")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--limit", type=int, default=4)
    p.add_argument("--mode", default="deterministic", choices=MODES)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if err.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except Exception as err:  # noqa: BLE001 - boundary of the CLI
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
