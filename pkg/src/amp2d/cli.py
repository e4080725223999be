"""Command-line entry point.

Subcommands: train, eval, gen-clip, check, ablate. Every TrainerConfig key is
a flag (and an AMP2D_<KEY> environment variable); precedence is
defaults < config file < environment < flags. Exit codes: 0 success, 2 input
error, 3 checkpoint/artifact mismatch, 4 failed self-check.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import fields

from . import __version__
from .character import builtin_names, get_character
from .checks import run_checks
from .clipgen import CLIP_KINDS, generate_clip
from .config import FIELD_INFO, TrainerConfig, build_config, config_to_text
from .motion import load_clip, save_clip
from .rl import CheckpointMismatch, train
from .tasks import TASK_NAMES

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISMATCH = 3
EXIT_CHECK_FAILED = 4

ABLATIONS = ("no-gp", "no-vel")


def _bool_arg(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got '{raw}'")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in fields(TrainerConfig):
        desc, origin = FIELD_INFO[f.name]
        note = "AMP default" if origin == "method" else "impl default"
        ftype = type(f.default)
        kwargs = {"type": _bool_arg if ftype is bool else ftype,
                  "default": None, "dest": f.name,
                  "help": f"{desc} [default: {f.default}; {note}]"}
        parser.add_argument("--" + f.name.replace("_", "-"), **kwargs)


def _collect_overrides(args) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(TrainerConfig)
            if getattr(args, f.name, None) is not None}


def _write_manifest(cfg: TrainerConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "config": cfg.to_dict(),
        "resolved": {
            "gamma": cfg.resolved_gamma(),
            "policy_stepsize": cfg.resolved_policy_stepsize(),
            "value_stepsize": cfg.resolved_value_stepsize(),
            "disc_updates": cfg.resolved_disc_updates(),
            "w_task": cfg.resolved_w_task(),
            "w_gp": cfg.resolved_w_gp(),
            "include_velocities": cfg.resolved_include_velocities(),
        },
        "seed": cfg.seed,
        "ablation": cfg.ablation,
        "code_version": __version__,
        "character": cfg.character,
        "dataset": os.path.abspath(cfg.dataset) if cfg.dataset else "",
        "out_dir": os.path.abspath(out_dir),
        "created": datetime.datetime.now().isoformat(timespec="seconds"),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    with open(os.path.join(out_dir, "config_used.cfg"), "w") as fh:
        fh.write(config_to_text(cfg))


def _run_training(cfg: TrainerConfig, resume: str | None, quiet: bool) -> int:
    log = (lambda *_: None) if quiet else print
    _write_manifest(cfg, cfg.out_dir)
    final = train(cfg, resume=resume, log=log)
    log(f"final checkpoint: {final}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args.config, _collect_overrides(args))
    return _run_training(cfg, args.resume, args.quiet)


def cmd_ablate(args) -> int:
    if args.name not in ABLATIONS:
        print(f"unknown ablation '{args.name}' (choose from {', '.join(ABLATIONS)})",
              file=sys.stderr)
        return EXIT_INPUT
    overrides = _collect_overrides(args)
    overrides["ablation"] = args.name
    cfg = build_config(args.config, overrides)
    if "out_dir" not in overrides:
        cfg.out_dir = cfg.out_dir.rstrip("/") + f"-{args.name}"
    return _run_training(cfg, None, args.quiet)


def cmd_eval(args) -> int:
    from .evaluate import evaluate
    if args.mode == "imitate" and not args.clip:
        print("imitation evaluation requires --clip", file=sys.stderr)
        return EXIT_INPUT
    report = evaluate(args.checkpoint, mode=args.mode, episodes=args.episodes,
                      seed=args.seed, clip_path=args.clip,
                      deterministic=args.deterministic,
                      dump_frames_dir=args.dump_frames)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.checkpoint))
    jpath, cpath = report.write(out_dir)
    print(json.dumps(report.to_dict(), indent=1))
    print(f"report: {jpath}")
    return EXIT_OK


def cmd_gen_clip(args) -> int:
    character = get_character(args.character)
    params = {"duration": args.duration, "rate": args.rate, "name": args.name}
    if args.kind in ("oscillate", "reach"):
        params["amplitude"] = args.amplitude
        params["frequency"] = args.frequency
    if args.kind == "gait":
        params["speed"] = args.speed
        params["frequency"] = args.frequency
        params["hip_amplitude"] = args.hip_amplitude
        params["knee_amplitude"] = args.knee_amplitude
    clip = generate_clip(args.kind, character, **params)
    save_clip(clip, args.out)
    load_clip(args.out)  # round-trip sanity
    print(f"wrote {args.out}: {len(clip.frames)} frames at {clip.frame_rate} Hz")
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_checks(args.scope, seed=args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amp2d",
        description="Adversarial motion priors for planar simulated characters.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run training to the sample budget")
    p_train.add_argument("--config", help="key=value config file")
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_train.add_argument("--quiet", action="store_true")
    _add_config_flags(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_abl = sub.add_parser("ablate", help="train with a named component disabled")
    p_abl.add_argument("name", help="|".join(ABLATIONS))
    p_abl.add_argument("--config", help="key=value config file")
    p_abl.add_argument("--quiet", action="store_true")
    _add_config_flags(p_abl)
    p_abl.set_defaults(fn=cmd_ablate)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--mode", choices=("auto", "imitate", "task"), default="auto")
    p_eval.add_argument("--episodes", type=int, default=32,
                        help="episodes per report [default: 32; AMP default]")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--clip", help="reference clip for imitation mode")
    p_eval.add_argument("--deterministic", action="store_true",
                        help="use mean actions instead of sampling")
    p_eval.add_argument("--out-dir", help="report directory (default: beside checkpoint)")
    p_eval.add_argument("--dump-frames", help="directory for per-episode joint positions")
    p_eval.set_defaults(fn=cmd_eval)

    p_gen = sub.add_parser("gen-clip", help="generate a synthetic motion clip")
    p_gen.add_argument("kind", help="|".join(CLIP_KINDS))
    p_gen.add_argument("--character", default="pointmass",
                       help=f"built-in ({', '.join(builtin_names())}) or JSON path")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--duration", type=float, default=4.0)
    p_gen.add_argument("--rate", type=float, default=30.0)
    p_gen.add_argument("--frequency", type=float, default=1.0)
    p_gen.add_argument("--amplitude", type=float, default=0.5)
    p_gen.add_argument("--speed", type=float, default=1.0)
    p_gen.add_argument("--hip-amplitude", type=float, default=0.5)
    p_gen.add_argument("--knee-amplitude", type=float, default=0.8)
    p_gen.add_argument("--name", default="clip")
    p_gen.set_defaults(fn=cmd_gen_clip)

    p_check = sub.add_parser("check", help="run the independent-oracle self checks")
    p_check.add_argument("scope", nargs="?", default="all",
                         help="all|grads|gae|dtw|disc|sim")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CheckpointMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
