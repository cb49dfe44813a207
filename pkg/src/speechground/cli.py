"""Command line interface.

Subcommands: gen-data, train, eval, ablate, gradcheck, plot.  Exit code 0 on
success, 1 on an operational failure (refusing to overwrite, failed check,
bad input files), 2 on usage errors including invalid config values.  Every
writing command resolves its configuration first and records a manifest in
the output directory before doing any work, so interrupted runs are visible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import config as config_mod
from . import scenegen, trainer
from .evalmetrics import format_breakdown_csv


class CliError(RuntimeError):
    """Operational failure; maps to exit code 1."""


def _prepare_out(path, force: bool) -> None:
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise CliError(f"output directory {path!r} is not empty (use --force)")
    os.makedirs(path, exist_ok=True)


def _write_manifest(
    out_dir, command: str, resolved: dict, config_path, extra: dict | None = None
) -> None:
    from . import __version__

    manifest = {
        "command": command,
        "config_path": config_path,
        "out": str(out_dir),
        "version": f"v{__version__}",
        "config": {},
    }
    for key in sorted(resolved):
        value = resolved[key]
        manifest["config"][key] = list(value) if isinstance(value, tuple) else value
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolved(args, overrides: dict | None = None) -> dict:
    over = dict(overrides or {})
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    return config_mod.resolve_config(args.config, over)


def cmd_gen_data(args) -> int:
    over = {}
    if args.scenes is not None:
        over["train_scenes"] = args.scenes
    if args.val_scenes is not None:
        over["val_scenes"] = args.val_scenes
    if args.utterances_per_scene is not None:
        over["utterances_per_scene"] = args.utterances_per_scene
    resolved = _resolved(args, over)
    if resolved["train_scenes"] <= 0 or resolved["val_scenes"] < 0:
        raise ValueError("scene counts must be positive")
    if resolved["utterances_per_scene"] <= 0:
        raise ValueError("utterances_per_scene must be positive")
    _prepare_out(args.out, args.force)
    _write_manifest(args.out, "gen-data", resolved, args.config)
    base_seed = resolved["data_seed"] if args.seed is None else args.seed
    splits = [("train", resolved["train_scenes"], base_seed)]
    if resolved["val_scenes"] > 0:
        splits.append(("val", resolved["val_scenes"], base_seed + 1))
    for name, n_scenes, seed in splits:
        ds = scenegen.generate_dataset(
            n_scenes, resolved["utterances_per_scene"], seed
        )
        scenegen.save_dataset(ds.scenes, ds.utterances, os.path.join(args.out, name))
        uniq = sum(1 for u in ds.utterances if u.subset_tag == "unique")
        frac = uniq / len(ds.utterances)
        print(
            f"{name}: {len(ds.scenes)} scenes, {len(ds.utterances)} utterances "
            f"(unique {frac:.1%}, multiple {1.0 - frac:.1%})"
        )
    return 0


def _load_split(data_dir, name: str) -> scenegen.Dataset:
    path = os.path.join(data_dir, name)
    if not os.path.isdir(path):
        raise CliError(f"missing dataset split directory {path!r}")
    return scenegen.load_dataset(path)


def cmd_train(args) -> int:
    resolved = _resolved(args)
    cfg = config_mod.to_train_config(resolved)
    _prepare_out(args.out, args.force)
    _write_manifest(args.out, "train", resolved, args.config)
    train_ds = _load_split(args.data, "train")
    val_dir = os.path.join(args.data, "val")
    val_ds = scenegen.load_dataset(val_dir) if os.path.isdir(val_dir) else None
    model, log = trainer.train(cfg, train_ds, val_ds, verbose=not args.quiet)
    ckpt_path = os.path.join(args.out, "checkpoint.bin")
    trainer.save_checkpoint(model.store, ckpt_path)
    log.checkpoint = ckpt_path
    trainer.save_runlog(log, os.path.join(args.out, "runlog.jsonl"))
    with open(os.path.join(args.out, "config.resolved"), "w") as fh:
        fh.write(config_mod.format_config(resolved))
    if log.final_val is not None:
        with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
            fh.write("subset,thresh,accuracy,n\n")
            for row in log.final_val:
                fh.write(f"{row['subset']},{row['thresh']},{row['accuracy']},{row['n']}\n")
    print(f"checkpoint written to {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    config_path = args.config
    if config_path is None:
        sibling = os.path.join(os.path.dirname(args.checkpoint), "config.resolved")
        if os.path.isfile(sibling):
            config_path = sibling
    resolved = config_mod.resolve_config(config_path, {"seed": args.seed} if args.seed is not None else None)
    cfg = config_mod.to_train_config(resolved)
    beta = args.beta if args.beta is not None else cfg.effective_beta()
    model = trainer.GroundingModel(cfg)
    try:
        trainer.load_checkpoint(model.store, args.checkpoint)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    ds = _load_split(args.data, args.split)
    split = trainer.compile_dataset(ds, cfg)
    outcome = trainer.evaluate_compiled(model, split, beta)
    csv_text = format_breakdown_csv(outcome.table)
    if args.out:
        _prepare_out(args.out, args.force)
        _write_manifest(
            args.out, "eval", resolved, config_path, {"beta": beta, "checkpoint": args.checkpoint}
        )
        with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
            fh.write(csv_text)
    sys.stdout.write(csv_text)
    if args.match_rate:
        print(f"match_rate,{outcome.match}")
    return 0


def cmd_ablate(args) -> int:
    resolved = _resolved(args)
    cfg = config_mod.to_train_config(resolved)
    _prepare_out(args.out, args.force)
    _write_manifest(args.out, "ablate", resolved, args.config, {"sweep": args.sweep})
    train_ds = _load_split(args.data, "train")
    val_ds = _load_split(args.data, "val")
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else (0, 1, 2)
    values = tuple(float(v) for v in args.values.split(",")) if args.values else None
    rows = trainer.ablate(cfg, train_ds, val_ds, args.sweep, seeds=seeds, values=values)
    trainer.write_ablation_csv(rows, os.path.join(args.out, "ablation.csv"))
    with open(os.path.join(args.out, "summary.csv"), "w") as fh:
        fh.write("cell,subset,thresh,mean,min,max,n_seeds\n")
        for s in trainer.summarize_ablation(rows):
            fh.write(
                f"{s['cell']},{s['subset']},{s['thresh']},{s['mean']},"
                f"{s['min']},{s['max']},{s['n_seeds']}\n"
            )
    print(f"ablation rows written to {os.path.join(args.out, 'ablation.csv')}")
    return 0


def cmd_gradcheck(args) -> int:
    resolved = _resolved(args)
    cfg = config_mod.to_train_config(resolved)
    import dataclasses

    check_cfg = dataclasses.replace(
        cfg,
        dim=cfg.gradcheck_dim,
        n_heads=2,
        proposals_m=8,
        n_points=256,
        noise_level=min(cfg.noise_level, 1.0),
    )
    gen_cfg = scenegen.GenerationConfig(n_objects_range=(3, 6))
    ds = scenegen.generate_dataset(2, 2, seed=cfg.seed, cfg=gen_cfg)
    report = trainer.grad_check(check_cfg, ds, eps=args.eps)
    for group in sorted(report.group_errors):
        print(f"{group}: max rel err {report.group_errors[group]:.3e}")
    print(f"worst: {report.worst_group} ({report.max_rel_error:.3e}) over {report.n_checked} entries")
    if not report.ok(args.tol):
        print(f"FAIL: exceeds tolerance {args.tol}", file=sys.stderr)
        return 1
    print(f"OK: within tolerance {args.tol}")
    return 0


def cmd_plot(args) -> int:
    from . import plotting

    _prepare_out(args.out, args.force)
    _write_manifest(args.out, "plot", _resolved(args), args.config)
    written = []
    if args.runlog:
        log = trainer.load_runlog(args.runlog)
        if not log.epochs:
            raise CliError(f"run log {args.runlog!r} has no epochs")
        written += plotting.plot_loss_curves(log, args.out)
    if args.ablation:
        written += plotting.plot_ablation(args.ablation, args.out, thresh=args.thresh)
    if not written:
        raise CliError("nothing to plot: pass --runlog and/or --ablation")
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechground",
        description="Speech-guided 3D grounding lab: data, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override config seed")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true", help="allow non-empty output directory")

    p = sub.add_parser("gen-data", help="generate train/val scene and utterance files")
    common(p)
    p.add_argument("--scenes", type=int, help="override train scene count")
    p.add_argument("--val-scenes", type=int, help="override val scene count")
    p.add_argument("--utterances-per-scene", type=int, help="override utterances per scene")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--config", help="config file (defaults to checkpoint sibling)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="optional output directory for metrics.csv")
    p.add_argument("--force", action="store_true")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.add_argument("--beta", type=float, help="fusion weight override")
    p.add_argument("--match-rate", action="store_true", help="also print selection match rate")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation sweep")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument(
        "--sweep",
        required=True,
        choices=("modules", "alignment", "beta", "rate", "noise"),
    )
    p.add_argument("--seeds", help="comma-separated seeds (default 0,1,2)")
    p.add_argument("--values", help="comma-separated sweep values where applicable")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("plot", help="render run log or ablation charts")
    common(p)
    p.add_argument("--runlog", help="runlog.jsonl from train")
    p.add_argument("--ablation", help="ablation.csv from ablate")
    p.add_argument("--thresh", default="0.5", help="IoU threshold column to chart")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (scenegen.DatasetFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
