"""Command-line entry point: ``sleepnet <subcommand> [--config FILE] [--key value ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .audio import decode_wav, resample
from .config import FIELD_TYPES, RunConfig, build_config, coerce, load_config, write_config
from .dataset import WindowingConfig, corpus_stats, format_stats, load_manifest, save_windows
from .errors import ConfigError, SleepNetError
from .evaluation import evaluate_clips, rate_clip
from .experiment import load_split, plain_windows, run_grid, run_training, training_windows
from .model import load_model
from .synth import generate_corpus

log = logging.getLogger("sleepnet")

# keys each subcommand needs to point at something that already exists
REQUIRED_PATHS = {
    "synth": (),
    "stats": ("data_dir",),
    "preprocess": ("data_dir",),
    "train": ("data_dir",),
    "evaluate": ("data_dir", "model"),
    "predict": ("model",),
    "report": ("data_dir",),
}
NEEDS_OUT_DIR = {"synth", "preprocess", "train", "evaluate", "report"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    group = p.add_argument_group("configuration keys")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        group.add_argument(flag, dest=f"cfg_{f.name}", default=None, metavar=str(f.type).upper())


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sleepnet", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sleepnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate the synthetic tone corpus",
        "stats": "per-split clip-duration statistics",
        "preprocess": "resample, window, balance and augment into RVW1 window files",
        "train": "train a model and keep the best-dev-loss checkpoint",
        "evaluate": "score a model on one split",
        "predict": "print one rating per audio file",
        "report": "run the comparison grid and write config_id,mse,mae,rho",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _add_config_flags(p)
        if name == "predict":
            p.add_argument("files", nargs="+", help="WAV files to rate")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config(args.config) if args.config else {}
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key.strip()] = coerce(key.strip(), raw)
    for name in FIELD_TYPES:
        raw = getattr(args, f"cfg_{name}")
        if raw is not None:
            overrides[name] = coerce(name, raw)
    return build_config(file_values, overrides)


def check_paths(command: str, cfg: RunConfig) -> None:
    for key in REQUIRED_PATHS[command]:
        value = getattr(cfg, key)
        if not value:
            raise ConfigError(f"{command} needs {key} (--{key.replace('_', '-')})")
        if not Path(value).exists():
            raise ConfigError(f"{key} {value!r} does not exist")
    if "data_dir" in REQUIRED_PATHS[command] and not (Path(cfg.data_dir) / "manifest.csv").exists():
        raise ConfigError(f"no manifest.csv in {cfg.data_dir}")
    if command in NEEDS_OUT_DIR and not cfg.out_dir:
        raise ConfigError(f"{command} needs out_dir (--out-dir)")


def cmd_synth(cfg: RunConfig, args) -> None:
    manifest = generate_corpus(cfg.synth_spec(), cfg.out_dir)
    print(f"wrote {len(manifest.entries)} clips to {cfg.out_dir}")


def cmd_stats(cfg: RunConfig, args) -> None:
    manifest = load_manifest(Path(cfg.data_dir) / "manifest.csv")
    table = format_stats(corpus_stats(manifest, cfg.data_dir))
    sys.stdout.write(table)
    if cfg.out_dir:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out_dir) / "stats.txt").write_text(table)


def cmd_preprocess(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    manifest = load_manifest(Path(cfg.data_dir) / "manifest.csv")
    train_windows = training_windows(load_split(cfg, "train", manifest), cfg)
    save_windows(train_windows, out / "train.rvw")
    dev_windows = plain_windows(load_split(cfg, "dev", manifest), cfg)
    save_windows(dev_windows, out / "dev.rvw")
    print(f"train: {len(train_windows)} windows, dev: {len(dev_windows)} windows")


def cmd_train(cfg: RunConfig, args) -> None:
    out = Path(cfg.out_dir)
    result = run_training(cfg, checkpoint=str(out / "model.rvm"), progress=True)
    result.history.to_csv(out / "history.csv")
    print(f"best epoch {result.history.best_epoch + 1}, dev loss {min(result.history.dev_loss):.6f}")


def _windowing_for(model, cfg: RunConfig) -> WindowingConfig:
    return WindowingConfig(model.spec.window_size_s, cfg.stride_s, model.spec.sample_rate, cfg.allow_short)


def cmd_evaluate(cfg: RunConfig, args) -> None:
    model = load_model(cfg.model)
    # sample rate and window length come from the model, not the config
    cfg = cfg.replace(sample_rate=model.spec.sample_rate, window_size_s=model.spec.window_size_s)
    clips = load_split(cfg, cfg.split)
    # an undefined metric (e.g. constant ratings) still yields a report, with nan in its place
    report = evaluate_clips(model, clips, _windowing_for(model, cfg), cfg.aggregation, cfg.rounding, strict=False)
    for key in ("rho", "uar"):
        val = getattr(report, key)
        if val is not None and val != val:
            print(f"sleepnet evaluate: warning: {key} is undefined for this split", file=sys.stderr)
    out = Path(cfg.out_dir)
    report.write_csv(out / "report.csv")
    report.write_summary(out / "summary.txt")
    for k, v in report.summary().items():
        print(f"{k} = {v}")


def cmd_predict(cfg: RunConfig, args) -> None:
    model = load_model(cfg.model)
    wcfg = _windowing_for(model, cfg)
    for path in args.files:
        clip = resample(decode_wav(path), model.spec.sample_rate)
        _, rating = rate_clip(model, clip, wcfg, cfg.aggregation, cfg.rounding)
        print(f"{clip.id} {rating}")


def cmd_report(cfg: RunConfig, args) -> None:
    rows = run_grid(cfg, Path(cfg.out_dir) / "grid.csv", progress=True)
    print(f"{'config_id':<18} {'MSE':>8} {'MAE':>8} {'rho':>8}")
    for config_id, mse, mae, rho in rows:
        print(f"{config_id:<18} {mse:>8.3f} {mae:>8.3f} {rho:>8.3f}")


COMMANDS = {
    "synth": cmd_synth,
    "stats": cmd_stats,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "report": cmd_report,
}


def run_command(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        check_paths(args.command, cfg)
        if cfg.out_dir:
            write_config(cfg, cfg.out_dir)
        COMMANDS[args.command](cfg, args)
    except (SleepNetError, OSError) as exc:
        print(f"sleepnet {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
