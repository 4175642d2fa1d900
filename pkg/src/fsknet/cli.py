"""``fsknet`` command line: describe, gradcheck, synth, split, train, eval, rerun.

Exit codes: 0 success, 1 usage/configuration error, 2 data or format error,
3 numerical failure (divergence, gradient check failure).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .data import (FormatError, SplitSpec, ValidationError, extract_patches, load_cube,
                   normalize, parse_ratio, save_cube, stratified_split, synth_cube)
from .layers import ConfigError
from .metrics import MetricError, format_table
from .model import CheckpointError, FsknetConfig, build, load_checkpoint, save_checkpoint
from .tensor import ShapeError
from .training import DivergenceError, TrainConfig, evaluate, fit, gradcheck_suite, save_report

log = logging.getLogger("fsknet")

MANIFEST_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_manifest(out: Path, args, artifacts: list[str]) -> None:
    flags = {k: v for k, v in vars(args).items() if k not in ("func",)}
    _write_json(out / "manifest.json", {
        "format_version": MANIFEST_VERSION,
        "fsknet_version": __version__,
        "command": args.command,
        "flags": flags,
        "artifacts": sorted(artifacts),
    })


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_config(args) -> FsknetConfig:
    return FsknetConfig(patch=args.patch, bands=args.bands, classes=args.classes, sk_blocks=args.sk_blocks)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_describe(args) -> int:
    graph = build(_model_config(args), seed=args.seed)
    text = graph.param_report().format()
    if args.flops:
        text += "\n\n" + graph.flops_report().format()
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "describe.txt").write_text(text + "\n")
        write_manifest(out, args, ["describe.txt"])
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = gradcheck_suite(seed=args.seed, trials=args.trials)
    print(report.format())
    print("gradcheck:", "PASS" if report.passed else "FAIL")
    if args.out:
        out = _out_dir(args)
        (out / "gradcheck.txt").write_text(report.format() + "\n")
        write_manifest(out, args, ["gradcheck.txt"])
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_synth(args) -> int:
    out = _out_dir(args)
    cube = synth_cube(args.height, args.width, args.bands, args.classes, args.noise, args.seed)
    header = out / f"{args.name}.hdr"
    save_cube(cube, header)
    write_manifest(out, args, [header.name, header.with_suffix(".refl").name, header.with_suffix(".labels").name])
    print(f"wrote {header}")
    return EXIT_OK


def _write_indices(path: Path, idx: np.ndarray) -> None:
    path.write_text("".join(f"{int(i)}\n" for i in idx))


def _read_indices(path: Path) -> np.ndarray:
    text = path.read_text().split()
    try:
        return np.array([int(t) for t in text], dtype=np.int64)
    except ValueError:
        raise FormatError(f"{path}: expected one integer pixel index per line") from None


def _split_files(out: Path, parts: dict) -> list[str]:
    names = []
    for part in ("train", "val", "test"):
        _write_indices(out / f"{part}.idx", parts[part])
        names.append(f"{part}.idx")
    return names


def cmd_split(args) -> int:
    out = _out_dir(args)
    cube = load_cube(args.cube)
    split = stratified_split(cube, SplitSpec(parse_ratio(args.ratio), args.seed))
    names = _split_files(out, {"train": split.train, "val": split.val, "test": split.test})
    _write_json(out / "split.json", {"ratio": args.ratio, "seed": args.seed, "warnings": split.warnings,
                                     "sizes": {p: len(getattr(split, p)) for p in ("train", "val", "test")}})
    write_manifest(out, args, names + ["split.json"])
    print(f"train {len(split.train)}  val {len(split.val)}  test {len(split.test)}")
    return EXIT_OK


def _load_split(args, cube):
    if args.split:
        d = Path(args.split)
        return {p: _read_indices(d / f"{p}.idx") for p in ("train", "val", "test")}, []
    split = stratified_split(cube, SplitSpec(parse_ratio(args.ratio), args.seed))
    return {"train": split.train, "val": split.val, "test": split.test}, split.warnings


def _prepared_cube(args):
    cube = load_cube(args.cube)
    return cube if args.no_normalize else normalize(cube)


def cmd_train(args) -> int:
    out = _out_dir(args)
    cube = _prepared_cube(args)
    parts, warnings = _load_split(args, cube)
    sets = {p: extract_patches(cube, args.patch, idx) for p, idx in parts.items()}
    config = FsknetConfig(patch=args.patch, bands=cube.bands, classes=cube.class_count, sk_blocks=args.sk_blocks)
    graph = build(config, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                      optimizer=args.optimizer, seed=args.seed)
    report = fit(graph, sets["train"], sets["val"], cfg)
    save_checkpoint(graph, out / "checkpoint.fskn")
    artifacts = ["checkpoint.fskn", "train_log.tsv", "train_summary.json"]
    extra = {"split_warnings": warnings, "sizes": {p: len(s) for p, s in sets.items()}}
    if len(sets["test"]):
        result = evaluate(graph, sets["test"])
        extra["test"] = {k: result[k] for k in ("OA", "AA", "Kappa")}
        print(format_table({"test": extra["test"]}))
    save_report(report, out / "train_log.tsv", out / "train_summary.json", extra)
    if not args.split:
        artifacts += _split_files(out, parts)
    write_manifest(out, args, artifacts)
    if report.diverged:
        raise DivergenceError(f"training diverged; last good epoch {report.last_good_epoch}")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _out_dir(args)
    graph = load_checkpoint(args.checkpoint)
    cube = _prepared_cube(args)
    if cube.bands != graph.config.bands:
        raise ShapeError(f"cube has {cube.bands} bands but the checkpoint expects {graph.config.bands}")
    parts, _ = _load_split(args, cube)
    data = extract_patches(cube, graph.config.patch, parts[args.subset])
    result = evaluate(graph, data)
    metrics = {k: round(result[k], 4) for k in ("OA", "AA", "Kappa")}
    table = format_table({args.subset: result})
    print(table)
    _write_json(out / "eval_summary.json", {"subset": args.subset, "samples": len(data), **metrics,
                                            "confusion": result["confusion"]})
    write_manifest(out, args, ["eval_summary.json"])
    return EXIT_OK


def cmd_rerun(args) -> int:
    """Replay the command recorded in a manifest, writing to a new --out."""
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise FormatError(f"{args.manifest}: unsupported manifest version {manifest.get('format_version')}")
    command = manifest["command"]
    if command == "rerun":
        raise UsageError("a rerun manifest cannot be replayed")
    replay = make_parser().parse_args([command, *_required_stub(command)])
    vars(replay).update(manifest["flags"])
    replay.out = args.out
    return replay.func(replay)


def _required_stub(command: str) -> list[str]:
    # placeholders so argparse accepts the subcommand; the manifest overwrites them
    stubs = {"synth": ["--out", "."], "split": ["--cube", ".", "--out", "."],
             "train": ["--cube", ".", "--out", "."],
             "eval": ["--cube", ".", "--out", ".", "--checkpoint", "."]}
    return stubs.get(command, [])


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _model_flags(p, with_data_dims=True):
    p.add_argument("--patch", type=int, default=19, help="odd spatial patch edge (default 19)")
    if with_data_dims:
        p.add_argument("--bands", type=int, default=200)
        p.add_argument("--classes", type=int, default=16)
    p.add_argument("--sk-blocks", type=int, default=1, help="number of selective-kernel blocks")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fsknet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=int, default=1, help="BLAS threads; 1 = serial, reproducible mode")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("describe", help="print the layer table (shapes, connections, params)")
    _model_flags(p)
    p.add_argument("--flops", action="store_true", help="also print multiply-accumulate counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a seeded synthetic scene")
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--bands", type=int, default=200)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="scene")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="stratified train/val/test pixel split")
    p.add_argument("--cube", required=True, help="cube header file")
    p.add_argument("--ratio", default="5:1:4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    for name, func in (("train", cmd_train), ("eval", cmd_eval)):
        p = sub.add_parser(name, help=f"{name} FSKNet on a cube")
        p.add_argument("--cube", required=True)
        p.add_argument("--split", help="directory with train/val/test .idx files (else --ratio/--seed)")
        p.add_argument("--ratio", default="5:1:4")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-normalize", action="store_true", help="skip per-band standardisation")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)
    train_p = sub.choices["train"]
    _model_flags(train_p, with_data_dims=False)
    train_p.add_argument("--epochs", type=int, default=10)
    train_p.add_argument("--batch-size", type=int, default=32)
    train_p.add_argument("--lr", type=float, default=1e-3)
    train_p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    eval_p = sub.choices["eval"]
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--subset", choices=("train", "val", "test"), default="test")

    p = sub.add_parser("rerun", help="replay a run from its manifest.json")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"fsknet {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ValidationError, CheckpointError, ShapeError, MetricError,
            FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"fsknet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, FloatingPointError) as exc:
        print(f"fsknet {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
