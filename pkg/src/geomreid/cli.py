"""Command line entry point: ``geomreid <command> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .embed.model import load_checkpoint
from .errors import ConfigError, GeomReidError
from .evalkit.folds import make_folds
from .manifest import DatasetManifest, read_manifest, read_sequence
from .render import color_to_ppm, depth_to_pgm, parts_to_pgm, render_sequence
from .synth import write_dataset


def _common(p, out_default=None):
    p.add_argument("--config", default="quickstart",
                   help="config JSON path or bundled config name (default: quickstart)")
    p.add_argument("--out", default=out_default, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--arm", choices=sorted(ex.ARM_ALIASES), help="modality arms to run")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--up", choices=["y", "z"], help="vertical axis of manifest point clouds")


def build_parser():
    parser = argparse.ArgumentParser(prog="geomreid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic PLY sequences and manifests")
    _common(p)
    p.add_argument("--form", choices=["binary_le", "ascii"], default="binary_le")

    p = sub.add_parser("render", help="dump depth/color/part images for a manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--every", type=int, default=1, help="keep every n-th frame")

    p = sub.add_parser("train", help="train one embedding per mode and arm on all sequences")
    _common(p)

    p = sub.add_parser("eval", help="probe-gallery metrics of a checkpoint on a manifest")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("xval", help="cross-validated experiment with statistics and saliency")
    _common(p)
    p.add_argument("--no-saliency", action="store_true")

    p = sub.add_parser("saliency", help="saliency audit on the first fold only")
    _common(p)

    p = sub.add_parser("verify-report", help="re-derive summary.json from the emitted CSVs")
    p.add_argument("--out", required=True)
    return parser


def _config(args):
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.arm:
        over["arms"] = list(ex.ARM_ALIASES[args.arm])
    if args.out:
        over["out"] = args.out
    if args.up:
        over["dataset"] = {"up": args.up}
    return ex.load_config(args.config, over)


def cmd_synth(args):
    cfg = _config(args)
    ds = cfg["dataset"]
    if ds["source"] != "synthetic":
        raise ConfigError("synth needs a synthetic dataset config")
    out = Path(cfg["out"])
    written = {}
    for mode, (entries, plans) in ex.dataset_sources(cfg).items():
        manifest = DatasetManifest(tuple(entries), mode)
        seqs = (p.generate() for p in plans)
        written[mode] = str(write_dataset(manifest, seqs, out / "data" / mode, args.form))
    print(json.dumps({"manifests": written}, indent=2))


def cmd_render(args):
    cfg = _config(args)
    manifest = read_manifest(args.manifest)
    out = Path(cfg["out"])
    res = tuple(cfg["resolution"])
    up = cfg["dataset"].get("up", "y")
    n = 0
    for entry in manifest.entries:
        imgs = render_sequence(read_sequence(entry, up), res)
        for k in range(0, len(imgs), max(1, args.every)):
            stem = f"{entry.sequence_id}_{k:06d}"
            ex._write(out, f"depth/{stem}.pgm", depth_to_pgm(imgs[k]))
            ex._write(out, f"color/{stem}.ppm", color_to_ppm(imgs[k].color))
            ex._write(out, f"parts/{stem}.pgm", parts_to_pgm(imgs[k]))
            n += 1
    print(json.dumps({"images": n, "out": str(out)}))


def cmd_train(args):
    cfg = _config(args)
    out = Path(cfg["out"])
    sources = ex.dataset_sources(cfg)
    feats = ex.extract_features(cfg, sources, args.jobs)
    written = []
    for mode, (entries, _) in sources.items():
        labels = np.array([e.identity_id for e in entries])
        for arm in cfg["arms"]:
            X = ex._arm_matrix(feats[mode], arm, range(len(entries)))
            _, ckpt = ex._fold_task((cfg, arm, 0, X, labels, {}))
            written.append(ex._write(out, f"checkpoints/{mode}_{arm}.json", ckpt))
    print(json.dumps({"checkpoints": written}, indent=2))


def cmd_eval(args):
    cfg = _config(args)
    model, scaler, doc = load_checkpoint(Path(args.checkpoint).read_text())
    arm = doc.get("arm") or cfg["arms"][0]
    manifest = read_manifest(args.manifest)
    up = cfg["dataset"].get("up", "y")
    loaders = [ex.ManifestSequence(e, up) for e in manifest.entries]
    feats = ex.pmap(ex._features_task, [(ld, tuple(cfg["resolution"]), None) for ld in loaders], args.jobs)
    X = ex._arm_matrix(feats, arm, range(len(loaders)))
    rep = ex.evaluate_split(model, scaler, X, list(manifest.entries))
    result = {"arm": arm, **rep.as_dict(), "per_identity_acc": rep.per_identity_acc}
    ex._write(Path(cfg["out"]), "eval.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(json.dumps(result, indent=2, sort_keys=True))


def cmd_xval(args):
    cfg = _config(args)
    stages = ("xval",) if args.no_saliency else ("xval", "saliency")
    summary = ex.run_experiment(cfg, jobs=args.jobs, stages=stages)
    for cond, block in summary["conditions"].items():
        for metric, st in block["stats"].items():
            cells = "  ".join(f"{a}: {s}" for a, s in st["table"].items())
            print(f"{cond:>13} {metric:>10}  {cells}")
    print(f"wrote {cfg['out']}/summary.json")


def cmd_saliency(args):
    cfg = _config(args)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    sources = ex.dataset_sources(cfg)
    folds = make_folds(sorted({e.surgery_id for e in sources[next(iter(sources))][0]}), cfg["k"])
    feats = ex.extract_features(cfg, sources, args.jobs)
    fold = folds[0]
    models = {}
    for mode, (entries, _) in sources.items():
        tr = [i for i, e in enumerate(entries) if e.surgery_id in fold.train_surgeries]
        labels = np.array([entries[i].identity_id for i in tr])
        for arm in cfg["arms"]:
            X = ex._arm_matrix(feats[mode], arm, tr)
            models[(mode, arm, fold.fold_index)] = ex._fold_task((cfg, arm, fold.fold_index, X, labels, {}))[1]
    summary = ex.saliency_stage(cfg, sources, feats, folds, models, out, args.jobs)
    ex._write(out, "saliency.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_verify(args):
    problems = ex.verify_report(args.out)
    for p in problems:
        print(p)
    print("ok" if not problems else f"{len(problems)} mismatches")
    return 1 if problems else 0


COMMANDS = {"synth": cmd_synth, "render": cmd_render, "train": cmd_train, "eval": cmd_eval,
            "xval": cmd_xval, "saliency": cmd_saliency, "verify-report": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args) or 0
    except (GeomReidError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc),
               "stage": getattr(exc, "stage", args.command)}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
