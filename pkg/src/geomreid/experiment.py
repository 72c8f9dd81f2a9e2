"""End-to-end cross-validated experiments: data, features, training, metrics,
statistics, saliency and the on-disk report.

Stages write their artifacts as they finish and record themselves in
``MANIFEST.json`` so a failed run leaves a readable partial result.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from itertools import combinations
from pathlib import Path

import numpy as np

from .embed.descriptors import APPEARANCE_DIM, GEOMETRIC_DIM, appearance_descriptor, geometric_descriptor
from .embed.model import Standardizer, forward, load_checkpoint, save_checkpoint
from .embed.triplet import TrainConfig, train_embedding
from .errors import ConfigError, GeomReidError
from .evalkit.folds import make_folds
from .evalkit.metrics import METRIC_NAMES, evaluate_probe_gallery
from .evalkit.stats import (StatTestResult, mean_sd_string, paired_t_test, rm_anova,
                            with_adjusted)
from .manifest import read_manifest, read_sequence
from .render import color_to_ppm, depth_to_pgm, render_sequence
from .saliency import (DescriptorPipeline, IdentityLogit, feet_head_shares, fit_linear_head,
                       input_gradient_saliency, overlay, region_attribution)
from .synth import GenMode, derive_seed, plan_dataset

CONFIG_VERSION = 1
ARMS = ("geometric", "appearance")
ARM_ALIASES = {"geo": ("geometric",), "rgb": ("appearance",), "both": ARMS}
DESCRIPTOR_DIMS = {"geometric": GEOMETRIC_DIM, "appearance": APPEARANCE_DIM}
STAT_METRIC = "acc_micro"

DEFAULT_CONFIG = {
    "v": CONFIG_VERSION,
    "seed": 0,
    "dataset": {
        "source": "synthetic",
        "n_identities": 8,
        "n_surgeries": 6,
        "seqs_per_surgery": 2,
        "n_frames": 72,
        "fps": 30.0,
        "n_points": 2048,
        "modes": ["confounded", "standardized"],
        "noise_sd_m": 0.005,
        "color_noise_sd": 0.02,
    },
    "arms": list(ARMS),
    "resolution": [64, 64],
    "train": {"margin": 0.3, "learning_rate": 0.05, "epochs": 40, "batch_P": 8, "batch_K": 4,
              "hidden": [64, 64], "out_dim": 32},
    "scaler": {"geometric": "zscore", "appearance": "none"},
    "k": 4,
    "transfer": {"train_mode": "confounded", "test_mode": "standardized"},
    "saliency": {"n_sequences": 24, "n_overlays": 4, "head_l2": 0.01},
    "out": "runs/experiment",
}


# config --------------------------------------------------------------------

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def bundled_config(name: str = "quickstart") -> dict:
    text = resources.files("geomreid").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)


def load_config(source, overrides=None, base_dir=None) -> dict:
    """Parse and validate an experiment config (path, JSON text or dict)."""
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            path = Path(text)
            if not path.exists():
                try:
                    return load_config(bundled_config(text), overrides)
                except (FileNotFoundError, ModuleNotFoundError):
                    raise ConfigError(f"config file {text} not found") from None
            base_dir = path.parent
            text = path.read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("v", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {raw.get('v')!r}")
    cfg = _merge(DEFAULT_CONFIG, raw)
    if overrides:
        cfg = _merge(cfg, overrides)
    ds = cfg["dataset"]
    if ds.get("source") == "manifest" and base_dir is not None:
        ds["manifests"] = {m: p if os.path.isabs(p) else str(Path(base_dir) / p)
                           for m, p in ds.get("manifests", {}).items()}
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    arms = cfg["arms"]
    if not arms or any(a not in ARMS for a in arms) or len(set(arms)) != len(arms):
        raise ConfigError(f"arms must be a nonempty subset of {list(ARMS)}, got {arms}")
    if not isinstance(cfg["k"], int) or cfg["k"] < 2:
        raise ConfigError("k must be an integer >= 2")
    res = cfg["resolution"]
    if len(res) != 2 or min(res) < 8:
        raise ConfigError("resolution must be [H, W] with both >= 8")
    ds = cfg["dataset"]
    if ds["source"] == "synthetic":
        for key in ("n_identities", "n_surgeries", "seqs_per_surgery", "n_frames", "n_points"):
            if not isinstance(ds[key], int) or ds[key] < 1:
                raise ConfigError(f"dataset.{key} must be a positive integer")
        if not ds["modes"] or any(m not in ("confounded", "standardized") for m in ds["modes"]):
            raise ConfigError("dataset.modes must list confounded and/or standardized")
    elif ds["source"] == "manifest":
        if not ds.get("manifests"):
            raise ConfigError("dataset.manifests must map a mode tag to a manifest path")
        if ds.get("up", "y") not in ("y", "z"):
            raise ConfigError("dataset.up must be 'y' or 'z'")
    else:
        raise ConfigError(f"unknown dataset source {ds['source']!r}")
    tr = cfg["transfer"]
    if tr is not None:
        modes = data_modes(cfg)
        if tr.get("train_mode") not in modes or tr.get("test_mode") not in modes:
            raise ConfigError(f"transfer modes must be among the dataset modes {modes}")
    try:
        train_config(cfg, 0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train section: {exc}") from None


def data_modes(cfg):
    ds = cfg["dataset"]
    if ds["source"] == "synthetic":
        return list(ds["modes"])
    return list(ds["manifests"])


def train_config(cfg, seed) -> TrainConfig:
    return TrainConfig(seed=seed, **cfg["train"])


# data sources --------------------------------------------------------------

@dataclass(frozen=True)
class ManifestSequence:
    entry: object
    up: str = "y"

    def generate(self):
        return read_sequence(self.entry, self.up)


def dataset_sources(cfg):
    """{mode: (entries, loaders)} with one loader per sequence."""
    ds = cfg["dataset"]
    out = {}
    if ds["source"] == "synthetic":
        for mode in ds["modes"]:
            gm = GenMode(mode, ds["noise_sd_m"], ds["color_noise_sd"])
            manifest, plans = plan_dataset(ds["n_identities"], ds["n_surgeries"], ds["seqs_per_surgery"],
                                           gm, cfg["seed"], ds["n_frames"], ds["fps"], ds["n_points"])
            out[mode] = (list(manifest.entries), plans)
    else:
        for mode, path in ds["manifests"].items():
            manifest = read_manifest(path)
            out[mode] = (list(manifest.entries), [ManifestSequence(e, ds.get("up", "y"))
                                                  for e in manifest.entries])
    return out


def split_gallery_probe(entries):
    """First sequence (by sequence_id) of each identity in each surgery is gallery."""
    groups = {}
    for i, e in enumerate(entries):
        groups.setdefault((e.surgery_id, e.identity_id), []).append(i)
    gallery = set()
    for idx in groups.values():
        gallery.add(min(idx, key=lambda i: entries[i].sequence_id))
    g = [i for i in range(len(entries)) if i in gallery]
    p = [i for i in range(len(entries)) if i not in gallery]
    return g, p


# parallel helpers ----------------------------------------------------------

def pmap(fn, items, jobs: int = 1):
    """Order-preserving map, optionally over worker processes."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _features_task(args):
    loader, resolution, fps = args
    seq = loader.generate()
    imgs = render_sequence(seq, resolution)
    out = {"geometric": geometric_descriptor(imgs, seq.fps if fps is None else fps)}
    if any(img.has_color for img in imgs):
        out["appearance"] = appearance_descriptor(imgs, "hard")
        out["appearance_soft"] = appearance_descriptor(imgs, "soft")
    return out


def _embed(model, scaler, X):
    return forward(model, scaler(X))[0]


def _fit(X, labels, arm, cfg, seed):
    scaler = Standardizer.fit(X, cfg["scaler"][arm])
    model, curve = train_embedding(scaler(X), labels, train_config(cfg, seed))
    return model, scaler, curve


def evaluate_split(model, scaler, X, entries):
    g, p = split_gallery_probe(entries)
    E = _embed(model, scaler, X)
    labels = [e.identity_id for e in entries]
    return evaluate_probe_gallery(E[p], [labels[i] for i in p], E[g], [labels[i] for i in g])


def _fold_task(args):
    cfg, arm, fold, train_X, train_labels, tests = args
    seed = derive_seed(cfg["seed"], "train", arm, fold)
    model, scaler, curve = _fit(train_X, train_labels, arm, cfg, seed)
    results = {cond: evaluate_split(model, scaler, X, entries) for cond, (X, entries) in tests.items()}
    ckpt = save_checkpoint(model, train_config(cfg, seed).to_dict(), seed, scaler,
                           extra={"arm": arm, "fold": fold, "loss_curve": curve.tolist()})
    return results, ckpt


def _saliency_task(args):
    loader, resolution, routes, identity = args
    seq = loader.generate()
    imgs = render_sequence(seq, resolution)
    parts = np.stack([img.parts for img in imgs])
    mid = len(imgs) // 2
    out = {"depth": depth_to_pgm(imgs[mid]), "routes": {}}
    for route, pipeline, head in routes:
        smap = input_gradient_saliency(pipeline, imgs, IdentityLogit(head, identity))
        out["routes"][route] = {
            "shares": region_attribution(smap, parts),
            "entropy": smap.entropy(),
            "all_zero": smap.all_zero,
            "overlay": color_to_ppm(overlay(imgs[mid].color, smap.weights[mid], imgs[mid].mask)),
        }
    return out


# reporting -----------------------------------------------------------------

def _num(x):
    """JSON-safe float."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _stat_dict(r: StatTestResult):
    return {"statistic": _num(r.statistic), "df": list(r.df) if isinstance(r.df, tuple) else r.df,
            "p_value": _num(r.p_value),
            "adjusted_p": None if r.adjusted_p is None else _num(r.adjusted_p),
            "flag": r.flag}


def summarize_condition(values, arms):
    """values[arm][metric] -> per-fold list. Returns the summary block for one condition."""
    block = {"arms": {}, "stats": {}}
    for arm in arms:
        block["arms"][arm] = {
            "folds": {m: [float(v) for v in values[arm][m]] for m in METRIC_NAMES},
            "mean": {m: float(np.mean(values[arm][m])) for m in METRIC_NAMES},
            "sd": {m: float(np.std(values[arm][m], ddof=1)) if len(values[arm][m]) > 1 else 0.0
                   for m in METRIC_NAMES},
        }
    for metric in METRIC_NAMES:
        st = {}
        if len(arms) >= 2:
            table = [values[a][metric] for a in arms]
            st["anova"] = _stat_dict(rm_anova(table))
            pairs = list(combinations(arms, 2))
            tests = with_adjusted([paired_t_test(values[a][metric], values[b][metric]) for a, b in pairs])
            st["pairs"] = [dict(a=a, b=b, marker=r.marker(), **_stat_dict(r))
                           for (a, b), r in zip(pairs, tests)]
            markers = {b: r.marker() for (a, b), r in zip(pairs, tests) if a == arms[0]}
        else:
            markers = {}
        st["table"] = {a: mean_sd_string(values[a][metric], marker=markers.get(a)) for a in arms}
        block["stats"][metric] = st
    return block


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "arm", "fold", "metric", "value"])
    for r in rows:
        w.writerow([r[0], r[1], r[2], r[3], repr(float(r[4]))])
    return buf.getvalue()


def descriptor_csv(entries, feats, mode) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for e, f in zip(entries, feats):
        for kind in ("geometric", "appearance"):
            if kind in f:
                w.writerow([mode, e.sequence_id, kind] + [repr(float(v)) for v in f[kind]])
    return buf.getvalue()


class RunLog:
    """Tracks completed stages in MANIFEST.json."""

    def __init__(self, out: Path):
        self.out = out
        self.done = []

    def stage(self, name, files=()):
        self.done.append({"stage": name, "files": sorted(str(f) for f in files)})
        self._write()

    def fail(self, name, exc):
        self._write({"stage": name, "error": type(exc).__name__, "message": str(exc)})

    def _write(self, failure=None):
        doc = {"completed": self.done}
        if failure:
            doc["failed"] = failure
        (self.out / "MANIFEST.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write(out: Path, rel: str, data):
    path = out / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)
    return rel


# the experiment ------------------------------------------------------------

def extract_features(cfg, sources, jobs=1):
    res = tuple(cfg["resolution"])
    feats = {}
    for mode, (entries, loaders) in sources.items():
        feats[mode] = pmap(_features_task, [(ld, res, None) for ld in loaders], jobs)
    return feats


def _arm_matrix(feats, arm, idx):
    missing = [i for i in idx if arm not in feats[i]]
    if missing:
        from .errors import NoColorData
        raise NoColorData(f"{len(missing)} sequences carry no color for the appearance arm")
    return np.array([feats[i][arm] for i in idx])


def run_experiment(cfg: dict, out=None, jobs: int = 1, stages=("xval", "saliency")) -> dict:
    out = Path(out or cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    log = RunLog(out)
    stage = "config"
    try:
        _write(out, "config.json", json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        log.stage("config", ["config.json"])

        stage = "data"
        sources = dataset_sources(cfg)
        modes = list(sources)
        folds = make_folds(sorted({e.surgery_id for e in sources[modes[0]][0]}), cfg["k"])
        log.stage("data")

        stage = "features"
        feats = extract_features(cfg, sources, jobs)
        files = [_write(out, f"descriptors/{m}.csv", descriptor_csv(sources[m][0], feats[m], m))
                 for m in modes]
        log.stage("features", files)

        stage = "xval"
        summary, fold_models = cross_validate(cfg, sources, feats, folds, out, jobs)
        log.stage("xval", ["metrics.csv", "checkpoints/"])

        if "saliency" in stages:
            stage = "saliency"
            summary["saliency"] = saliency_stage(cfg, sources, feats, folds, fold_models, out, jobs)
            log.stage("saliency", ["region_shares.csv", "overlays/", "depth/"])

        stage = "report"
        _write(out, "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        log.stage("report", ["summary.json"])
        return summary
    except GeomReidError as exc:
        exc.stage = stage
        log.fail(stage, exc)
        raise


def _conditions(cfg, modes):
    conds = [(m, m, m) for m in modes]
    tr = cfg.get("transfer")
    if tr and tr["train_mode"] in modes and tr["test_mode"] in modes and tr["train_mode"] != tr["test_mode"]:
        conds.append(("transfer", tr["train_mode"], tr["test_mode"]))
    return conds


def cross_validate(cfg, sources, feats, folds, out, jobs=1):
    modes = list(sources)
    arms = list(cfg["arms"])
    conds = _conditions(cfg, modes)
    tasks, keys = [], []
    for train_mode in dict.fromkeys(c[1] for c in conds):
        entries = sources[train_mode][0]
        for arm in arms:
            for f in folds:
                tr_idx = [i for i, e in enumerate(entries) if e.surgery_id in f.train_surgeries]
                X = _arm_matrix(feats[train_mode], arm, tr_idx)
                labels = np.array([entries[i].identity_id for i in tr_idx])
                tests = {}
                for name, trm, tem in conds:
                    if trm != train_mode:
                        continue
                    te_entries = sources[tem][0]
                    te_idx = [i for i, e in enumerate(te_entries) if e.surgery_id in f.test_surgeries]
                    tests[name] = (_arm_matrix(feats[tem], arm, te_idx), [te_entries[i] for i in te_idx])
                tasks.append((cfg, arm, f.fold_index, X, labels, tests))
                keys.append((train_mode, arm, f.fold_index))
    results = pmap(_fold_task, tasks, jobs)

    values = {c[0]: {a: {m: [] for m in METRIC_NAMES} for a in arms} for c in conds}
    rows = []
    fold_models = {}
    for (train_mode, arm, fold), (reports, ckpt) in zip(keys, results):
        _write(out, f"checkpoints/{train_mode}_{arm}_fold{fold}.json", ckpt)
        fold_models[(train_mode, arm, fold)] = ckpt
        for cond, rep in reports.items():
            for m in METRIC_NAMES:
                values[cond][arm][m].append(getattr(rep, m))
    for name, _, _ in conds:
        for arm in arms:
            for f in folds:
                for m in METRIC_NAMES:
                    rows.append((name, arm, f.fold_index, m, values[name][arm][m][f.fold_index]))
    _write(out, "metrics.csv", metrics_csv(rows))

    summary = {
        "v": 1,
        "seed": cfg["seed"],
        "arms": arms,
        "stat_metric": STAT_METRIC,
        "dataset": _dataset_block(cfg, sources),
        "folds": [{"fold": f.fold_index, "train": sorted(f.train_surgeries),
                   "test": sorted(f.test_surgeries)} for f in folds],
        "conditions": {name: dict(train_mode=trm, test_mode=tem, **summarize_condition(values[name], arms))
                       for name, trm, tem in conds},
    }
    return summary, fold_models


def _dataset_block(cfg, sources):
    ds = cfg["dataset"]
    block = {"source": ds["source"],
             "n_sequences": {m: len(sources[m][0]) for m in sources}}
    if ds["source"] == "synthetic":
        # generator noise levels are toolkit choices and are reported with every run
        block.update({k: ds[k] for k in ("n_identities", "n_surgeries", "seqs_per_surgery",
                                         "n_frames", "fps", "n_points", "noise_sd_m", "color_noise_sd")})
    return block


SALIENCY_ROUTES = ("probe", "embedding")


def saliency_stage(cfg, sources, feats, folds, fold_models, out, jobs=1):
    """Identity-logit saliency on the first fold's test sequences.

    Two classifiers are audited per arm: ``probe`` is an L2-regularized
    softmax head on the arm's scaled soft descriptor (the supervised identity
    classifier), ``embedding`` is the same kind of head on top of the trained
    triplet embedding.
    """
    sal_cfg = cfg["saliency"]
    fold = folds[0]
    res = tuple(cfg["resolution"])
    rows = []
    summary = {"fold": fold.fold_index, "objective": "identity_logit", "modes": {}}
    for mode in sources:
        entries, loaders = sources[mode]
        tr_idx = [i for i, e in enumerate(entries) if e.surgery_id in fold.train_surgeries]
        te_idx = [i for i, e in enumerate(entries) if e.surgery_id in fold.test_surgeries]
        te_idx = te_idx[:sal_cfg["n_sequences"]]
        labels = [entries[i].identity_id for i in tr_idx]
        summary["modes"][mode] = {}
        for arm in cfg["arms"]:
            key = "appearance_soft" if arm == "appearance" else "geometric"
            if any(key not in feats[mode][i] for i in tr_idx):
                continue
            model, scaler, _ = load_checkpoint(fold_models[(mode, arm, fold.fold_index)])
            X = np.array([feats[mode][i][key] for i in tr_idx])
            fps = entries[0].fps
            routes = [
                ("probe", DescriptorPipeline(arm, fps=fps, scaler=scaler),
                 fit_linear_head(scaler(X), labels, l2=sal_cfg["head_l2"])),
                ("embedding", DescriptorPipeline(arm, fps=fps, scaler=scaler, model=model),
                 fit_linear_head(_embed(model, scaler, X), labels, l2=sal_cfg["head_l2"])),
            ]
            tasks = [(loaders[i], res, routes, entries[i].identity_id) for i in te_idx]
            outs = pmap(_saliency_task, tasks, jobs)
            block = {}
            for route in SALIENCY_ROUTES:
                fh_sal, fh_area, ent, zero = [], [], [], 0
                for n, (i, o) in enumerate(zip(te_idx, outs)):
                    sid = entries[i].sequence_id
                    r = o["routes"][route]
                    for part, s, a in r["shares"].rows():
                        rows.append((mode, arm, route, sid, part, s, a))
                    s, a = feet_head_shares(r["shares"])
                    fh_sal.append(s)
                    fh_area.append(a)
                    ent.append(r["entropy"])
                    zero += r["all_zero"]
                    if n < sal_cfg["n_overlays"]:
                        _write(out, f"overlays/{mode}_{arm}_{route}_{sid}.ppm", r["overlay"])
                        _write(out, f"depth/{mode}_{sid}.pgm", o["depth"])
                block[route] = {
                    "n_sequences": len(te_idx),
                    "n_all_zero": zero,
                    "feet_head_saliency_share": float(np.mean(fh_sal)),
                    "feet_head_area_share": float(np.mean(fh_area)),
                    "entropy": float(np.mean(ent)),
                }
            summary["modes"][mode][arm] = block
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "arm", "route", "sequence_id", "part", "saliency_share", "area_share"])
    for r in rows:
        w.writerow([*r[:5], repr(r[5]), repr(r[6])])
    _write(out, "region_shares.csv", buf.getvalue())
    return summary


# consistency check ---------------------------------------------------------

def verify_report(out) -> list:
    """Re-derive summary.json numbers from the CSVs. Returns a list of mismatches."""
    from .synth import FEET_PARTS, HEAD_PARTS
    out = Path(out)
    summary = json.loads((out / "summary.json").read_text())
    arms = summary["arms"]
    values = {}
    with open(out / "metrics.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            values.setdefault(r["condition"], {}).setdefault(r["arm"], {}).setdefault(
                r["metric"], {})[int(r["fold"])] = float(r["value"])
    problems = []
    for cond, block in summary["conditions"].items():
        if cond not in values:
            problems.append(f"condition {cond} missing from metrics.csv")
            continue
        vals = {a: {m: [values[cond][a][m][k] for k in sorted(values[cond][a][m])]
                    for m in METRIC_NAMES} for a in arms}
        fresh = summarize_condition(vals, arms)
        for key in ("arms", "stats"):
            if json.loads(json.dumps(fresh[key])) != block[key]:
                problems.append(f"{cond}: '{key}' differs from values re-derived from metrics.csv")
    if "saliency" in summary:
        per = {}
        with open(out / "region_shares.csv", newline="") as fh:
            for r in csv.DictReader(fh):
                d = per.setdefault((r["mode"], r["arm"], r["route"]), {}).setdefault(
                    r["sequence_id"], [0.0, 0.0])
                if int(r["part"]) in FEET_PARTS + HEAD_PARTS:
                    d[0] += float(r["saliency_share"])
                    d[1] += float(r["area_share"])
        for mode, arms_block in summary["saliency"]["modes"].items():
            for arm, routes in arms_block.items():
                for route, b in routes.items():
                    seqs = per.get((mode, arm, route), {})
                    where = f"saliency {mode}/{arm}/{route}"
                    if len(seqs) != b["n_sequences"]:
                        problems.append(f"{where}: sequence count differs")
                        continue
                    s = float(np.mean([v[0] for v in seqs.values()]))
                    a = float(np.mean([v[1] for v in seqs.values()]))
                    if (abs(s - b["feet_head_saliency_share"]) > 1e-12
                            or abs(a - b["feet_head_area_share"]) > 1e-12):
                        problems.append(f"{where}: shares differ from region_shares.csv")
    return problems
