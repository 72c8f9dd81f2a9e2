import json
import subprocess
import sys

import numpy as np
import pytest

from geomreid import experiment as ex
from geomreid.cli import main
from geomreid.errors import ConfigError, TooFewSurgeries
from geomreid.evalkit.metrics import METRIC_NAMES
from geomreid.manifest import read_manifest
from geomreid.render import read_pnm

TINY = {
    "seed": 3,
    "dataset": {"n_identities": 4, "n_surgeries": 4, "seqs_per_surgery": 2, "n_frames": 24,
                "n_points": 512},
    "train": {"epochs": 4, "batch_P": 4, "batch_K": 2, "hidden": [16], "out_dim": 8},
    "k": 2,
    "saliency": {"n_sequences": 4, "n_overlays": 2},
}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = ex.load_config(TINY)
    summary = ex.run_experiment(cfg, out=out, jobs=1)
    return cfg, out, summary


def test_config_merging_and_validation():
    cfg = ex.load_config(TINY, {"arms": ["geometric"]})
    assert cfg["dataset"]["fps"] == 30.0 and cfg["k"] == 2 and cfg["arms"] == ["geometric"]
    assert ex.load_config("quickstart")["dataset"]["n_identities"] == 8
    for bad in ({"arms": []}, {"arms": ["depth"]}, {"k": 1}, {"v": 2}, {"resolution": [4, 4]},
                {"dataset": {"modes": ["street"]}}, {"train": {"margin": -1}},
                {"dataset": {"modes": ["standardized"]}}):   # transfer modes absent
        with pytest.raises(ConfigError):
            ex.load_config({**TINY, **bad})
    with pytest.raises(ConfigError):
        ex.load_config("no_such_config")
    with pytest.raises(ConfigError):
        ex.load_config("{not json")


def test_gallery_probe_split_is_pure():
    cfg = ex.load_config(TINY)
    entries = ex.dataset_sources(cfg)["standardized"][0]
    g, p = ex.split_gallery_probe(entries)
    assert len(g) == 16 and len(p) == 16
    assert all(entries[i].sequence_id.endswith("_0") for i in g)
    rev = list(reversed(entries))
    g2, _ = ex.split_gallery_probe(rev)
    assert {rev[i].sequence_id for i in g2} == {entries[i].sequence_id for i in g}  # ids, not positions, decide


def test_artifacts(tiny_run):
    cfg, out, summary = tiny_run
    for rel in ("config.json", "summary.json", "metrics.csv", "region_shares.csv", "MANIFEST.json",
                "descriptors/confounded.csv", "descriptors/standardized.csv"):
        assert (out / rel).exists(), rel
    assert len(list((out / "checkpoints").glob("*.json"))) == 2 * 2 * 2   # modes x arms x folds
    assert list((out / "overlays").glob("*.ppm")) and list((out / "depth").glob("*.pgm"))
    for p in (out / "overlays").glob("*.ppm"):
        assert read_pnm(p.read_bytes()).shape == (64, 64, 3)
    man = json.loads((out / "MANIFEST.json").read_text())
    assert [s["stage"] for s in man["completed"]] == ["config", "data", "features", "xval", "saliency", "report"]
    assert "failed" not in man


def test_summary_has_every_metric_per_arm_mode_fold(tiny_run):
    _, _, summary = tiny_run
    assert set(summary["conditions"]) == {"confounded", "standardized", "transfer"}
    for cond in summary["conditions"].values():
        for arm in ("geometric", "appearance"):
            folds = cond["arms"][arm]["folds"]
            assert set(folds) == set(METRIC_NAMES)
            assert all(len(v) == 2 and all(0 <= x <= 1 for x in v) for v in folds.values())
        for m in METRIC_NAMES:
            st = cond["stats"][m]
            assert "anova" in st and len(st["pairs"]) == 1
            assert st["table"]["geometric"].count("±") == 1
            assert st["table"]["appearance"].split()[-1] in ("*", "ns")
    sal = summary["saliency"]["modes"]["confounded"]["appearance"]
    assert set(sal) == {"probe", "embedding"} and sal["probe"]["n_sequences"] == 4


def test_metrics_csv_layout(tiny_run):
    _, out, _ = tiny_run
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "condition,arm,fold,metric,value"
    assert len(lines) - 1 == 3 * 2 * 2 * 4


def test_checkpoints_reload_and_reproduce(tiny_run):
    from geomreid.embed.model import load_checkpoint
    _, out, _ = tiny_run
    model, scaler, doc = load_checkpoint((out / "checkpoints/standardized_geometric_fold0.json").read_text())
    assert doc["arm"] == "geometric" and len(doc["loss_curve"]) == 5
    assert model.in_dim == 16 and model.out_dim == 8


def test_verify_report_passes_and_catches_tampering(tiny_run, tmp_path):
    import shutil
    _, out, _ = tiny_run
    assert ex.verify_report(out) == []
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    text = (copy / "metrics.csv").read_text().splitlines()
    cells = text[1].split(",")
    cells[-1] = repr(float(cells[-1]) * 0.5 + 0.01)
    text[1] = ",".join(cells)
    (copy / "metrics.csv").write_text("\n".join(text) + "\n")
    assert ex.verify_report(copy)
    assert main(["verify-report", "--out", str(copy)]) == 1
    assert main(["verify-report", "--out", str(out)]) == 0


def test_rerun_with_more_jobs_is_byte_identical(tiny_run, tmp_path):
    cfg, out, _ = tiny_run
    ex.run_experiment(cfg, out=tmp_path, jobs=2)
    assert (tmp_path / "summary.json").read_bytes() == (out / "summary.json").read_bytes()
    assert (tmp_path / "metrics.csv").read_bytes() == (out / "metrics.csv").read_bytes()
    assert (tmp_path / "region_shares.csv").read_bytes() == (out / "region_shares.csv").read_bytes()


def test_too_few_surgeries_fails_with_manifest(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({**TINY, "k": 5}))
    code = main(["xval", "--config", str(cfg_path), "--out", str(tmp_path / "run")])
    assert code != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "TooFewSurgeries" and err["stage"] == "data"
    man = json.loads((tmp_path / "run" / "MANIFEST.json").read_text())
    assert man["failed"]["error"] == "TooFewSurgeries"
    assert [s["stage"] for s in man["completed"]] == ["config"]
    with pytest.raises(TooFewSurgeries):
        ex.run_experiment(ex.load_config({**TINY, "k": 5}), out=tmp_path / "run2")


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "tiny.json"
    cfg_path.write_text(json.dumps(TINY))
    return root, str(cfg_path)


def test_cli_synth_render_train_eval(cli_env, capsys):
    root, cfg = cli_env
    out = root / "run"
    assert main(["synth", "--config", cfg, "--out", str(out), "--form", "ascii"]) == 0
    info = json.loads(capsys.readouterr().out)
    man_path = info["manifests"]["standardized"]
    manifest = read_manifest(man_path)
    assert len(manifest.entries) == 32 and manifest.mode_tag == "standardized"

    assert main(["render", "--config", cfg, "--out", str(out / "img"), "--manifest", man_path,
                 "--every", "12"]) == 0
    assert json.loads(capsys.readouterr().out)["images"] == 32 * 2
    assert len(list((out / "img" / "depth").glob("*.pgm"))) == 64

    assert main(["train", "--config", cfg, "--out", str(out), "--arm", "geo"]) == 0
    ckpts = json.loads(capsys.readouterr().out)["checkpoints"]
    assert sorted(ckpts) == ["checkpoints/confounded_geometric.json", "checkpoints/standardized_geometric.json"]

    assert main(["eval", "--config", cfg, "--out", str(out), "--manifest", man_path,
                 "--checkpoint", str(out / ckpts[1])]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["arm"] == "geometric" and 0 <= rep["acc_micro"] <= rep["cmc3"] <= 1


def test_cli_synth_data_matches_in_memory_features(cli_env, capsys):
    """Sequences written to PLY and read back give the same descriptors as in-memory generation."""
    root, cfg = cli_env
    out = root / "bin"
    assert main(["synth", "--config", cfg, "--out", str(out)]) == 0
    man = json.loads(capsys.readouterr().out)["manifests"]["confounded"]
    mcfg = ex.load_config({**TINY, "dataset": {"source": "manifest", "manifests": {"confounded": man}},
                           "transfer": None})
    disk = ex.extract_features(mcfg, ex.dataset_sources(mcfg))["confounded"]
    mem = ex.extract_features(ex.load_config(TINY), {"confounded": ex.dataset_sources(ex.load_config(TINY))["confounded"]})["confounded"]
    for a, b in zip(disk[:4], mem[:4]):
        # binary PLY stores float32 coordinates, so tiny depth differences are expected
        assert np.allclose(a["geometric"], b["geometric"], atol=1e-5)
        assert np.allclose(a["appearance"], b["appearance"], atol=0.02)


def test_cli_xval_and_saliency_commands(cli_env, capsys):
    root, cfg = cli_env
    out = root / "xv"
    assert main(["xval", "--config", cfg, "--out", str(out), "--no-saliency", "--arm", "both", "--seed", "3"]) == 0
    text = capsys.readouterr().out
    assert "acc_micro" in text and "summary.json" in text
    s = json.loads((out / "summary.json").read_text())
    assert "saliency" not in s and ex.verify_report(out) == []
    assert main(["saliency", "--config", cfg, "--out", str(root / "sal"), "--arm", "rgb"]) == 0
    sal = json.loads((root / "sal" / "saliency.json").read_text())
    assert set(sal["modes"]["confounded"]) == {"appearance"}


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "geomreid.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("synth", "render", "train", "eval", "xval", "saliency", "verify-report"):
        assert cmd in r.stdout


def test_missing_config_is_a_structured_error(capsys):
    assert main(["xval", "--config", "/nonexistent/cfg.json"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
