# Copyright (c) 2025 sprowii
import json
from dataclasses import replace

import numpy as np
import pytest
from dotenv import dotenv_values

from app.cli.handlers import cmd_eval, cmd_synth, cmd_train
from app.cli.run_config import RunConfig, config_keys
from app.cli.workspace import Workspace
from app.errors import ConfigError, DatasetError, MissingInputError
from app.evaluation.reports import report_files
from app.main import main
from app.storage.matrix_store import read_labeled_matrix, read_matrix, read_table


# ============================================================================
# конфигурация
# ============================================================================

def test_defaults_are_valid():
    run = RunConfig()
    assert run.validate() == []
    assert run.notes == (33, 45, 57, 69)
    assert run.c == 1e-3


def test_file_then_set_then_flags(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("SEED=3\nDDS_C=0.5\nNOTES=octave\nTHREADS=2\n", encoding="utf-8")
    run = RunConfig.load(path, ["DDS_C=0.25", "N_PRESETS=4"], seed=7, threads=None)
    assert run.seed == 7
    assert run.c == 0.25
    assert run.n_presets == 4
    assert run.threads == 2
    assert run.notes == tuple(range(45, 58))
    assert run.source == str(path)
    assert RunConfig.load(path, c=0.0).c == 0.0


def test_unknown_key_and_bad_value(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"NOPE": "1"})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"SEED": "abc"})
    with pytest.raises(ConfigError):
        RunConfig.load(overrides=["SEED"])
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.env")


def test_validation_lists_every_problem():
    run = RunConfig.from_mapping({"N_PRESETS": "1", "DDS_C": "-1", "FLOW_PATIENCE": "5000", "SOLVER_EPS": "0"})
    errors = run.validate()
    assert any("N_PRESETS" in e for e in errors)
    assert any("DDS_C" in e for e in errors)
    assert any(e.startswith("flow:") for e in errors)
    assert any(e.startswith("solver:") for e in errors)
    with pytest.raises(ConfigError):
        run.ensure_valid()


def test_explicit_splits():
    run = RunConfig.from_mapping({"SPLITS": "0,1,2:3;1,2,3:0", "NOTES": "57,69"})
    specs = run.split_specs()
    assert [(s.name, s.train_presets, s.test_presets) for s in specs] == [
        ("split0", (0, 1, 2), (3,)), ("split1", (1, 2, 3), (0,))]
    assert all(s.notes == (57, 69) for s in specs)
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"SPLITS": "0,1"})


def test_seeds_are_derived_from_master_seed():
    a, b = RunConfig(seed=1), RunConfig(seed=2)
    assert a.seeds() == RunConfig(seed=1).seeds()
    assert a.seeds() != b.seeds()
    assert RunConfig(seed=1, data_seed=5).seeds()[0] == 5
    assert a.model_seed_for(0, 57) != a.model_seed_for(0, 69)


def test_echo_round_trips(tmp_path, tiny_run):
    path = tiny_run.echo(tmp_path)
    text = path.read_text(encoding="utf-8")
    keys = [line.split("=", 1)[0] for line in text.splitlines()]
    assert keys == config_keys()
    data_seed, model_seed = tiny_run.seeds()
    assert RunConfig.from_mapping(dotenv_values(path)) == replace(tiny_run, data_seed=data_seed, model_seed=model_seed)


# ============================================================================
# команды
# ============================================================================

def _cli(tiny_config_file, out, *args):
    return main([*args, "--config", str(tiny_config_file), "--out", str(out)])


def test_bad_preset_is_reported_as_json(tmp_path, tiny_config_file, capsys):
    code = _cli(tiny_config_file, tmp_path / "run", "synth", "--set", "SPLITS=0,1:9")
    assert code == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "SplitError"
    assert "9" in error["message"]


def test_invalid_config_is_reported_as_json(tmp_path, tiny_config_file, capsys):
    assert _cli(tiny_config_file, tmp_path / "run", "synth", "--set", "N_PRESETS=1") == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigError"


def test_eval_without_dataset(tmp_path, tiny_config_file, capsys):
    assert _cli(tiny_config_file, tmp_path / "run", "eval") == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "MissingInputError"


def test_synth_refuses_existing_dataset(workspace, tiny_run):
    cmd_synth(tiny_run, workspace)
    first = workspace.manifest.read_bytes()
    with pytest.raises(DatasetError):
        cmd_synth(tiny_run, workspace)
    cmd_synth(tiny_run, workspace, force=True)
    assert workspace.manifest.read_bytes() == first


def test_synth_outputs(workspace, tiny_run):
    cmd_synth(tiny_run, workspace)
    manifest = json.loads(workspace.manifest.read_text(encoding="utf-8"))
    assert manifest["notes"] == [57, 69]
    (split,) = manifest["splits"]
    assert split["test_presets"] == [0]
    assert split["features"]["57_train"]["n_frames"] == 2 * 2 * 12
    assert split["features"]["69_test"]["n_frames"] == 1 * 2 * 12
    frames, meta = read_matrix(workspace.root / split["features"]["57_train"]["path"])
    assert frames.shape == (64, 48)
    assert meta.keep_bins == 64
    labels, truth = read_labeled_matrix(workspace.truth("split0", "test"))
    assert labels == ["57", "69"]
    assert truth.shape[1] == split["pieces"]["test"]["n_frames"]
    assert (workspace.dataset / "config.env").exists()


def test_eval_lists_missing_decompositions(workspace, tiny_run):
    cmd_synth(tiny_run, workspace)
    cmd_train(tiny_run, workspace)
    with pytest.raises(MissingInputError) as err:
        cmd_eval(tiny_run, workspace)
    assert "decompositions/nmf/split0/note_57_reconstruction.ddss" in err.value.missing
    assert "decompositions/dds/split0/piece_test_H.csv" in err.value.missing


def test_train_requires_features(workspace, tiny_run):
    with pytest.raises(MissingInputError):
        cmd_train(tiny_run, workspace)


def _pipeline(tiny_config_file, out):
    for args in (["synth"], ["train"], ["decompose", "--method", "nmf"], ["decompose", "--method", "dds"], ["eval"]):
        assert _cli(tiny_config_file, out, *args) == 0, args
    return Workspace.at(out)


def test_pipeline_end_to_end(tmp_path, tiny_config_file):
    ws = _pipeline(tiny_config_file, tmp_path / "run")
    files = report_files(ws.reports)
    assert all(path.exists() for path in files.values())

    reconstruction = read_table(files["reconstruction"])
    assert {(r["note"], r["method"]) for r in reconstruction} == {
        ("57", "nmf"), ("57", "dds"), ("69", "nmf"), ("69", "dds")}
    assert all(float(r["error"]) >= 0 for r in reconstruction)

    f1 = read_table(files["f1"])
    assert len(f1) == 2 * 2
    assert all(0.0 <= float(r["f1"]) <= 1.0 for r in f1)

    confusion = read_table(ws.confusion("split0", "test"))
    assert [r["model"] for r in confusion] == ["57", "69"]
    assert float(confusion[0]["57"]) == 1.0
    assert float(confusion[1]["69"]) == 1.0

    labels, H = read_labeled_matrix(ws.piece_activations("dds", "split0", "test"))
    assert labels == ["57", "69"]
    assert np.all(H >= 0)
    assert ws.note_components("split0", 57).exists()


def test_pipeline_is_deterministic(tmp_path, tiny_config_file):
    a = _pipeline(tiny_config_file, tmp_path / "a")
    b = _pipeline(tiny_config_file, tmp_path / "b")
    for name, path in report_files(a.reports).items():
        assert path.read_bytes() == (b.reports / path.name).read_bytes(), name
    assert a.manifest.read_bytes() == b.manifest.read_bytes()
    assert a.model("split0", 57).read_bytes() == b.model("split0", 57).read_bytes()


def test_mean_baseline_joins_eval(tmp_path, tiny_config_file):
    out = tmp_path / "run"
    ws = _pipeline(tiny_config_file, out)
    assert _cli(tiny_config_file, out, "decompose", "--method", "mean") == 0
    assert _cli(tiny_config_file, out, "eval") == 0

    files = report_files(ws.reports)
    methods = {r["method"] for r in read_table(files["f1"])}
    assert methods == {"nmf", "dds", "mean"}
    assert len(read_table(files["f1"])) == 3 * 2
    assert {r["method"] for r in read_table(files["reconstruction"])} == {"nmf", "dds", "mean"}
