import json
import subprocess
import sys

from evoloop.cli import main

from conftest import BROKEN, FIXED, scripted, story_doc, syntax_doc


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_run_single_config_writes_exports(tmp_path, story_fixture, capsys):
    cfg = write(tmp_path, "story.json", story_doc(story_fixture))
    assert main(["run", cfg, "--out", str(tmp_path / "out")]) == 0
    stats = json.loads((tmp_path / "out" / "statistics.json").read_text())
    assert stats["reason"] == "max_iterations" and stats["best"]["score"] == 8.0
    assert (tmp_path / "out" / "statistics.csv").exists()
    assert "finished (max_iterations)" in capsys.readouterr().out


def test_run_many_configs_into_subdirectories(tmp_path):
    a = write(tmp_path, "a.json", syntax_doc(BROKEN, FIXED))
    b = write(tmp_path, "b.json", syntax_doc(FIXED))
    assert main(["run", a, b, "--out", str(tmp_path / "o"), "--max-parallel", "2"]) == 0
    assert (tmp_path / "o" / "task-0" / "statistics.json").exists()
    assert (tmp_path / "o" / "task-1" / "statistics.csv").exists()


def test_seed_override_changes_exports(tmp_path):
    doc = {"prompts": {"initial": "x", "repeating": {"messages": ["a", "b", "c"], "strategy": "random"}},
           "generator": scripted(*["r"] * 6), "stopping": [{"kind": "max_iterations", "n": 6}]}
    cfg = write(tmp_path, "c.json", doc)
    outs = []
    for seed in ("1", "1", "2"):
        out = tmp_path / f"s{len(outs)}"
        assert main(["run", cfg, "--out", str(out), "--seed", seed]) == 0
        outs.append((out / "statistics.json").read_text())
    assert outs[0] == outs[1] != outs[2]


def test_validation_error_exit_code(tmp_path, capsys):
    doc = syntax_doc(FIXED)
    doc["stopping"] = []
    cfg = write(tmp_path, "bad.json", doc)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "stopping: must contain at least one condition" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main(["run", str(tmp_path / "missing.json")]) == 1
    assert main(["validate", cfg]) == 1


def test_aborted_task_exit_code(tmp_path):
    doc = syntax_doc(FIXED, stopping=[{"kind": "max_iterations", "n": 3}])
    cfg = write(tmp_path, "short.json", doc)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert json.loads((tmp_path / "o" / "statistics.json").read_text())["reason"] == "script exhausted"


def test_play2048_builtin(capsys):
    assert main(["play2048", "--policy", "random", "--games", "2", "--seed", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [g["seed"] for g in doc["games"]] == [3, 4]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "evoloop.cli", "validate", "configs/offline_demo.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
