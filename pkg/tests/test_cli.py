import json
import os
import subprocess
import sys

import pytest

from oracles import brute_force_pairs
from foresight_planner.cli import main
from foresight_planner.datapipe import read_manifests

SUITE = os.path.join(os.path.dirname(__file__), "..", "src", "foresight_planner", "data", "suite")


def cli(*args, env=None):
    return subprocess.run([sys.executable, "-m", "foresight_planner.cli", *args], capture_output=True, text=True,
                          env={**os.environ, **(env or {})}, timeout=120)


def test_edge_full_exits_zero(tmp_path):
    r = cli("edge", "--scenario", f"{SUITE}/03_comp_two_objects.yaml", "--inprocess", "--output-dir", str(tmp_path))
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["termination"] == "Done"


def test_edge_task_only_on_ood_exits_one():
    r = cli("edge", "--scenario", f"{SUITE}/04_joint_bin.yaml", "--inprocess", "--ablation", "task-only")
    assert r.returncode == 1
    assert json.loads(r.stdout)["termination"] == "Unrecoverable"


def test_edge_unknown_scenario_exits_two():
    assert main(["edge", "--scenario", "/nonexistent.yaml", "--inprocess"]) == 2


def test_eval_needs_five_settings():
    assert main(["eval", "--settings", "4"]) == 2


def test_bad_flag_exits_two():
    with pytest.raises(SystemExit) as err:
        main(["bench-steps", "--field", "cubic"])
    assert err.value.code == 2


def test_serve_bad_address_exits_two():
    r = cli("serve", "--bind", "not-an-address")
    assert r.returncode == 2 and "usage" in r.stderr


def test_serve_and_two_edge_clients(tmp_path):
    proc = subprocess.Popen([sys.executable, "-m", "foresight_planner.cli", "serve"], stdout=subprocess.PIPE,
                            text=True, env={**os.environ, "FORESIGHT_BIND": "127.0.0.1:0"})
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on 127.0.0.1:")
        addr = line.split()[2]
        clients = [subprocess.Popen([sys.executable, "-m", "foresight_planner.cli", "edge", "--scenario",
                                     f"{SUITE}/{name}", "--connect", addr, "--session", str(i)],
                                    stdout=subprocess.PIPE, text=True)
                   for i, name in enumerate(["01_pick_place.yaml", "05_drawer_stow.yaml"])]
        outs = [c.communicate(timeout=60)[0] for c in clients]
        assert [c.returncode for c in clients] == [0, 0]
        assert [json.loads(o)["scenario"] for o in outs] == ["pick_place", "drawer_stow"]
    finally:
        proc.terminate()
        proc.wait(timeout=10)
    assert proc.returncode == 0


def test_episodes_then_datapipe_matches_oracle(tmp_path):
    ep_dir, out_dir = tmp_path / "eps", tmp_path / "out"
    assert main(["episodes", "--count", "2", "--output-dir", str(ep_dir)]) == 0
    manifests = read_manifests(ep_dir)
    assert len(manifests) == 10
    for offset in ("half", "final"):
        assert main(["datapipe", "--manifests", str(ep_dir), "--offset", offset, "--stats",
                     "--output-dir", str(out_dir)]) == 0
        got = [json.loads(x) for x in (out_dir / f"pairs_{offset}.jsonl").read_text().splitlines()]
        expected = sorted(p for m in manifests for p in brute_force_pairs(m, offset))
        assert [(g["episode_id"], g["subtask_index"], g["cond_frame"], g["future_frame"]) for g in got] == expected
    stats = json.loads((out_dir / "dataset_stats.json").read_text())
    assert stats["total_subtasks"] == sum(len(m.subtasks) for m in manifests)


def test_eval_writes_report(tmp_path):
    r = cli("eval", "--settings", "5", "--output-dir", str(tmp_path))
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "suite_report.csv").read_text().splitlines()[-4:] == [
        "ood_tag,full,text-only,task-only",
        "Spatial,1.0000,1.0000,1.0000",
        "Comp,1.0000,0.2500,0.0000",
        "Joint,1.0000,0.2500,0.0000",
    ]


def _deterministic_columns(text):
    sweep = text.split("\n\n")[0] if "\n\n" in text else text.split("steps,wall:")[0]
    return [line.split(",")[:2] for line in sweep.splitlines() if line and line[0].isdigit()]


def test_bench_steps_deterministic_and_nonincreasing(tmp_path):
    args = ["bench-steps", "--field", "quadratic", "--steps", "1,2,4,8,16", "--size", "32x24",
            "--output-dir", str(tmp_path)]
    a, b = cli(*args), cli(*args)
    assert a.returncode == 0, a.stderr
    rows = _deterministic_columns(a.stdout)
    assert rows == _deterministic_columns(b.stdout)
    assert len(rows) == 5
    errors = [float(e) for _, e in rows]
    assert errors == sorted(errors, reverse=True)
    assert (tmp_path / "stages_quadratic.csv").read_text().startswith("steps,")
