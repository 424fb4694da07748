import json
import os
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from coopnav.cli import main
from coopnav.harness import (
    ConfigError,
    RunConfig,
    TraceError,
    parse_crash_schedule,
    read_trace,
    replay,
    run_episode,
    validate_scenario,
)
from coopnav.world import SCENARIO_DIR

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def house3_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("house3")
    cfg = RunConfig(scenario="house3", team_size=2, seed=7, output_dir=str(out))
    return run_episode(cfg), out


def test_house3_finds_everything(house3_run):
    report, out = house3_run
    assert report.completed and report.successes == 3
    assert report.ticks <= report.max_steps
    assert not report.leader_violations and not report.conflict_violations
    assert {p.name for p in out.iterdir()} == {
        "report.json", "messages.tsv", "targets.tsv", "trace.jsonl", "trajectories.png", "messages.png"
    }
    rows = (out / "targets.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["target", "result", "tick", "agent"] and len(rows) == 4


def test_house3_rerun_is_identical(house3_run, tmp_path):
    report, out = house3_run
    again = run_episode(RunConfig(scenario="house3", team_size=2, seed=7, output_dir=str(tmp_path)))
    assert again == report
    assert (tmp_path / "trace.jsonl").read_bytes() == (out / "trace.jsonl").read_bytes()


def test_trace_independent_of_hash_seed(house3_run, tmp_path):
    _, out = house3_run
    code = (
        "from coopnav.harness import RunConfig, run_episode;"
        f"run_episode(RunConfig(scenario='house3', team_size=2, seed=7, output_dir={str(tmp_path)!r}))"
    )
    env = dict(os.environ, PYTHONHASHSEED="12345")
    subprocess.run([sys.executable, "-c", code], check=True, env=env, timeout=300)
    assert (tmp_path / "trace.jsonl").read_bytes() == (out / "trace.jsonl").read_bytes()


def test_solo_agent_sends_nothing():
    report = run_episode(RunConfig(scenario="house3", team_size=1, seed=7))
    assert report.completed and report.total_messages == 0


def test_leader_crash_is_survived():
    cfg = RunConfig(scenario="house6", team_size=3, seed=7, crash=parse_crash_schedule("leader:50"))
    report = run_episode(cfg)
    assert report.completed and report.recoveries >= 1 and len(report.crashes) == 1
    assert not report.leader_violations and not report.conflict_violations


def test_broadcast_economy_house6():
    report = run_episode(RunConfig(scenario="house6", team_size=4, seed=7))
    assert report.completed
    assert report.total_messages <= 0.5 * report.broadcast_baseline


# ---------------------------------------------------------------- traces


def test_replay_reproduces_maps_and_verdicts(house3_run):
    _, out = house3_run
    result = replay(out / "trace.jsonl")
    assert result.map_mismatches == [] and result.verdicts_match
    assert result.ticks == house3_run[0].ticks
    assert result.messages == house3_run[0].total_messages


def test_corrupted_record_reports_its_index(house3_run, tmp_path):
    _, out = house3_run
    lines = (out / "trace.jsonl").read_text().splitlines()
    entry = json.loads(lines[5])
    entry["record"]["leader"] = 99
    lines[5] = json.dumps(entry)
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceError) as exc:
        read_trace(bad)
    assert exc.value.index == 5 and "checksum" in str(exc.value)


def test_truncated_trace_stops_at_first_missing_record(house3_run, tmp_path):
    _, out = house3_run
    lines = (out / "trace.jsonl").read_text().splitlines()
    cut = tmp_path / "cut.jsonl"
    cut.write_text("\n".join(lines[:10]) + "\n")
    with pytest.raises(TraceError) as exc:
        read_trace(cut)
    assert exc.value.index == 10
    half = tmp_path / "half.jsonl"
    half.write_text("\n".join(lines[:10]) + "\n" + lines[10][: len(lines[10]) // 2])
    with pytest.raises(TraceError) as exc:
        read_trace(half)
    assert exc.value.index == 10


def test_reordered_records_break_the_chain(house3_run, tmp_path):
    _, out = house3_run
    lines = (out / "trace.jsonl").read_text().splitlines()
    lines[3], lines[4] = lines[4], lines[3]
    bad = tmp_path / "swap.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceError) as exc:
        read_trace(bad)
    assert exc.value.index == 3


# ---------------------------------------------------------------- configs


def test_crash_schedule_parsing():
    assert parse_crash_schedule("0:50, leader:80") == (("0", 50), ("leader", 80))
    assert parse_crash_schedule(None) == ()
    for bad in ("x:1", "0", "0:-3"):
        with pytest.raises(ConfigError):
            parse_crash_schedule(bad)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"scenario": "house3", "flavour": "x"})
    with pytest.raises(ConfigError):
        RunConfig(scenario="house3", team_size=9).validate()
    with pytest.raises(ConfigError):
        RunConfig(scenario="house3", oracle="tarot").validate()
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"scenario": "house3", "seed": 3, "output_dir": "out"}))
    cfg = RunConfig.load(path)
    assert cfg.seed == 3 and Path(cfg.output_dir) == tmp_path / "out"


# ---------------------------------------------------------------- scenarios


def test_fixtures_validate_clean():
    assert validate_scenario(SCENARIO_DIR / "house3.scn") == []
    assert validate_scenario("house6") == []


def test_bad_scenarios_are_diagnosed(tmp_path):
    text = (SCENARIO_DIR / "house3.scn").read_text()
    wall = tmp_path / "wall.scn"
    wall.write_text(text.replace("{class: tv, x: 6, y: 5}", "{class: tv, x: 0, y: 5}"))
    assert any("tv" in d for d in validate_scenario(wall))
    overlap = tmp_path / "overlap.scn"
    overlap.write_text(text.replace("rect: [9, 1, 15, 6]", "rect: [7, 1, 15, 6]"))
    assert validate_scenario(overlap)
    with pytest.raises(OSError):
        validate_scenario(tmp_path / "missing.scn")


# ---------------------------------------------------------------- cli


def test_cli_round_trip(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(ROOT / "configs" / "house3.yaml"), "--out", str(out)]) == 0
    assert "successes 3/3" in capsys.readouterr().out
    assert main(["replay", str(out / "trace.jsonl"), "--timeline", "--plot", str(tmp_path / "p.png")]) == 0
    text = capsys.readouterr().out
    assert "map reconstruction mismatches: 0" in text and "t=0 " in text
    assert (tmp_path / "p.png").exists()
    assert main(["validate-scenario", "house3"]) == 0
    assert "clean" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 2
    bad = tmp_path / "t.jsonl"
    bad.write_text("{}\n")
    assert main(["replay", str(bad)]) == 2
    scn = tmp_path / "s.scn"
    scn.write_text("grid: |\n  ###\n  #.#\n  ###\n")
    assert main(["validate-scenario", str(scn)]) == 1
