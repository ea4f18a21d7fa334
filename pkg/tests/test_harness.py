import math

import pytest

from combo_rng.config import ConfigError, dump_config, parse_text
from combo_rng.extract import BlankParams, ClockMode, Retrigger
from combo_rng.harness import (
    DEFAULT_GRIDS,
    Mode,
    ScenarioSpec,
    find_crossings,
    metrics_csv,
    point_seed,
    points_csv,
    report_text,
    run_point,
    run_scenario,
    write_outputs,
)

SMALL = 20_000


def test_find_crossings():
    assert find_crossings([1, 2, 3], [1.0, -1.0, -2.0]) == [1.5]
    assert find_crossings([1, 2, 3], [1.0, 2.0, 3.0]) == []
    assert find_crossings([0, 10], [-1.0, 3.0]) == [2.5]
    assert find_crossings([1, 2, 3], [1.0, -1.0, 1.0]) == [1.5, 2.5]


def test_point_seed_is_pure_and_distinct():
    assert point_seed(7, 3) == point_seed(7, 3)
    assert len({point_seed(7, i) for i in range(50)}) == 50
    assert point_seed(7, 0) != point_seed(8, 0)


def test_config_parse_and_errors():
    v = parse_text("seed = 5\nf_d0 = 3Mcps  # comment\nblank_window = 17.6ns\nretrigger = accepted-only\n")
    assert v["seed"] == 5 and v["f_d0"] == 3e6 and v["blank_window"] == 17_600
    assert v["retrigger"] is Retrigger.ACCEPTED_ONLY
    with pytest.raises(ConfigError, match="'dead_tme'"):
        parse_text("dead_tme = 24ns")
    with pytest.raises(ConfigError, match="'f_d0'"):
        parse_text("f_d0 = fast")
    with pytest.raises(ConfigError, match="'clock_mode'"):
        parse_text("clock_mode = sideways")
    with pytest.raises(ConfigError, match="'afterpulse_prob'"):
        ScenarioSpec.from_values(parse_text("afterpulse_prob = 1.5"))
    with pytest.raises(ConfigError, match="'bits'"):
        ScenarioSpec.from_values({"bits": 0})


def test_manifest_round_trip():
    spec = ScenarioSpec(
        Mode.BLANK_SWEEP, f_d0=3e6, f_d1=4.5e6, injection_rate=1e6, injection_phase=1234,
        blank=BlankParams(5_600, Retrigger.ACCEPTED_ONLY), seed=99, n_target_bits=1234,
        grid=(0.0, 5_600.0), stream="T", k_max=3,
    )
    back = ScenarioSpec.from_values(parse_text(dump_config(spec.to_values())))
    assert back == spec


def test_manifest_round_trip_clock_mode():
    from combo_rng.extract import ClockParams

    spec = ScenarioSpec(clock=ClockParams(2_000, ClockMode.FREE_RUNNING))
    assert ScenarioSpec.from_values(parse_text(dump_config(spec.to_values()))) == spec


def test_default_grids():
    assert ScenarioSpec(Mode.RATE_SWEEP).points == DEFAULT_GRIDS[Mode.RATE_SWEEP]
    assert ScenarioSpec(Mode.RATE_SWEEP, grid=(1e6,)).points == (1e6,)


def test_run_point_bookkeeping():
    spec = ScenarioSpec(seed=3)
    p = run_point(spec.sim_config(), SMALL)
    assert len_ok(p)
    assert p.n_accepted + p.n_blanked == p.n_detected
    assert p.f_G == pytest.approx(p.m("C").n_bits / p.duration)
    assert p.f_accepted + p.f_B == pytest.approx(p.f_detected)
    assert p.f_d0 == pytest.approx(10e6, rel=0.05) and p.f_d1 == pytest.approx(10e6, rel=0.05)
    assert {"b_Y", "a_Y", "b_C", "a_C", "a_S_net"} <= p.predicted.keys()
    assert sum(p.origin_counts.values()) == p.n_detected


def len_ok(p):
    return p.m("C").n_bits >= SMALL and p.m("Y").n_bits == p.m("S").n_bits // 2


def test_scenario_determinism():
    spec = ScenarioSpec(Mode.DETECTOR_FAILURE, n_target_bits=SMALL, seed=4, grid=(0.0, 5e6))
    a, b = run_scenario(spec), run_scenario(spec)
    assert points_csv(a) == points_csv(b)
    assert metrics_csv(a) == metrics_csv(b)


def test_jobs_do_not_change_results():
    spec = ScenarioSpec(Mode.INJECTION_ATTACK, n_target_bits=SMALL, seed=4, grid=(0.0, 3e6))
    assert points_csv(run_scenario(spec, jobs=1)) == points_csv(run_scenario(spec, jobs=2))


def test_failed_detector_point_has_no_s_metrics():
    spec = ScenarioSpec(Mode.DETECTOR_FAILURE, n_target_bits=SMALL, seed=1, grid=(0.0,))
    p = run_scenario(spec).points[0]
    assert p.metrics["S"] is None and p.f_B == 0
    with pytest.raises(ValueError):
        p.m("S")
    assert "S: n/a" in report_text(run_scenario(spec))


def test_rate_sweep_notes_without_crossing():
    spec = ScenarioSpec(Mode.RATE_SWEEP, n_target_bits=SMALL, seed=2, grid=(8e6, 9e6))
    rep = run_scenario(spec)
    assert rep.crossings == [] and "no crossover" in rep.notes[0]


def test_monitoring_alarms():
    spec = ScenarioSpec(Mode.MONITORING, n_target_bits=200_000, seed=6, grid=(10e6, 2.5e6))
    rep = run_scenario(spec)
    assert rep.nominal is not None
    both = rep.curve("both")
    assert both[0].alarm == "" and both[1].alarm == "low"
    inject = {p.x: p for p in rep.curve("inject")}
    assert inject[0.0].alarm == "" and inject[7e6].alarm == "high"


def test_write_outputs(tmp_path):
    spec = ScenarioSpec(Mode.MONITORING, n_target_bits=SMALL, seed=6, grid=(10e6,))
    files = {p.name for p in write_outputs(run_scenario(spec), tmp_path)}
    assert {"manifest.txt", "points.csv", "metrics.csv", "crosscorr.csv", "report.txt"} <= files
    assert {"monitor_both.csv", "monitor_d0.csv", "monitor_inject.csv"} <= files
    header = (tmp_path / "monitor_d0.csv").read_text().splitlines()[0]
    assert header == "x,f_G,sigma_f_G,f_B,sigma_f_B,alarm"


def test_sigma_fields():
    p = run_point(ScenarioSpec(seed=8).sim_config(), SMALL)
    assert p.sigma_f_G == pytest.approx(math.sqrt(p.m("C").n_bits) / p.duration)
