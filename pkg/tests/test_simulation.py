"""Tests for the Monte Carlo simulation layer.

The end-to-end checks replay the documented random-number draw order (truth
states, per-sensor initial perturbations, central perturbation, then
measurement noise step by step) and rebuild the filtering and fusion
pipeline from textbook equations, so a report mismatch points at the
orchestration rather than at the primitives tested elsewhere.
"""

import numpy as np
import pytest
from scipy.stats import chi2

from trackfuse import (
    ConfigError,
    GaussianDensity,
    GaussianMixture,
    ImmTracker,
    MetricsReport,
    NcvTruth,
    ScenarioConfig,
    SineTruth,
    EkfTracker,
    bearing_sensor,
    compute_nees,
    moment_match,
    ncv_matrices,
    ncv_truth_states,
    nees_bounds,
    range_az_el_sensor,
    run_scenario,
    track_loss_rate,
    wrap_angle,
)
from trackfuse.simulation import CSV_HEADER


# ---------------------------------------------------------------------------
# nees_bounds


@pytest.mark.parametrize("n_runs,dim", [(1, 4), (50, 4), (100, 6)])
def test_nees_bounds_two_sided_chi2(n_runs, dim):
    lo, hi = nees_bounds(n_runs, dim)
    dof = n_runs * dim
    assert lo == pytest.approx(chi2.ppf(0.025, dof) / n_runs)
    assert hi == pytest.approx(chi2.ppf(0.975, dof) / n_runs)
    assert lo < dim < hi


def test_nees_bounds_one_sided():
    lo, hi = nees_bounds(50, 4, sided=1, alpha=0.05)
    assert lo == 0.0
    assert hi == pytest.approx(chi2.ppf(0.95, 200) / 50)


def test_nees_bounds_tighten_with_more_runs():
    lo_few, hi_few = nees_bounds(10, 4)
    lo_many, hi_many = nees_bounds(1000, 4)
    assert lo_few < lo_many < 4 < hi_many < hi_few


# ---------------------------------------------------------------------------
# compute_nees


def test_compute_nees_matches_hand_formula(rng):
    mean = np.array([1.0, -2.0, 0.5])
    cov = np.diag([4.0, 9.0, 1.0])
    truth = np.array([0.0, 1.0, 1.5])
    expected = float((mean - truth) @ np.linalg.inv(cov) @ (mean - truth))
    assert compute_nees(GaussianDensity(mean, cov), truth) == pytest.approx(expected)


def test_compute_nees_truncates_longer_truth():
    dens = GaussianDensity([2.0, 3.0], np.eye(2))
    truth = np.array([1.0, 1.0, 99.0, -99.0])
    assert compute_nees(dens, truth) == pytest.approx(1.0 + 4.0)


def test_compute_nees_with_indices_uses_marginal():
    mean = np.array([1.0, 2.0, 3.0, 4.0])
    cov = np.diag([1.0, 2.0, 3.0, 4.0])
    truth = np.zeros(4)
    idx = np.array([0, 2])
    got = compute_nees(GaussianDensity(mean, cov), truth, idx)
    assert got == pytest.approx(1.0 / 1.0 + 9.0 / 3.0)


def test_compute_nees_moment_matches_mixtures(rng):
    comps = (GaussianDensity([0.0, 0.0], np.eye(2)),
             GaussianDensity([3.0, -1.0], 2.0 * np.eye(2)))
    mix = GaussianMixture(np.array([0.3, 0.7]), comps)
    truth = np.array([1.0, 1.0])
    assert compute_nees(mix, truth) == pytest.approx(
        compute_nees(moment_match(mix), truth))


# ---------------------------------------------------------------------------
# track_loss_rate


def test_track_loss_rate_counts_threshold_as_lost():
    assert track_loss_rate([1.0, 2.0, 3.0], 2.0) == pytest.approx(2.0 / 3.0)
    assert track_loss_rate([1.0, 1.9999], 2.0) == 0.0
    assert track_loss_rate([5.0, np.inf], 2.0) == 1.0


@pytest.mark.parametrize("errors,tau", [([], 1.0), ([1.0], 0.0), ([1.0], -3.0)])
def test_track_loss_rate_rejects_bad_input(errors, tau):
    with pytest.raises(ValueError):
        track_loss_rate(errors, tau)


# ---------------------------------------------------------------------------
# End-to-end scenario oracle

_BEARING_SENSORS = (bearing_sensor([0.0, 0.0], 2e-3),
                    bearing_sensor([4000.0, 500.0], 2e-3))


def _toy_config(strategies, **overrides):
    base = dict(
        name="toy",
        duration_s=12.0,
        dt_s=1.0,
        truth=NcvTruth(q=[0.1, 0.1], initial_position=[1500.0, 2500.0],
                       initial_velocity=[10.0, 5.0]),
        sensors=_BEARING_SENSORS,
        tracker=EkfTracker(q=[0.5, 0.5]),
        strategies=tuple(strategies),
        runs=1,
        seed=42,
        fusion_every=3,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def _replay_draws(cfg, run_idx):
    """Replay the documented per-run draw order and return the raw material."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed,
                                                       spawn_key=(run_idx,)))
    states = ncv_truth_states(cfg.truth, cfg.n_steps, cfg.dt_s, rng)
    init_cov = np.diag([cfg.tracker.init_pos_std ** 2] * 2
                       + [cfg.tracker.init_vel_std ** 2] * 2)
    chol = np.linalg.cholesky(init_cov)
    perts = [chol @ rng.standard_normal(4) for _ in cfg.sensors]
    central_pert = chol @ rng.standard_normal(4)
    noise_chols = [np.linalg.cholesky(s.noise_cov) for s in cfg.sensors]
    meas = []
    for k in range(1, cfg.n_steps + 1):
        row = []
        for sensor, nc in zip(cfg.sensors, noise_chols):
            z = sensor.measure(states[k]) + nc @ rng.standard_normal(sensor.meas_dim)
            row.append(np.array([wrap_angle(z[0])]))
        meas.append(row)
    return states, init_cov, perts, central_pert, meas


def _textbook_update(mean, cov, sensor, z):
    h = sensor.jacobian(mean, mean.size)
    innov = wrap_angle(z - sensor.measure(mean))
    s = h @ cov @ h.T + sensor.noise_cov
    gain = cov @ h.T @ np.linalg.inv(s)
    return mean + gain @ innov, cov - gain @ s @ gain.T


def _scores_at(mean, cov, truth):
    pos = float(np.sum((mean[:2] - truth[:2]) ** 2))
    vel = float(np.sum((mean[2:4] - truth[2:4]) ** 2))
    err = mean - truth[:4]
    return pos, vel, float(err @ np.linalg.solve(cov, err))


def test_centralized_strategy_matches_textbook_filter():
    cfg = _toy_config(["centralized"])
    report = run_scenario(cfg)
    states, init_cov, _, central_pert, meas = _replay_draws(cfg, 0)

    f, q = ncv_matrices(cfg.dt_s, cfg.tracker.q, dims=2)
    mean = states[0] + central_pert
    cov = init_cov.copy()
    pos_sq, vel_sq, nees = [], [], []
    for k in range(1, cfg.n_steps + 1):
        mean, cov = f @ mean, f @ cov @ f.T + q
        for sensor, z in zip(cfg.sensors, meas[k - 1]):
            mean, cov = _textbook_update(mean, cov, sensor, z)
        if k % cfg.fusion_every == 0:
            p, v, n = _scores_at(mean, cov, states[k])
            pos_sq.append(p)
            vel_sq.append(v)
            nees.append(n)

    m = report.metrics["centralized"]
    np.testing.assert_allclose(m.rmse_pos, np.sqrt(pos_sq), rtol=1e-9)
    np.testing.assert_allclose(m.rmse_vel, np.sqrt(vel_sq), rtol=1e-9)
    np.testing.assert_allclose(m.nees, nees, rtol=1e-9)
    assert m.track_loss_rate == 0.0
    np.testing.assert_array_equal(report.steps, [3, 6, 9, 12])
    np.testing.assert_allclose(report.times, [3.0, 6.0, 9.0, 12.0])
    lo, hi = nees_bounds(1, 4)
    assert m.nees_lo == pytest.approx(lo)
    assert m.nees_hi == pytest.approx(hi)


def test_distributed_naive_matches_hand_rolled_pipeline():
    cfg = _toy_config(["naive"])
    report = run_scenario(cfg)
    states, init_cov, perts, _, meas = _replay_draws(cfg, 0)

    f, q = ncv_matrices(cfg.dt_s, cfg.tracker.q, dims=2)
    tracks = [(states[0] + p, init_cov.copy()) for p in perts]
    center = None
    pos_sq, vel_sq, nees = [], [], []
    for k in range(1, cfg.n_steps + 1):
        stepped = []
        for (mean, cov), sensor, z in zip(tracks, cfg.sensors, meas[k - 1]):
            mean, cov = f @ mean, f @ cov @ f.T + q
            stepped.append(_textbook_update(mean, cov, sensor, z))
        tracks = stepped
        if k % cfg.fusion_every == 0:
            operands = list(tracks)
            if center is not None:
                c_mean, c_cov = center
                for _ in range(cfg.fusion_every):
                    c_mean, c_cov = f @ c_mean, f @ c_cov @ f.T + q
                operands = [(c_mean, c_cov)] + operands
            # The naive rule multiplies the densities: information adds.
            infos = [np.linalg.inv(c) for _, c in operands]
            fused_cov = np.linalg.inv(np.sum(infos, axis=0))
            fused_mean = fused_cov @ np.sum(
                [i @ m for i, (m, _) in zip(infos, operands)], axis=0)
            center = (fused_mean, fused_cov)
            p, v, n = _scores_at(fused_mean, fused_cov, states[k])
            pos_sq.append(p)
            vel_sq.append(v)
            nees.append(n)

    m = report.metrics["naive"]
    np.testing.assert_allclose(m.rmse_pos, np.sqrt(pos_sq), rtol=1e-8)
    np.testing.assert_allclose(m.rmse_vel, np.sqrt(vel_sq), rtol=1e-8)
    np.testing.assert_allclose(m.nees, nees, rtol=1e-8)


def test_strategies_share_local_filtering():
    joint = run_scenario(_toy_config(["naive", "gmd"]))
    alone = run_scenario(_toy_config(["gmd"]))
    np.testing.assert_array_equal(joint.metrics["gmd"].rmse_pos,
                                  alone.metrics["gmd"].rmse_pos)
    np.testing.assert_array_equal(joint.metrics["gmd"].nees,
                                  alone.metrics["gmd"].nees)


# ---------------------------------------------------------------------------
# Report formatting


def test_csv_text_layout():
    cfg = _toy_config(["centralized", "naive"], runs=2)
    report = run_scenario(cfg)
    lines = report.csv_text().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert lines[0] == "step,time_s,strategy,rmse_pos_m,rmse_vel_mps,nees,nees_lo,nees_hi"
    assert len(lines) == 1 + len(report.steps) * 2
    first = lines[1].split(",")
    assert first[0] == "3"
    assert float(first[1]) == pytest.approx(3.0)
    assert first[2] == "centralized"
    for field in first[3:]:
        assert np.isfinite(float(field))
    # Rows iterate steps in the outer loop and strategies in the inner loop.
    assert lines[2].split(",")[2] == "naive"
    assert lines[3].split(",")[0] == "6"


def test_summary_dict_contents():
    cfg = _toy_config(["naive"], runs=2)
    report = run_scenario(cfg)
    summary = report.summary_dict()
    assert summary["scenario"] == "toy"
    assert summary["runs"] == 2
    assert summary["fusion_steps"] == [3, 6, 9, 12]
    assert set(summary["track_loss"]) == {"naive"}
    assert summary["excluded_runs"]["naive"] == 0
    tail = report.metrics["naive"].rmse_pos[-20:]
    assert summary["steady_state_rmse_pos_m"]["naive"] == pytest.approx(
        np.nanmean(tail))
    assert summary["timing"]["naive"] > 0.0
    bare = report.summary_dict(include_timing=False)
    assert "timing" not in bare


def test_all_runs_lost_reported_as_nan():
    cfg = _toy_config(["naive"], track_loss_m=1e-6)
    report = run_scenario(cfg)
    m = report.metrics["naive"]
    assert m.track_loss_rate == 1.0
    assert np.isnan(m.rmse_pos).all()
    assert np.isnan(m.nees_lo) and np.isnan(m.nees_hi)
    np.testing.assert_array_equal(m.excluded, np.ones(4, dtype=int))
    row = report.csv_text().strip().split("\n")[1].split(",")
    assert row[3] == "nan"
    assert report.summary_dict()["steady_state_rmse_pos_m"]["naive"] is None


# ---------------------------------------------------------------------------
# Determinism and parallel execution


def test_same_seed_reproduces_report_byte_for_byte():
    cfg = _toy_config(["naive", "gmd"], runs=3)
    first = run_scenario(cfg)
    second = run_scenario(cfg)
    assert first.csv_text() == second.csv_text()
    assert first.summary_dict(include_timing=False) == \
        second.summary_dict(include_timing=False)


def test_process_pool_matches_serial(monkeypatch):
    cfg = _toy_config(["naive"], runs=4)
    monkeypatch.delenv("TRACKFUSE_THREADS", raising=False)
    serial = run_scenario(cfg)
    monkeypatch.setenv("TRACKFUSE_THREADS", "2")
    parallel = run_scenario(cfg)
    assert serial.csv_text() == parallel.csv_text()


# ---------------------------------------------------------------------------
# Configuration guards


def _imm_tracker():
    return ImmTracker(q_ncv=0.5, q_nca=4.0,
                      transition=np.array([[0.9, 0.1], [0.2, 0.8]]))


def test_rejects_empty_sensor_or_strategy_lists():
    with pytest.raises(ConfigError, match="sensor"):
        run_scenario(_toy_config(["naive"], sensors=()))
    with pytest.raises(ConfigError, match="strategy"):
        run_scenario(_toy_config([]))


def test_rejects_imm_on_non_planar_scenario():
    radar = range_az_el_sensor([0.0, 0.0, 0.0], 10.0, 1e-3)
    cfg = _toy_config(["naive"], sensors=(radar,), tracker=_imm_tracker(),
                      truth=NcvTruth(q=[0.1] * 3,
                                     initial_position=[1500.0, 2500.0, 100.0],
                                     initial_velocity=[10.0, 5.0, 0.0]))
    with pytest.raises(ConfigError, match="planar"):
        run_scenario(cfg)


def test_rejects_feedback_without_imm():
    with pytest.raises(ConfigError, match="feedback"):
        run_scenario(_toy_config(["naive"], feedback=True))


def test_rejects_full_state_nees_with_imm():
    cfg = _sine_imm_config(nees_marginal="full")
    with pytest.raises(ConfigError, match="posvel"):
        run_scenario(cfg)


def test_rejects_mixture_fusion_with_three_sensors():
    three = _BEARING_SENSORS + (bearing_sensor([2000.0, -3000.0], 2e-3),)
    cfg = _toy_config(["hmd"], sensors=three, tracker=_imm_tracker(),
                      duration_s=2.0, fusion_every=2, nees_marginal="posvel")
    with pytest.raises(ConfigError, match="two sensors"):
        run_scenario(cfg)


# ---------------------------------------------------------------------------
# IMM pipelines (mixture fusion, pruning, feedback routing)


def _sine_imm_config(**overrides):
    base = dict(
        name="sine-imm",
        duration_s=8.0,
        dt_s=1.0,
        truth=SineTruth(start=[0.0, 0.0], speed_mps=100.0, amplitude_m=150.0,
                        wavelength_m=2000.0, rotation_rad=0.0),
        sensors=(bearing_sensor([-2000.0, -2000.0], 2e-3),
                 bearing_sensor([3000.0, -1500.0], 2e-3)),
        tracker=_imm_tracker(),
        strategies=("hmd",),
        runs=2,
        seed=7,
        fusion_every=2,
        track_loss_m=50000.0,
        nees_marginal="posvel",
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def test_imm_mixture_fusion_with_pruning_runs_clean():
    report = run_scenario(_sine_imm_config(prune_to=2))
    m = report.metrics["hmd"]
    assert np.isfinite(m.rmse_pos).all()
    assert np.isfinite(m.nees).all()
    assert m.track_loss_rate == 0.0


def test_feedback_routing_changes_the_estimates():
    plain = run_scenario(_sine_imm_config(feedback=False))
    routed = run_scenario(_sine_imm_config(feedback=True))
    assert np.isfinite(routed.metrics["hmd"].rmse_pos).all()
    assert not np.allclose(plain.metrics["hmd"].rmse_pos,
                           routed.metrics["hmd"].rmse_pos)


def test_report_identifies_scenario_and_strategies():
    cfg = _toy_config(["centralized", "naive"])
    report = run_scenario(cfg)
    assert isinstance(report, MetricsReport)
    assert report.scenario == "toy"
    assert report.runs == 1
    assert report.strategies == ("centralized", "naive")
