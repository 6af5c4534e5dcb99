import math
import time
import tracemalloc

import numpy as np
import pytest
from conftest import polar_state

from radiotrack.errors import (
    InitializationError,
    InputValidationError,
    InsufficientDetectionsError,
    PreconditionError,
)
from radiotrack.io.synthetic import simulate_scenario, synthesize_detections
from radiotrack.models import Detection, FilterState, StateVector, Track, TrackPoint
from radiotrack.services.antenna import field_pattern
from radiotrack.services.observation import display_from_xi, xi
from tracker import fusion, initializer, scoring, static
from tracker.initializer import enumerate_initial_states, handle_gap, select_initial_state
from tracker.main import split_segments, track
from tracker.runner import Epoch, group_epochs
from validation.collector import reference_scenario


def _display(state, tower, beam, config) -> float:
    return float(display_from_xi(config.receiver, xi(state, tower, beam, config.pattern)))


def _detection(t, state, tower, beam, config) -> Detection:
    return Detection(t, tower.id, beam, int(round(_display(state, tower, beam, config))))


@pytest.fixture
def short_run():
    scenario = reference_scenario(3).model_copy(update={"duration_s": 300.0})
    trajectory = simulate_scenario(scenario)
    return scenario, trajectory, synthesize_detections(trajectory, scenario)


# --- static inversion ---------------------------------------------------------------


def test_static_inversion_round_trip(tower, tracker_config):
    truth = polar_state(tower, 1000.0, 60.0, tower.height)
    display = _display(truth, tower, 1, tracker_config)
    psi, r = static.static_inversion_polar(display, tower, tower.height, tracker_config)
    on_axis = np.abs(psi) < 1e-9
    assert on_axis.any()
    assert np.min(np.abs(r[on_axis] - 1000.0)) < 10.0

    xy = static.static_inversion(display, tower, 1, tower.height, tracker_config)
    assert xy.shape == (len(psi), 2)
    assert np.min(np.hypot(xy[:, 0] - truth.x, xy[:, 1] - truth.y)) < 10.0


def test_static_inversion_far_field(tower, tracker_config):
    z = 5.0
    truth = polar_state(tower, 4000.0, 0.0, z)
    display = _display(truth, tower, 0, tracker_config)
    xi_obs = math.sqrt(static.display_to_xi2(display, tracker_config))
    psi, r = static.static_inversion_polar(display, tower, z, tracker_config)
    k0 = tracker_config.pattern.k0
    far = k0 * tower.height * z / r < 0.1
    assert far.any()
    g = np.abs(field_pattern(tracker_config.pattern, psi[far]))
    np.testing.assert_allclose(r[far] ** 2, tower.height * z * g / xi_obs, rtol=0.02)
    # weaker lobes need the bird closer: r scales with sqrt(|g|)
    assert r[far].max() == pytest.approx(4000.0, rel=0.01)


def test_main_beam_range(tower, tracker_config):
    truth = polar_state(tower, 4000.0, 0.0, 5.0)
    display = _display(truth, tower, 0, tracker_config)
    assert static.main_beam_range(display, tower, 5.0, tracker_config) == pytest.approx(
        4000.0, rel=0.01
    )


def test_static_inversion_edge_cases(tower, tracker_config):
    psi, r = static.static_inversion_polar(0.0, tower, 10.0, tracker_config)
    assert len(psi) == 0 and len(r) == 0
    with pytest.raises(PreconditionError):
        static.static_inversion_polar(100.0, tower, 0.0, tracker_config)
    # saturated readings are censored just below the ceiling
    assert static.display_to_xi2(255, tracker_config) == static.display_to_xi2(
        254.5, tracker_config
    )


def test_static_inversion_keeps_farthest_roots(tower, tracker_config):
    # close to the tower every interference lobe adds two ranges per psi
    truth = polar_state(tower, 283.0, 0.0, tower.height)
    display = _display(truth, tower, 0, tracker_config)
    psi, r = static.static_inversion_polar(display, tower, tower.height, tracker_config)
    psi2, r2 = static.static_inversion_polar(display, tower, tower.height, tracker_config, 2)
    assert len(r2) < len(r)
    assert np.array_equal(np.unique(psi2), np.unique(psi))
    for p in np.unique(psi):
        np.testing.assert_array_equal(np.sort(r2[psi2 == p]), np.sort(r[psi == p])[-2:])
    on_axis = np.abs(psi2) < 1e-9
    assert np.min(np.abs(r2[on_axis] - 283.0)) < 1.0


# --- initialization -----------------------------------------------------------------


def test_enumerate_contains_true_start(tower, tracker_config):
    z = 30.0
    s0 = polar_state(tower, 3000.0, 0.0, z)
    s1 = polar_state(tower, 3012.0, 0.0, z)
    d0 = _detection(0.0, s0, tower, 0, tracker_config)
    d1 = _detection(6.0, s1, tower, 0, tracker_config)
    candidates = enumerate_initial_states(d0, d1, {"T1": tower}, tracker_config, z0=z)
    assert candidates.shape[1] == 5
    np.testing.assert_allclose(candidates[:, 4], math.sqrt(z))
    assert np.min(np.hypot(candidates[:, 0] - s0.x, candidates[:, 2] - s0.y)) < 30.0
    speed = np.hypot(candidates[:, 1], candidates[:, 3])
    assert np.all(speed <= tracker_config.v_max + 1e-9)


def test_enumerate_rejects_bad_pairs(tower, tracker_config):
    towers = {"T1": tower}
    d0 = Detection(0.0, "T1", 0, 0)
    d1 = Detection(6.0, "T1", 0, 0)
    with pytest.raises(InitializationError):
        enumerate_initial_states(d0, d1, towers, tracker_config)
    with pytest.raises(PreconditionError):
        enumerate_initial_states(d1, d0, towers, tracker_config)


def test_select_prefers_consistent_candidate(short_run):
    scenario, trajectory, detections = short_run
    config = scenario.tracker
    towers = {t.id: t for t in scenario.towers}
    epochs = group_epochs(sorted(d for d in detections if d.display >= config.z_threshold))
    truth = trajectory.states[np.searchsorted(trajectory.times, epochs[0].t)]
    far = truth + np.array([1500.0, 0.0, -800.0, 0.0, 0.0])
    state, seg = select_initial_state(np.array([far, truth, far]), epochs, towers, config)
    np.testing.assert_allclose(state.as_array(), truth)
    assert len(seg) == sum(len(e.detections) for e in epochs)

    capped = config.model_copy(update={"candidate_cap": 1})
    state, _ = select_initial_state(np.array([far, truth, far]), epochs, towers, capped)
    np.testing.assert_allclose(state.as_array(), truth)


def test_select_prescreens_in_batches(short_run, monkeypatch):
    scenario, trajectory, detections = short_run
    config = scenario.tracker.model_copy(update={"candidate_cap": 2, "prescreen_batch": 2})
    towers = {t.id: t for t in scenario.towers}
    epochs = group_epochs(sorted(d for d in detections if d.display >= config.z_threshold))
    truth = trajectory.states[np.searchsorted(trajectory.times, epochs[0].t)]
    offsets = np.array([[1500.0, 0, -800.0, 0, 0], [-900.0, 0, 700.0, 0, 0], [0, 0, 0, 0, 0]])
    candidates = np.vstack([truth + offsets, truth + 2.0 * offsets[:2]])

    sizes = []
    original = initializer.run_segment

    def recording(states, *args, **kwargs):
        sizes.append(len(states))
        return original(states, *args, **kwargs)

    monkeypatch.setattr(initializer, "run_segment", recording)
    state, _ = select_initial_state(candidates, epochs, towers, config)
    np.testing.assert_allclose(state.as_array(), truth)
    assert sizes == [2, 2, 1, config.candidate_cap]


def test_handle_gap_picks_farthest_reachable(tower, tracker_config):
    towers = {"T1": tower}
    config = tracker_config.model_copy(update={"t_gap_max": 1e-4})
    z = 20.0
    prev_state = polar_state(tower, 2500.0, 10.0, z)
    prev = FilterState(prev_state.as_array(), np.eye(5), 0.0)
    s0 = polar_state(tower, 3000.0, 0.0, z)
    s1 = polar_state(tower, 3010.0, 0.0, z)
    gap = 100.0
    d0 = _detection(gap, s0, tower, 0, tracker_config)
    d1 = _detection(gap + 6.0, s1, tower, 0, tracker_config)

    out = handle_gap(prev, gap, d0, d1, towers, config)
    assert out.z == pytest.approx(z)
    candidates = enumerate_initial_states(d0, d1, towers, tracker_config, z0=z)
    dist = np.hypot(candidates[:, 0] - prev_state.x, candidates[:, 2] - prev_state.y)
    reach = tracker_config.v_max * gap
    jump = math.hypot(out.x - prev_state.x, out.y - prev_state.y)
    assert jump <= reach
    assert jump == pytest.approx(dist[dist <= reach].max())

    # nothing reachable: the constraint is dropped but the farthest rule stays
    out = handle_gap(prev, 1e-3, d0, d1, towers, config)
    assert math.hypot(out.x - prev_state.x, out.y - prev_state.y) == pytest.approx(dist.max())


def test_handle_gap_resets_lost_altitude(tower, tracker_config):
    prev = FilterState(np.array([tower.x + 2000.0, 0.0, tower.y, 0.0, 0.0]), np.eye(5), 0.0)
    s0 = polar_state(tower, 2500.0, 0.0, tracker_config.z0)
    s1 = polar_state(tower, 2510.0, 0.0, tracker_config.z0)
    d0 = _detection(400.0, s0, tower, 0, tracker_config)
    d1 = _detection(406.0, s1, tower, 0, tracker_config)
    out = handle_gap(prev, 400.0, d0, d1, {"T1": tower}, tracker_config)
    assert out.z == pytest.approx(tracker_config.z0)


@pytest.mark.parametrize("gap", [-1.0, 0.0, 120.0, 300.0])
def test_handle_gap_rejects_short_gaps(tower, tracker_config, gap):
    prev = FilterState(polar_state(tower, 2000.0, 0.0, 20.0).as_array(), np.eye(5), 0.0)
    d0 = _detection(gap, polar_state(tower, 2500.0, 0.0, 20.0), tower, 0, tracker_config)
    d1 = _detection(gap + 6.0, polar_state(tower, 2510.0, 0.0, 20.0), tower, 0, tracker_config)
    with pytest.raises(PreconditionError, match="t_gap_max"):
        handle_gap(prev, gap, d0, d1, {"T1": tower}, tracker_config)


# --- scoring and fusion -------------------------------------------------------------


def test_trapezoid_weights():
    np.testing.assert_allclose(
        scoring.trapezoid_weights(np.array([0.0, 1.0, 2.0, 3.0])), np.array([0.5, 1, 1, 0.5]) / 3
    )
    np.testing.assert_allclose(scoring.trapezoid_weights(np.array([5.0, 5.0])), [0.5, 0.5])


def test_weighted_rms_constant_offset():
    t = np.array([0.0, 6.0, 20.0, 21.0, 60.0])
    z = np.array([30.0, 40.0, 50.0, 60.0, 70.0])
    assert scoring.weighted_rms(t, z + 3.0, z) == pytest.approx(3.0)
    batch = np.column_stack([z + 3.0, z - 4.0])
    np.testing.assert_allclose(scoring.weighted_rms(t, batch, z), [3.0, 4.0])


def test_weighted_rms_matches_uniform_resampling():
    rng = np.random.default_rng(4)
    t = np.cumsum(np.r_[0.0, rng.uniform(6.0, 40.0, 60)])
    observed = 120.0 + 40.0 * np.sin(t / 300.0)
    predicted = observed + 5.0 * np.sin(t / 200.0)
    grid = np.linspace(t[0], t[-1], 20_001)
    resampled = np.interp(grid, t, predicted) - np.interp(grid, t, observed)
    brute = math.sqrt(np.mean(resampled**2))
    assert scoring.weighted_rms(t, predicted, observed) == pytest.approx(brute, abs=1.0)


def test_score_track_alignment():
    point = TrackPoint(0.0, StateVector(0, 0, 0, 0, 1), np.eye(5), "T1", 0, 100, 104.0, 0)
    tr = Track(points=[point])
    assert scoring.score_track(tr, [Detection(0.0, "T1", 0, 100)]) == pytest.approx(4.0)
    with pytest.raises(PreconditionError):
        scoring.score_track(tr, [])
    with pytest.raises(PreconditionError):
        scoring.score_track(Track(), [])


def test_fuse_simultaneous():
    a = FilterState(np.zeros(5), np.eye(5), 10.0)
    b = FilterState(np.full(5, 2.0), 3.0 * np.eye(5), 10.0)
    fused = fusion.fuse_simultaneous([a, b])
    np.testing.assert_allclose(fused.mean, np.ones(5))
    np.testing.assert_allclose(fused.cov, 2.0 * np.eye(5))
    assert fusion.fuse_simultaneous([a]) is a
    with pytest.raises(PreconditionError):
        fusion.fuse_simultaneous([a, FilterState(np.zeros(5), np.eye(5), 11.0)])
    with pytest.raises(PreconditionError):
        fusion.fuse_simultaneous([])


# --- end to end ---------------------------------------------------------------------


def test_group_and_split():
    dets = [Detection(0.0, "T1", 0, 50), Detection(0.0, "T2", 1, 60), Detection(6.0, "T1", 0, 55)]
    epochs = group_epochs(dets)
    assert [len(e.detections) for e in epochs] == [2, 1]
    times = [0.0, 6.0, 12.0, 400.0, 406.0]
    segments = split_segments([Epoch(t, ()) for t in times], 300.0)
    assert [[e.t for e in s] for s in segments] == [[0.0, 6.0, 12.0], [400.0, 406.0]]


def test_track_input_errors(tower, tracker_config):
    quiet = [Detection(0.0, "T1", 0, 10), Detection(6.0, "T1", 0, 21)]
    with pytest.raises(InsufficientDetectionsError):
        track(quiet, [tower], tracker_config)
    with pytest.raises(InputValidationError):
        track([Detection(0.0, "T9", 0, 100)] * 2, [tower], tracker_config)
    with pytest.raises(InputValidationError):
        track([Detection(0.0, "T1", 7, 100)] * 2, [tower], tracker_config)


def test_track_end_to_end(short_run):
    scenario, trajectory, detections = short_run
    config = scenario.tracker
    result = track(detections, scenario.towers, config)
    usable = [d for d in detections if d.display >= config.z_threshold]
    assert len(result) == len(usable)
    assert result.tag_id == scenario.tag_id
    assert {p.segment for p in result.points} == {0}
    assert np.all(np.diff(result.times) >= 0)
    assert np.all(np.isfinite(result.means))
    for p in result.points:
        np.testing.assert_allclose(p.cov, p.cov.T)

    again = track(detections, scenario.towers, config)
    np.testing.assert_array_equal(result.means, again.means)
    np.testing.assert_array_equal(result.predicted_displays, again.predicted_displays)


def test_track_splits_on_gap(short_run):
    scenario, _, detections = short_run
    config = scenario.tracker
    late = detections[0].t + 150.0
    shifted = [
        Detection(d.t + (1000.0 if d.t > late else 0.0), d.tower_id, d.beam_index, d.display)
        for d in detections
    ]
    result = track(shifted, scenario.towers, config)
    assert {p.segment for p in result.points} == {0, 1}
    assert len(result) == sum(d.display >= config.z_threshold for d in shifted)


def test_track_reference_run_stays_bounded():
    scenario = reference_scenario(0)
    config = scenario.tracker
    detections = synthesize_detections(simulate_scenario(scenario), scenario)
    usable = sorted(d for d in detections if d.display >= config.z_threshold)
    towers = {t.id: t for t in scenario.towers}
    for d in usable[:2]:
        xy = static.static_inversion(
            d.display, towers[d.tower_id], d.beam_index, config.z0, config, config.roots_per_psi
        )
        assert len(xy) <= 2 * 360

    tracemalloc.start()
    started = time.perf_counter()
    try:
        result = track(detections, scenario.towers, config)
        elapsed = time.perf_counter() - started
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert len(result) == len(usable)
    assert np.all(np.isfinite(result.means))
    assert peak < 512 * 2**20
    assert elapsed < 60.0
