import json
from collections import defaultdict

import numpy as np
import pandas as pd
import pytest

from radiotrack.errors import DetectionFileError, InputValidationError
from radiotrack.io import detections as det_io
from radiotrack.io import files, outputs, schemas, synthetic
from radiotrack.models import (
    CalibrationResult,
    Detection,
    InitialState,
    MovementParams,
    ReceiverModel,
    ScenarioConfig,
    Schedule,
    StateVector,
    Track,
    TrackPoint,
)

T0 = 1717200000.0  # 2024-06-01T00:00:00Z


@pytest.fixture
def scenario(tower, movement) -> ScenarioConfig:
    return ScenarioConfig(
        towers=(tower,),
        movement=movement,
        initial=InitialState(x=tower.x + 300.0, vx=1.0, y=tower.y + 100.0, vy=0.5, z=15.0),
        duration_s=600.0,
        seed=5,
    )


def test_detection_log_round_trip(tmp_path):
    dets = [
        Detection(T0 + 6.25, "T1", 2, 140, tag_id="bird-7"),
        Detection(T0, "T1", 0, 22, tag_id="bird-7"),
    ]
    path = tmp_path / "detections.csv"
    assert det_io.write_detections(dets, path, ["seed: 1"]) == 2
    text = path.read_text()
    assert text.startswith("# seed: 1\ntag_id,timestamp,tower_id,beam_index,Z\n")
    assert "2024-06-01T00:00:06.250+00:00" in text

    loaded = det_io.load_detections(path)
    assert loaded == sorted(dets)
    assert [d.tag_id for d in loaded] == ["bird-7", "bird-7"]


def test_timestamps_round_to_milliseconds():
    assert files.format_timestamp(T0 + 1.23456) == "2024-06-01T00:00:01.235+00:00"
    parsed = files.parse_timestamps(pd.Series(["2024-06-01T00:00:01.2349Z"]))
    assert parsed.iloc[0] == pytest.approx(T0 + 1.235)


def test_detection_errors_report_line_numbers(tmp_path, tower):
    path = tmp_path / "bad.csv"
    path.write_text(
        "# exported log\n"
        "tag_id,timestamp,tower_id,beam_index,Z\n"
        "b,2024-06-01T00:00:00.000Z,T1,0,120\n"
        "b,2024-06-01T00:00:06.000Z,T1,0,300\n"
        "b,2024-06-01T00:00:12.000Z,T9,0,100\n"
        "b,not-a-time,T1,1,100\n"
        "b,2024-06-01T00:00:18.000Z,T1,6,100\n"
    )
    with pytest.raises(DetectionFileError) as info:
        det_io.load_detections(path, {"T1": tower})
    assert [line for line, _ in info.value.problems] == [4, 5, 6, 7]
    assert "line 4" in str(info.value)
    assert info.value.exit_code == 2


def test_detection_file_shape_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("# nothing logged\n")
    assert det_io.load_detections(empty) == []

    header_only = tmp_path / "header.csv"
    header_only.write_text("tag_id,timestamp,tower_id,beam_index,Z\n")
    assert det_io.load_detections(header_only) == []

    missing = tmp_path / "missing.csv"
    missing.write_text("tag_id,timestamp,Z\nb,2024-06-01T00:00:00Z,5\n")
    with pytest.raises(DetectionFileError):
        det_io.load_detections(missing)

    with pytest.raises(InputValidationError):
        det_io.load_detections(tmp_path / "absent.csv")


def test_tower_file_conventions(tmp_path):
    doc = {
        "format_version": 1,
        "bearing_convention": "compass",
        "towers": [
            {"id": "A", "x": 0.0, "y": 0.0, "height": 10.0, "beam_bearings_deg": [0.0, 90.0]}
        ],
    }
    path = tmp_path / "towers.json"
    path.write_text(json.dumps(doc))
    towers = schemas.load_towers(path)
    assert towers["A"].beam_bearings_deg == (90.0, 0.0)

    out = schemas.write_towers(towers, tmp_path / "grid.json")
    assert schemas.load_towers(out) == towers


@pytest.mark.parametrize(
    "change",
    [
        {"format_version": 2},
        {"towers": []},
        {"towers": [{"id": "A", "x": 0, "y": 0, "height": 10, "beam_bearings_deg": [0, 360]}]},
        {"towers": [{"id": "A", "x": 0, "y": 0, "height": 10, "beam_bearings_deg": [0]}] * 2},
        {"extra": True},
    ],
)
def test_tower_file_rejects(tmp_path, change):
    doc = {
        "format_version": 1,
        "towers": [{"id": "A", "x": 0, "y": 0, "height": 10, "beam_bearings_deg": [0]}],
    }
    path = tmp_path / "towers.json"
    path.write_text(json.dumps(doc | change))
    with pytest.raises(InputValidationError):
        schemas.load_towers(path)


def test_tracker_and_receiver_files(tmp_path, tracker_config):
    path = schemas.write_model(tracker_config, tmp_path / "tracker.json")
    assert schemas.load_tracker_config(path) == tracker_config

    doc = json.loads(path.read_text())
    doc["v_max"] = -1
    path.write_text(json.dumps(doc))
    with pytest.raises(InputValidationError):
        schemas.load_tracker_config(path)

    result = CalibrationResult(ReceiverModel(b=0.29, p0=5e-11), residual_rms=0.01, n_samples=12)
    path = schemas.write_receiver_model(result, tmp_path / "receiver.json")
    assert schemas.load_receiver(path) == result.model


def test_dwell_schedule_spacing(scenario):
    readings = synthetic.planned_readings(scenario)
    assert readings
    by_beam = defaultdict(list)
    for r in readings:
        by_beam[r.beam_index].append(r.t)
    assert set(by_beam) == set(range(6))
    for times in by_beam.values():
        assert np.all(np.diff(times) >= 32.5)
    assert synthetic.sample_times(scenario)[0] == pytest.approx(scenario.t0)


def test_cadence_schedule(scenario):
    cadence = scenario.model_copy(update={"schedule": Schedule(mode="cadence", cadence_s=6.0)})
    readings = synthetic.planned_readings(cadence)
    assert len(readings) == 101
    assert all(r.beam_index is None for r in readings)
    detections = synthetic.synthesize_detections(synthetic.simulate_scenario(cadence), cadence)
    assert len(detections) == 101
    assert all(0 <= d.display <= 255 for d in detections)


def test_grounded_bird_reads_floor(scenario):
    still = MovementParams(
        beta_x=2.5e-4, beta_y=2.25e-4, beta_z=1e-5, sigma_xx=0.25, sigma_yy=0.25, sigma_zz=0.0
    )
    grounded = scenario.model_copy(
        update={
            "movement": still,
            "initial": InitialState(x=scenario.initial.x, y=scenario.initial.y, z=0.0),
            "measurement_noise": False,
        }
    )
    trajectory = synthetic.simulate_scenario(grounded)
    assert np.all(np.abs(trajectory.states[:, 4]) < 1e-9)
    detections = synthetic.synthesize_detections(trajectory, grounded)
    assert {d.display for d in detections} == {0}


def test_emission_is_reproducible(tmp_path, scenario):
    trajectory = synthetic.simulate_scenario(scenario)
    a = synthetic.emit_detections(trajectory, scenario, tmp_path / "a.csv")
    again = synthetic.simulate_scenario(scenario)
    b = synthetic.emit_detections(again, scenario, tmp_path / "b.csv")
    assert a == b
    text = (tmp_path / "a.csv").read_text()
    assert text == (tmp_path / "b.csv").read_text()
    assert "# seed: 5" in text and "# rng: numpy-philox4x64-v1" in text

    other = synthetic.synthesize_detections(trajectory, scenario, seed=6)
    loaded = det_io.load_detections(tmp_path / "a.csv")
    assert [d.display for d in other] != [d.display for d in loaded]


def test_nearest_beam(tower):
    state = StateVector.at_altitude(tower.x - 100.0, 0.0, tower.y - 10.0, 0.0, 10.0)
    assert synthetic.nearest_beam(state, tower) == 3


def _track() -> Track:
    cov = np.diag([10.0, 1.0, 10.0, 1.0, 2.0])
    cov[0, 2] = cov[2, 0] = 0.125
    points = [
        TrackPoint(T0, StateVector(1.5, 0.1, -2.25, 0.2, 3.0), cov, "T1", 1, 120, 118.25, 0),
        TrackPoint(T0 + 6.5, StateVector(2.0, 0.1, -1.0, 0.2, 3.1), cov, "T1", 1, 124, 125.5, 0),
    ]
    return Track(tag_id="bird-7", points=points)


def test_track_file_round_trip(tmp_path):
    original = _track()
    path = outputs.emit_track(original, tmp_path / "track.csv", ["tracker: {}"])
    header = pd.read_csv(path, comment="#", nrows=0).columns.tolist()
    assert header == outputs.TRACK_COLUMNS

    loaded = outputs.load_track(path)
    assert loaded.tag_id == "bird-7"
    np.testing.assert_array_equal(loaded.means, original.means)
    np.testing.assert_array_equal(loaded.times, original.times)
    np.testing.assert_array_equal(loaded.points[1].cov, original.points[1].cov)
    assert loaded.points[1].predicted_display == 125.5


def test_signal_trace(tmp_path):
    path = outputs.emit_signal_trace(_track(), None, tmp_path / "trace.csv")
    frame = pd.read_csv(path)
    assert frame.columns.tolist() == outputs.TRACE_COLUMNS
    np.testing.assert_allclose(frame["residual"], [-1.75, 1.5])
    with pytest.raises(InputValidationError):
        outputs.emit_signal_trace(_track(), [], tmp_path / "trace.csv")


def test_pattern_csv(tmp_path, pattern):
    path = outputs.emit_pattern_csv(pattern, tmp_path / "pattern.csv", 0.5)
    frame = pd.read_csv(path, comment="#")
    row = frame.loc[frame["psi_deg"] == 0.0].iloc[0]
    assert row["g"] == pytest.approx(0.6768, abs=5e-4)
    assert len(frame) == 721


def test_trajectory_file_round_trip(tmp_path, scenario):
    trajectory = synthetic.simulate_scenario(scenario)
    path = outputs.emit_trajectory(trajectory, tmp_path / "trajectory.csv")
    loaded = outputs.load_trajectory(path)
    np.testing.assert_array_equal(loaded.states, trajectory.states)


def test_calibration_samples_file(tmp_path, tower):
    path = tmp_path / "cal.csv"
    path.write_text("xi,Z\n1e-5,40\n3e-5,120\n")
    samples = outputs.load_calibration_samples(path)
    assert [(s.xi, s.display) for s in samples] == [(1e-5, 40.0), (3e-5, 120.0)]

    geo = tmp_path / "geo.csv"
    geo.write_text(f"x,y,z,tower_id,beam_index,Z\n{tower.x + 800},{tower.y},25,T1,0,150\n")
    with pytest.raises(InputValidationError):
        outputs.load_calibration_samples(geo)
    (sample,) = outputs.load_calibration_samples(geo, {"T1": tower})
    assert sample.xi > 0 and sample.display == 150.0


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "nested" / "out.txt"
    files.write_text_atomic(target, "first\n")
    files.write_text_atomic(target, "second\n")
    assert target.read_text() == "second\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]
