"""Synthetic detection logs: receiver sampling schedule and forward-model emission."""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog

from radiotrack.errors import PreconditionError
from radiotrack.io.detections import write_detections
from radiotrack.models import Detection, ScenarioConfig, StateVector, TowerSite, Trajectory
from radiotrack.rng import RNG_NAME, make_rng
from radiotrack.services import movement
from radiotrack.services.antenna import wrap_angle
from radiotrack.services.observation import (
    display_from_power,
    display_from_xi,
    sample_power,
    xi,
)

log = structlog.get_logger("radiotrack.synthetic")

EMISSION_STREAM = 1


@dataclass(frozen=True, order=True)
class PlannedReading:
    t: float
    tower_id: str
    # None: pick the beam whose boresight is nearest the bird
    beam_index: int | None = None


def _dwell_readings(scenario: ScenarioConfig, tower: TowerSite) -> list[PlannedReading]:
    """Round-robin over beams; the first tag pulse inside each dwell window is logged."""
    sched = scenario.schedule
    out = []
    k = 0
    while True:
        start = k * sched.dwell_s
        if start > scenario.duration_s:
            break
        j = max(0, math.ceil((start - sched.pulse_offset_s) / sched.pulse_period_s - 1e-12))
        pulse = sched.pulse_offset_s + j * sched.pulse_period_s
        if pulse < start + sched.dwell_s and pulse <= scenario.duration_s:
            t = round(scenario.t0 + pulse, 3)
            out.append(PlannedReading(t, tower.id, k % tower.n_beams))
        k += 1
    return out


def _cadence_readings(scenario: ScenarioConfig, tower: TowerSite) -> list[PlannedReading]:
    n = int(math.floor(scenario.duration_s / scenario.schedule.cadence_s + 1e-9))
    return [
        PlannedReading(round(scenario.t0 + k * scenario.schedule.cadence_s, 3), tower.id)
        for k in range(n + 1)
    ]


def planned_readings(scenario: ScenarioConfig) -> list[PlannedReading]:
    plan = _dwell_readings if scenario.schedule.mode == "dwell" else _cadence_readings
    return sorted(r for tower in scenario.towers for r in plan(scenario, tower))


def sample_times(scenario: ScenarioConfig) -> np.ndarray:
    """Distinct reading instants, starting at the scenario start."""
    times = {round(scenario.t0, 3)} | {r.t for r in planned_readings(scenario)}
    return np.array(sorted(times), dtype=float)


def simulate_scenario(scenario: ScenarioConfig, seed: int | None = None) -> Trajectory:
    """Movement-model trajectory sampled at every reading instant of the scenario."""
    init = StateVector.at_altitude(
        scenario.initial.x,
        scenario.initial.vx,
        scenario.initial.y,
        scenario.initial.vy,
        scenario.initial.z,
    )
    seed = scenario.seed if seed is None else seed
    return movement.simulate_trajectory(scenario.movement, init, sample_times(scenario), seed)


def _state_at(trajectory: Trajectory, t: float, scenario: ScenarioConfig) -> StateVector:
    i = int(np.searchsorted(trajectory.times, t, side="right")) - 1
    if i < 0:
        raise PreconditionError(f"trajectory starts after reading time {t}")
    return movement.propagate(trajectory.state(i), scenario.movement, t - trajectory.times[i])


def nearest_beam(state: StateVector, tower: TowerSite) -> int:
    bearing = math.atan2(state.y - tower.y, state.x - tower.x)
    off = np.abs(np.asarray(wrap_angle(tower.beam_bearings - bearing)))
    return int(np.argmin(off))


def synthesize_detections(
    trajectory: Trajectory, scenario: ScenarioConfig, seed: int | None = None
) -> list[Detection]:
    seed = scenario.seed if seed is None else seed
    rng = make_rng(seed, stream=EMISSION_STREAM)
    towers = {t.id: t for t in scenario.towers}
    receiver, pattern = scenario.receiver, scenario.pattern
    lo, hi = receiver.display_min, receiver.display_max

    out = []
    for reading in planned_readings(scenario):
        tower = towers[reading.tower_id]
        state = _state_at(trajectory, reading.t, scenario)
        beam = nearest_beam(state, tower) if reading.beam_index is None else reading.beam_index
        value = xi(state, tower, beam, pattern)
        if scenario.measurement_noise:
            z = display_from_power(receiver, sample_power(value, receiver.p0, rng))
        else:
            z = display_from_xi(receiver, value)
        display = int(np.clip(np.rint(z), math.ceil(lo), math.floor(hi)))
        out.append(Detection(reading.t, tower.id, beam, display, tag_id=scenario.tag_id))
    return out


def emit_detections(
    trajectory: Trajectory, scenario: ScenarioConfig, path: str | Path, seed: int | None = None
) -> int:
    """Write the synthetic log for `trajectory`; the effective scenario is echoed in the header."""
    seed = scenario.seed if seed is None else seed
    detections = synthesize_detections(trajectory, scenario, seed)
    header = [
        f"scenario: {scenario.model_dump_json()}",
        f"seed: {seed}",
        f"rng: {RNG_NAME}",
    ]
    count = write_detections(detections, path, header)
    log.info("detections_emitted", path=str(path), count=count, seed=seed)
    return count
