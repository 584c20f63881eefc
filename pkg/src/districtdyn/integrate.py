"""Adaptive time integration of the firm-wealth ODE system.

Embedded Dormand-Prince 5(4) pair with PI step-size control and the
standard quartic dense-output interpolant.  After every accepted step any
utility below the death threshold is projected to exactly zero and a
failure event is recorded at the first crossing; zero is absorbing because
all flow terms of a dead firm vanish.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from districtdyn.dynamics import Dynamics, FlowBreakdown
from districtdyn.errors import DistrictError, IntegrationError, ValidationError
from districtdyn.netmodel import Network

# Dormand-Prince coefficients (5th-order propagation, 4th-order error control)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
])
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# b5 - b4, including the 7th (FSAL) stage
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense-output polynomial in the step fraction x: y = y0 + h * K^T P [x, x^2, x^3, x^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_PI_BETA = 0.04
_PI_ALPHA = 0.2 - 0.75 * _PI_BETA
_MAX_STEPS = 10_000_000


@dataclass(frozen=True)
class SimConfig:
    t_end: float = 100.0
    sample_dt: float = 0.1
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    death_threshold: float = 1e-6  # absolute utility floor, millions GBP

    def __post_init__(self):
        if not (self.t_end > 0):
            raise ValidationError(f"t_end must be > 0, got {self.t_end}")
        if not (self.sample_dt > 0):
            raise ValidationError(f"sample_dt must be > 0, got {self.sample_dt}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValidationError("tolerances must be > 0")
        if not (self.death_threshold >= 0):
            raise ValidationError("death_threshold must be >= 0")


@dataclass(frozen=True)
class Event:
    type: str  # "failure" | "peak"
    node: str
    time: float
    value: float


@dataclass
class Trajectory:
    node_ids: list[str]
    times: np.ndarray            # strictly increasing sample grid
    states: np.ndarray           # shape (len(times), n_nodes), all >= 0
    events: list[Event] = field(default_factory=list)
    validity_horizon: float = 0.0
    flows: list[FlowBreakdown] | None = None

    def series(self, node_id: str) -> np.ndarray:
        return self.states[:, self.node_ids.index(node_id)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + self.node_ids)
        for t, row in zip(self.times, self.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["type", "node", "time", "value"])
        for e in self.events:
            w.writerow([e.type, e.node, repr(float(e.time)), repr(float(e.value))])
        return buf.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    """Parse a trajectory CSV back into a Trajectory (no events/flows)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValidationError("trajectory CSV must start with header 't,<node>,...'")
    node_ids = rows[0][1:]
    data = [[float(x) for x in r] for r in rows[1:] if r]
    if not data:
        raise ValidationError("trajectory CSV has no samples")
    arr = np.array(data)
    return Trajectory(
        node_ids=node_ids,
        times=arr[:, 0],
        states=arr[:, 1:],
        validity_horizon=float(arr[-1, 0]),
    )


def _initial_step(f, y0, f0, rtol, atol, t_end):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = f(np.maximum(y1, 0.0))
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_end)


def simulate(network: Network, config: SimConfig = SimConfig(),
             with_flows: bool = False) -> Trajectory:
    """Integrate from the calibrated initial utilities to t_end.

    Deterministic: identical inputs give bit-identical trajectories.
    """
    dyn = Dynamics(network)
    n = dyn.n

    f = dyn.deriv

    sample_times = np.arange(round(config.t_end / config.sample_dt) + 1) * config.sample_dt
    sample_times[-1] = min(sample_times[-1], config.t_end)
    states = np.empty((len(sample_times), n))
    events: list[Event] = []
    failed = np.zeros(n, dtype=bool)
    failure_time = np.full(n, np.inf)

    t = 0.0
    y = dyn.u0.copy()
    # nodes starting below the floor are dead from the start; that is not a
    # crossing, so no failure event is recorded
    dead0 = y < config.death_threshold
    if np.any(dead0):
        failed[dead0] = True
        failure_time[dead0] = 0.0
        y = np.where(dead0, 0.0, y)

    states[0] = y
    next_sample = 1

    f_now = f(y)
    h = _initial_step(f, y, f_now, config.rel_tol, config.abs_tol, config.t_end)
    err_prev = 1.0
    K = np.empty((7, n))
    steps = 0

    while t < config.t_end:
        if steps > _MAX_STEPS:
            raise IntegrationError("step limit exceeded", last_good_time=t)
        h = min(h, config.t_end - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", last_good_time=t)

        K[0] = f_now
        ok = True
        for s in range(1, 6):
            ys = y + h * (_A[s, :s] @ K[:s])
            try:
                K[s] = f(np.maximum(ys, 0.0))
            except IntegrationError:
                ok = False
                break
        if ok:
            y_new = y + h * (_B @ K[:6])
            try:
                K[6] = f(np.maximum(y_new, 0.0))
            except IntegrationError:
                ok = False
        if not ok or not np.all(np.isfinite(y_new)):
            h *= 0.5
            steps += 1
            continue

        scale = config.abs_tol + config.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean(((h * (_E @ K)) / scale) ** 2))

        if err > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-_PI_ALPHA))
            steps += 1
            continue

        # accepted
        t_new = t + h
        Q = K.T @ _P  # (n, 4) dense-output coefficients

        while next_sample < len(sample_times) and sample_times[next_sample] <= t_new + 1e-12:
            ts = min(sample_times[next_sample], t_new)
            x = (ts - t) / h
            ys = y + h * (Q @ np.array([x, x * x, x ** 3, x ** 4]))
            ys = np.maximum(ys, 0.0)
            ys = np.where(failure_time <= ts, 0.0, ys)
            states[next_sample] = ys
            next_sample += 1

        crossing = (y_new < config.death_threshold) & ~failed
        y_new = np.where(y_new < config.death_threshold, 0.0, y_new)
        for k in np.flatnonzero(crossing):
            events.append(Event("failure", dyn.node_ids[k], float(t_new), 0.0))
            failed[k] = True
            failure_time[k] = t_new
        y_new = np.where(failed, 0.0, y_new)

        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = min(
                _MAX_FACTOR,
                max(_MIN_FACTOR,
                    _SAFETY * err ** (-_PI_ALPHA) * err_prev ** _PI_BETA),
            )
        err_prev = max(err, 1e-10)
        t, y = t_new, y_new
        h *= factor
        f_now = f(y)
        steps += 1

    # the step loop can exit with samples at exactly t_end still pending
    while next_sample < len(sample_times):
        states[next_sample] = y
        next_sample += 1

    failure_events = [e for e in events if e.type == "failure"]
    horizon = min((e.time for e in failure_events), default=config.t_end)
    traj = Trajectory(
        node_ids=list(dyn.node_ids),
        times=sample_times,
        states=states,
        events=events,
        validity_horizon=float(horizon),
    )
    if with_flows:
        traj.flows = [dyn.flows(row) for row in states]
    return traj


@dataclass
class BatchResult:
    name: str
    trajectory: Trajectory | None = None
    error: str | None = None


def run_scenario_batch(scenarios: list[tuple[str, Network]],
                       config: SimConfig = SimConfig(),
                       max_workers: int | None = None) -> list[BatchResult]:
    """Run independent scenarios, possibly concurrently.

    Results keep input order; per-scenario failures are reported in the
    result record instead of aborting the batch.
    """

    def run_one(item: tuple[str, Network]) -> BatchResult:
        name, net = item
        try:
            return BatchResult(name=name, trajectory=simulate(net, config))
        except DistrictError as e:
            return BatchResult(name=name, error=str(e))

    if max_workers == 1 or len(scenarios) <= 1:
        return [run_one(s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(run_one, scenarios))
