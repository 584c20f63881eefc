"""Post-processing of trajectories: peaks, dominance rankings, narrative.

All detection runs on the sample grid (never on the continuous
interpolant) so results are reproducible at a given sample_dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from districtdyn.integrate import Trajectory

# strict local maxima below this fraction of the series max are treated as
# numerical ripple and ignored
DEFAULT_PROMINENCE = 0.01


@dataclass(frozen=True)
class Peak:
    node: str
    time: float
    value: float


@dataclass(frozen=True)
class Overtake:
    time: float       # crossing time, linearly interpolated between samples
    winner: str       # node that moves ahead
    loser: str


@dataclass(frozen=True)
class RankedInterval:
    t_start: float
    t_end: float
    ranking: tuple[str, ...]  # ids, largest utility first, ties by id


@dataclass
class AnalysisReport:
    peaks: list[Peak] = field(default_factory=list)
    failures: list[tuple[str, float]] = field(default_factory=list)
    timeline: list[RankedInterval] = field(default_factory=list)
    overtakes: list[Overtake] = field(default_factory=list)
    validity_horizon: float = 0.0

    def to_dict(self) -> dict:
        return {
            "validity_horizon": self.validity_horizon,
            "peaks": [{"node": p.node, "time": p.time, "value": p.value}
                      for p in self.peaks],
            "failures": [{"node": n, "time": t} for n, t in self.failures],
            "overtakes": [{"time": o.time, "winner": o.winner, "loser": o.loser}
                          for o in self.overtakes],
            "timeline": [{"t_start": iv.t_start, "t_end": iv.t_end,
                          "ranking": list(iv.ranking)} for iv in self.timeline],
        }


def find_peaks(traj: Trajectory, prominence: float = DEFAULT_PROMINENCE) -> list[Peak]:
    """First interior strict local maximum per node, if any.

    A peak must beat both endpoints of the series and exceed
    ``prominence`` times the series maximum; monotone or constant series
    report none.
    """
    peaks = []
    for j, nid in enumerate(traj.node_ids):
        u = traj.states[:, j]
        top = float(np.max(u))
        if top <= 0:
            continue
        for m in range(1, len(u) - 1):
            if (u[m] > u[m - 1] and u[m] > u[m + 1]
                    and u[m] > u[0] and u[m] > u[-1]
                    and u[m] >= prominence * top):
                peaks.append(Peak(node=nid, time=float(traj.times[m]), value=float(u[m])))
                break
    return peaks


def _rank(u: np.ndarray, node_ids: list[str]) -> tuple[str, ...]:
    order = sorted(range(len(node_ids)), key=lambda k: (-u[k], node_ids[k]))
    return tuple(node_ids[k] for k in order)


def dominance_timeline(traj: Trajectory) -> tuple[list[RankedInterval], list[Overtake]]:
    """Ranked intervals over the sample grid plus pairwise overtaking events.

    An overtake is recorded at the first sample where a pair's order flips;
    the crossing time is refined by linear interpolation of the utility
    difference between the two samples.
    """
    times, states, ids = traj.times, traj.states, traj.node_ids
    intervals: list[RankedInterval] = []
    overtakes: list[Overtake] = []
    prev_rank = _rank(states[0], ids)
    start = float(times[0])
    for m in range(1, len(times)):
        rank = _rank(states[m], ids)
        if rank != prev_rank:
            intervals.append(RankedInterval(start, float(times[m - 1]), prev_rank))
            start = float(times[m - 1])
            pos_prev = {nid: k for k, nid in enumerate(prev_rank)}
            pos_now = {nid: k for k, nid in enumerate(rank)}
            for i in range(len(ids)):
                for j in range(i + 1, len(ids)):
                    a, b = ids[i], ids[j]
                    before = pos_prev[a] < pos_prev[b]
                    after = pos_now[a] < pos_now[b]
                    if before == after:
                        continue
                    winner, loser = (a, b) if after else (b, a)
                    ia, ib = ids.index(winner), ids.index(loser)
                    d0 = states[m - 1, ia] - states[m - 1, ib]
                    d1 = states[m, ia] - states[m, ib]
                    if d1 == d0:
                        tc = float(times[m])
                    else:
                        frac = float(np.clip(-d0 / (d1 - d0), 0.0, 1.0))
                        tc = float(times[m - 1] + frac * (times[m] - times[m - 1]))
                    overtakes.append(Overtake(time=tc, winner=winner, loser=loser))
            prev_rank = rank
    intervals.append(RankedInterval(start, float(times[-1]), prev_rank))
    overtakes.sort(key=lambda o: (o.time, o.winner, o.loser))
    return intervals, overtakes


def analyze(traj: Trajectory, prominence: float = DEFAULT_PROMINENCE) -> AnalysisReport:
    intervals, overtakes = (
        dominance_timeline(traj) if len(traj.node_ids) >= 2
        else ([RankedInterval(float(traj.times[0]), float(traj.times[-1]),
                              tuple(traj.node_ids))], [])
    )
    horizon = traj.validity_horizon
    return AnalysisReport(
        peaks=[p for p in find_peaks(traj, prominence) if p.time <= horizon],
        failures=[(e.node, e.time) for e in traj.events if e.type == "failure"],
        timeline=[iv for iv in intervals if iv.t_start < horizon] or intervals[:1],
        overtakes=[o for o in overtakes if o.time <= horizon],
        validity_horizon=horizon,
    )


def narrative(report: AnalysisReport) -> str:
    """Deterministic, time-ordered textual findings."""
    items: list[tuple[float, str]] = []
    for p in report.peaks:
        items.append((p.time, f"t={p.time:.1f}: {p.node} peaks at {p.value:.1f} and declines"))
    for o in report.overtakes:
        items.append((o.time, f"t={o.time:.1f}: {o.winner} overtakes {o.loser}"))
    for node, t in report.failures:
        items.append((t, f"t={t:.1f}: {node} fails; model output beyond this "
                         f"point should not be trusted"))
    items.sort(key=lambda it: (it[0], it[1]))
    if not items:
        return "no transitions detected before horizon\n"
    lines = [text for _, text in items]
    lines.append(f"validity horizon: t={report.validity_horizon:.1f}")
    return "\n".join(lines) + "\n"
