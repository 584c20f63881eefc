"""Command-line entry point.

Subcommands: validate, calibrate, simulate, analyze, batch.
Exit codes: 0 success, 1 domain/validation error, 2 input/parse error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from districtdyn import __version__
from districtdyn.analyze import analyze as analyze_traj
from districtdyn.analyze import narrative
from districtdyn.calibrate import calibrate_network, report_csv
from districtdyn.errors import (
    CalibrationError,
    DistrictError,
    InputFormatError,
    IntegrationError,
)
from districtdyn.integrate import (
    SimConfig,
    run_scenario_batch,
    simulate,
    trajectory_from_csv,
)
from districtdyn.netmodel import (
    MarketSpec,
    consistency_warnings,
    load_network,
    network_to_dict,
    validate_network,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _manifest(input_path: Path, config: SimConfig | None, note: str | None = None) -> str:
    doc = {
        "input": str(input_path),
        "sha256": hashlib.sha256(input_path.read_bytes()).hexdigest(),
        "tool": "districtdyn",
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if config is not None:
        doc["config"] = {
            "t_end": config.t_end,
            "sample_dt": config.sample_dt,
            "rel_tol": config.rel_tol,
            "abs_tol": config.abs_tol,
            "death_threshold": config.death_threshold,
        }
    if note:
        doc["note"] = note
    return json.dumps(doc, indent=2) + "\n"


def _load_calibrated(path: Path):
    """Load a network and derive params for any node still carrying financials."""
    net = load_network(path)
    net, _ = calibrate_network(net)
    return net


def cmd_validate(args) -> int:
    try:
        net = load_network(args.network)
    except InputFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except DistrictError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    issues = validate_network(net)
    for w in consistency_warnings(net):
        print(f"warning: {w}", file=sys.stderr)
    if issues:
        for i in issues:
            print(f"invalid: {i}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"{args.network}: OK ({len(net.nodes)} nodes, {len(net.edges)} edges, "
          f"{len(net.markets)} markets)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        net = load_network(args.network)
    except InputFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except DistrictError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        calibrated, report = calibrate_network(net)
    except CalibrationError as e:
        print(f"calibration error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    out = Path(args.out) if args.out else Path(args.network).with_suffix(".calibrated.json")
    _atomic_write(out, json.dumps(network_to_dict(calibrated), indent=2) + "\n")
    _atomic_write(out.with_suffix(".report.csv"), report_csv(report))
    print(f"wrote {out} ({len(report)} rows derived)")
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    return SimConfig(
        t_end=args.t_end,
        sample_dt=args.sample_dt,
        rel_tol=args.rel_tol,
        abs_tol=args.abs_tol,
        death_threshold=args.death_threshold,
    )


def cmd_simulate(args) -> int:
    try:
        config = _sim_config(args)
    except DistrictError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    path = Path(args.network)
    try:
        net = _load_calibrated(path)
    except InputFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except DistrictError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    out = Path(args.out)
    try:
        traj = simulate(net, config)
    except IntegrationError as e:
        _atomic_write(out / "manifest.json",
                      _manifest(path, config, note=f"integration failed: {e} "
                                f"(last good time {e.last_good_time})"))
        print(f"integration failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    _atomic_write(out / "trajectory.csv", traj.to_csv())
    _atomic_write(out / "events.csv", traj.events_csv())
    _atomic_write(out / "manifest.json", _manifest(path, config))
    print(f"wrote {out}/trajectory.csv ({len(traj.times)} samples, "
          f"{len(traj.events)} events)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    traj_dir = Path(args.trajectory_dir)
    csv_path = traj_dir / "trajectory.csv"
    if not csv_path.exists():
        print(f"error: {csv_path} not found", file=sys.stderr)
        return EXIT_INPUT
    try:
        traj = trajectory_from_csv(csv_path.read_text())
    except (DistrictError, ValueError) as e:
        print(f"error: corrupt trajectory CSV: {e}", file=sys.stderr)
        return EXIT_INPUT
    events_path = traj_dir / "events.csv"
    if events_path.exists():
        import csv as _csv
        with open(events_path) as fh:
            for row in _csv.DictReader(fh):
                if row.get("type") == "failure":
                    from districtdyn.integrate import Event
                    traj.events.append(Event("failure", row["node"],
                                             float(row["time"]), float(row["value"])))
        failure_times = [e.time for e in traj.events if e.type == "failure"]
        if failure_times:
            traj.validity_horizon = min(failure_times)
    report = analyze_traj(traj)
    _atomic_write(traj_dir / "report.json", json.dumps(report.to_dict(), indent=2) + "\n")
    text = narrative(report)
    _atomic_write(traj_dir / "narrative.txt", text)
    print(text, end="")
    return EXIT_OK


def _apply_scenario(net, spec: dict):
    u0_scale = float(spec.get("u0_scale", 1.0))
    cap_scale = float(spec.get("cap_scale", 1.0))
    overrides = spec.get("param_overrides", {})
    nodes = []
    for n in net.nodes:
        p = n.params
        changes = dict(overrides.get(n.id, {}))
        if u0_scale != 1.0:
            changes.setdefault("u0", p.u0 * u0_scale)
        if changes:
            p = replace(p, **changes)
            n = replace(n, params=p)
        nodes.append(n)
    markets = tuple(
        m if m.cap is None else MarketSpec(id=m.id, cap=m.cap * cap_scale)
        for m in net.markets
    )
    return replace(net, nodes=tuple(nodes), markets=markets)


def cmd_batch(args) -> int:
    try:
        config = _sim_config(args)
    except DistrictError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    spec_path = Path(args.scenarios)
    try:
        spec = json.loads(spec_path.read_text())
        base_path = (spec_path.parent / spec["base"]).resolve()
        scenario_specs = spec["scenarios"]
    except (OSError, json.JSONDecodeError, KeyError) as e:
        print(f"error: bad batch spec: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        base = _load_calibrated(base_path)
    except InputFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except DistrictError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_DOMAIN

    scenarios = []
    for i, s in enumerate(scenario_specs):
        name = s.get("name", f"scenario-{i}")
        try:
            scenarios.append((name, _apply_scenario(base, s)))
        except (DistrictError, TypeError, ValueError) as e:
            scenarios.append((name, None))
            print(f"{name}: invalid scenario: {e}", file=sys.stderr)

    valid = [(n, net) for n, net in scenarios if net is not None]
    results = {r.name: r for r in run_scenario_batch(valid, config)}
    out = Path(args.out)
    n_failed = 0
    for name, net in scenarios:
        r = results.get(name)
        if net is None or r is None or r.error is not None:
            n_failed += 1
            err = r.error if r is not None else "invalid scenario"
            _atomic_write(out / name / "error.txt", f"{err}\n")
            continue
        _atomic_write(out / name / "trajectory.csv", r.trajectory.to_csv())
        _atomic_write(out / name / "events.csv", r.trajectory.events_csv())
        _atomic_write(out / name / "manifest.json", _manifest(base_path, config))
    print(f"batch: {len(scenarios) - n_failed} ok, {n_failed} failed")
    return EXIT_OK if n_failed == 0 else EXIT_DOMAIN


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-end", type=float, default=100.0, dest="t_end")
    p.add_argument("--sample-dt", type=float, default=0.1, dest="sample_dt")
    p.add_argument("--rel-tol", type=float, default=1e-6, dest="rel_tol")
    p.add_argument("--abs-tol", type=float, default=1e-9, dest="abs_tol")
    p.add_argument("--death-threshold", type=float, default=1e-6, dest="death_threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="districtdyn",
        description="Coupled wealth dynamics of firms in an industrial district",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a network file")
    p.add_argument("network")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("calibrate", help="derive params from financials")
    p.add_argument("network")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="integrate the ODE system")
    p.add_argument("network")
    p.add_argument("--out", default="out")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="post-process a trajectory directory")
    p.add_argument("trajectory_dir")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("batch", help="run a batch of scenarios")
    p.add_argument("scenarios", help="batch spec JSON")
    p.add_argument("--out", default="batch-out")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
