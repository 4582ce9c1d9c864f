"""Command-line interface: experiments, scripted scenarios, dumps, verify.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    gen_workload,
    load_workload_file,
    run_experiment,
    scenario_script,
    scenario_split_fixture,
    verify_against_oracle,
    WorkloadSpec,
)
from .keyspace import KeySpace
from .sim import SimConfig, Simulation, parse_config, render_config


def _load_config(path: str) -> SimConfig:
    return parse_config(Path(path).read_text())


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    result = run_experiment(cfg, outdir=args.out, oplog=args.oplog)
    violations = verify_against_oracle(result.sim, result.oracle)
    print(
        f"keys={len(result.oracle)} servers={result.servers} "
        f"splits={result.total_splits} load_factor={result.final_load_factor:.3f}"
    )
    if args.out:
        print(f"artifacts written to {args.out}")
    if violations:
        for v in violations:
            print(f"VIOLATION: {v}", file=sys.stderr)
        return 1
    return 0


def _cmd_scenario_3_2(args) -> int:
    report = scenario_split_fixture()
    print(f"split_string={report.split_string} lower={report.lower} upper={report.upper}")
    return 0 if report.ok() else 1


def _cmd_scenario_4_2(args) -> int:
    report = scenario_script()
    print(f"servers={report.servers} expected={report.expected_servers}")
    if not report.server_count_matches():
        print(
            f"DEVIATION: run ended with {report.servers} servers, "
            f"not {report.expected_servers}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "state.csv").write_text(report.sim.state_dump())
        print(f"state dumped to {out / 'state.csv'}")
    if report.violations:
        for v in report.violations:
            print(f"VIOLATION: {v}", file=sys.stderr)
        return 1
    print("oracle verification passed")
    return 0


def _replay(run_dir: Path):
    cfg = parse_config((run_dir / "config.txt").read_text())
    ks = KeySpace()
    if cfg.workload:
        workload = load_workload_file(cfg.workload)
    else:
        workload = gen_workload(WorkloadSpec.from_config(cfg), ks)
    sample_every = max(1, len(workload) // 100)
    sim = Simulation(cfg, workload, ks, sample_every=sample_every)
    sim.run()
    return sim, workload, ks


def _cmd_dump(args) -> int:
    run_dir = Path(args.run)
    state = run_dir / "state.csv"
    if not state.exists():
        print(f"no state dump in {run_dir}", file=sys.stderr)
        return 2
    sys.stdout.write(state.read_text())
    return 0


def _cmd_verify(args) -> int:
    """Deterministically replay a saved run and verify it end to end."""
    run_dir = Path(args.run)
    if not (run_dir / "config.txt").exists():
        print(f"no config.txt in {run_dir}", file=sys.stderr)
        return 2
    sim, workload, ks = _replay(run_dir)
    saved_state = (run_dir / "state.csv").read_text()
    if sim.state_dump() != saved_state:
        print("VIOLATION: replay produced a different state dump", file=sys.stderr)
        return 1
    saved_stats = (run_dir / "stats.csv").read_text()
    if sim.stats_csv() != saved_stats:
        print("VIOLATION: replay produced different stats", file=sys.stderr)
        return 1
    from .wire import INSERT

    oracle = sorted({ks.encode_key(k) for _, op, k, _ in workload if op == INSERT})
    violations = verify_against_oracle(sim, oracle)
    if violations:
        for v in violations:
            print(f"VIOLATION: {v}", file=sys.stderr)
        return 1
    print("verification passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="triehash",
        description="Distributed trie hashing: deterministic simulator and experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="key=value config file")
    p_run.add_argument("--out", help="directory for stats/state CSV artifacts")
    p_run.add_argument("--oplog", action="store_true", help="also write the client op log")
    p_run.set_defaults(func=_cmd_run)

    p_32 = sub.add_parser(
        "scenario-3-2", help="five-key split fixture: split string and partition"
    )
    p_32.set_defaults(func=_cmd_scenario_3_2)

    p_42 = sub.add_parser(
        "scenario-4-2", help="25-key four-client script: server count and verification"
    )
    p_42.add_argument("--out", help="directory for the state dump")
    p_42.set_defaults(func=_cmd_scenario_4_2)

    p_dump = sub.add_parser("dump", help="print the state dump of a saved run")
    p_dump.add_argument("--run", required=True, help="run directory")
    p_dump.set_defaults(func=_cmd_dump)

    p_verify = sub.add_parser("verify", help="replay a saved run and verify it")
    p_verify.add_argument("--run", required=True, help="run directory")
    p_verify.set_defaults(func=_cmd_verify)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
