"""Command-line entry point: ``topoctl {run,refine,check,tc,bench}``."""

from __future__ import annotations

import argparse
import copy
import json
import os
import random
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, SimConfig, as_dict, env_overrides, load_config, set_key
from .ktc import LinkOrder, apply_states, batch_ktc, incremental_ktc, oracle_ktc
from .metrics import dumps_summary, micro_boundedness_suite, render_boundedness, summarize, to_csv
from .patterns import (
    Connectivity,
    builtin_constraints,
    check_strong_consistency,
    check_weak_consistency,
    connectivity,
)
from .simulator import ConsistencyViolation, run_simulation
from .topology import FormatError, dumps, loads

EXIT_OK, EXIT_CONFIG, EXIT_INCONSISTENT = 0, 1, 2


class UsageError(Exception):
    """Bad input other than a configuration file problem; exits with code 1."""


def _fail(code: int, msg: str) -> int:
    print(f"E{code}: {msg}", file=sys.stderr)
    return code


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def _packaged(kind: str, name: str, suffix: str) -> Optional[str]:
    base = resources.files("topoctl") / kind
    for candidate in (name, name + suffix):
        item = base / candidate
        if item.is_file():
            return str(item)
    return None


def resolve_config(name: str) -> str:
    if os.path.isfile(name):
        return name
    found = _packaged("configs", name, ".cfg")
    if found is None:
        raise ConfigError(f"no configuration file or shipped configuration named {name!r}")
    return found


def load_fixture(name: str):
    path = name if os.path.isfile(name) else _packaged("fixtures", name, ".topo")
    if path is None:
        raise UsageError(f"no topology file or shipped fixture named {name!r}")
    with open(path, encoding="utf-8") as fh:
        try:
            return loads(fh.read())
        except FormatError as exc:
            raise UsageError(f"{path}: {exc}") from None


def parse_seed_range(text: str) -> list[int]:
    """``"a..b"`` (inclusive) or a single integer."""
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise ConfigError(f"bad seed range {text!r}, expected a..b") from None
    if b < a:
        raise ConfigError(f"empty seed range {text!r}")
    return list(range(a, b + 1))


# -- run -------------------------------------------------------------------


def build_config(args) -> SimConfig:
    cfg = SimConfig()
    if args.config:
        cfg = load_config(resolve_config(args.config), cfg)
    env_overrides(cfg)
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        set_key(cfg, key.strip(), value.strip())
    for flag, key in (("k", "k"), ("mode", "mode"), ("link_order", "link_order"),
                      ("duration", "sim_duration")):
        value = getattr(args, flag, None)
        if value is not None:
            set_key(cfg, key, value)
    if args.check is not None:
        cfg.check = args.check
    if args.no_timing:
        cfg.record_timing = False
    return cfg.validate()


def _simulate(cfg: SimConfig) -> list:
    return list(run_simulation(cfg))


def cmd_run(args) -> int:
    cfg = build_config(args)
    seeds = parse_seed_range(args.seed_range) if args.seed_range else [cfg.seed]
    configs = []
    for s in seeds:
        c = copy.deepcopy(cfg)
        c.seed = s
        configs.append(c)
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            runs = list(pool.map(_simulate, configs))
    else:
        runs = [_simulate(c) for c in configs]
    _emit(to_csv([r for rows in runs for r in rows]), args.out)
    summary = summarize(runs, as_dict(cfg) | {"seeds": seeds})
    if args.summary:
        write_atomic(args.summary, dumps_summary(summary))
    if cfg.check and (summary["weak_violations"] or summary["strong_violations"]):
        return _fail(EXIT_INCONSISTENT, f"{summary['weak_violations']} weak and "
                                        f"{summary['strong_violations']} strong consistency violations")
    return EXIT_OK


# -- refine ------------------------------------------------------------------


def cmd_refine(args) -> int:
    from .refinement import TC_PAIRS, refine
    from .rules import base_rules

    rules = base_rules(args.k)
    constraints = builtin_constraints(args.k)
    if args.rule or args.constraint:
        rule_names = [args.rule] if args.rule else sorted(rules)
        constraint_names = [args.constraint] if args.constraint else ["inactive-link", "active-link"]
        pairs = [(r, c) for r in rule_names for c in constraint_names]
    else:
        pairs = list(TC_PAIRS)
    out = []
    for r, c in pairs:
        if r not in rules:
            raise UsageError(f"unknown rule {r!r}; choose from {', '.join(sorted(rules))}")
        if c not in constraints:
            raise UsageError(f"unknown constraint {c!r}; choose from {', '.join(sorted(constraints))}")
        report = refine(rules[r], constraints[c], bound=args.bound, k=args.k)
        out.append(report.render())
    _emit("\n".join(out) + "\n", args.out)
    return EXIT_OK


# -- check -------------------------------------------------------------------


def cmd_check(args) -> int:
    t = load_fixture(args.fixture)
    report = (check_strong_consistency if args.level == "strong" else check_weak_consistency)(t, args.k)
    lines = [report.render()]
    for level in Connectivity:
        lines.append(f"connectivity {level.value}: {'yes' if connectivity(t, level) else 'no'}")
    _emit("\n".join(lines) + "\n", args.out)
    if not report.ok:
        return _fail(EXIT_INCONSISTENT, f"topology is not {args.level}ly consistent")
    return EXIT_OK


# -- tc ----------------------------------------------------------------------


def cmd_tc(args) -> int:
    t = load_fixture(args.fixture)
    rng = random.Random(args.seed)
    if args.mode == "oracle":
        apply_states(t, oracle_ktc(t, args.k))
        lsm, extra = len(t.journal), ""
    else:
        run = incremental_ktc if args.mode == "incremental" else batch_ktc
        report = run(t, args.k, args.link_order, rng, check=args.check, record=True)
        lsm = report.lsm_count
        extra = f" iterations={report.iterations} ordered={report.ordering_violation is None}"
    _emit(dumps(t), args.out)
    print(f"# mode={args.mode} k={args.k} lsm={lsm}{extra}", file=sys.stderr)
    if args.check and not check_strong_consistency(t, args.k).ok:
        return _fail(EXIT_INCONSISTENT, "result is not strongly consistent")
    return EXIT_OK


# -- bench -------------------------------------------------------------------


def cmd_bench(args) -> int:
    sizes = [int(x) for x in args.sizes.split(",")]
    records = micro_boundedness_suite(sizes, args.k)
    if args.json:
        text = json.dumps([r.as_dict() for r in records], indent=2, sort_keys=True) + "\n"
    else:
        text = render_boundedness(records)
    _emit(text, args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _tri_state(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--check-consistency", dest="check", action="store_true", default=None,
                   help="assert weak and strong consistency around every TC run (default)")
    g.add_argument("--no-check", dest="check", action="store_false",
                   help="skip consistency checks (performance measurements)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topoctl", description="kTC topology control engine and WSN simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a configuration and write per-TC-run metrics as CSV")
    run.add_argument("--config", help="key = value file or shipped configuration name (e.g. n100w750)")
    run.add_argument("--seed-range", help="inclusive seed range a..b, or one seed")
    run.add_argument("--mode", choices=("incremental", "batch", "both"))
    run.add_argument("--k", type=float)
    run.add_argument("--link-order", choices=[o.value for o in LinkOrder])
    run.add_argument("--duration", type=float, help="simulated seconds (overrides sim_duration)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any configuration key, e.g. mobility.alpha=0.5 (repeatable)")
    run.add_argument("--no-timing", action="store_true",
                     help="write zeros in the wall-time columns so repeated runs are byte-identical")
    run.add_argument("--jobs", type=int, default=1, help="simulate seeds in parallel processes")
    run.add_argument("--out", help="CSV output file (default: standard output)")
    run.add_argument("--summary", help="JSON summary output file")
    _tri_state(run)
    run.set_defaults(func=cmd_run)

    ref = sub.add_parser("refine", help="derive application conditions for rule/constraint pairs")
    ref.add_argument("--rule", help="rule name; default: the three TC rules")
    ref.add_argument("--constraint", help="inactive-link or active-link")
    ref.add_argument("--k", type=float, default=2.0)
    ref.add_argument("--bound", type=int, default=4, help="node bound of the counterexample search")
    ref.add_argument("--out")
    ref.set_defaults(func=cmd_refine)

    chk = sub.add_parser("check", help="check consistency and connectivity of a topology file")
    chk.add_argument("--fixture", required=True, help="topology file or shipped fixture name")
    chk.add_argument("--k", type=float, default=1.41)
    chk.add_argument("--level", choices=("weak", "strong"), default="strong")
    chk.add_argument("--out")
    chk.set_defaults(func=cmd_check)

    tc = sub.add_parser("tc", help="run kTC on a topology file and dump the result")
    tc.add_argument("--fixture", required=True, help="topology file or shipped fixture name")
    tc.add_argument("--k", type=float, default=1.41)
    tc.add_argument("--mode", choices=("incremental", "batch", "oracle"), default="incremental")
    tc.add_argument("--link-order", choices=[o.value for o in LinkOrder], default="weight")
    tc.add_argument("--seed", type=int, default=0, help="seed for --link-order random")
    tc.add_argument("--out")
    tc.set_defaults(func=cmd_tc, check=True)
    g = tc.add_mutually_exclusive_group()
    g.add_argument("--check-consistency", dest="check", action="store_true")
    g.add_argument("--no-check", dest="check", action="store_false")

    bench = sub.add_parser("bench", help="single-event boundedness micro-benchmarks")
    bench.add_argument("--sizes", default="1,2,4,8,16", help="comma-separated gadget sizes")
    bench.add_argument("--k", type=float, default=1.41)
    bench.add_argument("--json", action="store_true")
    bench.add_argument("--out")
    bench.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, OSError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except ConsistencyViolation as exc:
        return _fail(EXIT_INCONSISTENT, str(exc))


if __name__ == "__main__":
    sys.exit(main())
