"""Scenario-driven command line: ``eonprofile plan|run|sweep-vf``.

A scenario is a YAML document. Every key is optional except ``loads``::

    topology:                 # omit (or "dt") for the bundled 14-node network
      nodes: nodes.csv        # paths are relative to the scenario file
      edges: edges.csv
    partition:
      scheme: sip             # sip | sp
      fs: 360
      bin_sizes: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
      extra_bins: paper       # paper | greedy | [list of extra bins per partition]
    routing: pbr              # pbr | llr
    k: 4
    scheduler:
      method: atm             # atm | dpm | none
      t0: 0.05                # default mean_holding / 20
      margin: 0.0
    traffic:
      mean_holding: 1.0
      requests: 100000
      vf: null                # 1 .. N-1, or null for unconstrained profiles
      warmup: 0
      replay: null            # directory written by ``run --dump-streams``
    loads: [300, 400, 500]
    experiment:
      trials_max: 10
      trials_min: 2
      confidence: 0.90
      rel_halfwidth: 0.10
      seed: 1
      parallel: 1
      backend: null           # compiled | python
    variants:                 # optional; each entry overrides top-level keys
      - {routing: pbr}
      - {routing: llr}
    sweep_vf: [1, 2, 3]
    output: results

Exit status is 0 on success, 1 for an invalid scenario and 2 when the
simulator trips one of its runtime invariants.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .engine import ExperimentConfig, InvariantViolation, LoadResult, Scenario, run_experiment, run_trial, trial_seed
from .partition import PAPER_EXTRA_BINS_360, PlanError
from .topology import Network, TopologyError, deutsche_telekom, load_network
from .traffic import RNG_NAME, dump_stream, load_stream

log = logging.getLogger("eonprofile")

CSV_COLUMNS = ["scenario", "load", "trials", "BP", "BP_halfwidth", "SUR", "RF", "RF_halfwidth", "wall_time"]

_TOP_KEYS = {"topology", "partition", "routing", "k", "scheduler", "traffic", "loads",
             "experiment", "variants", "sweep_vf", "output"}
_SECTION_KEYS = {
    "topology": {"nodes", "edges"},
    "partition": {"scheme", "fs", "bin_sizes", "extra_bins"},
    "scheduler": {"method", "t0", "margin"},
    "traffic": {"mean_holding", "requests", "vf", "warmup", "replay"},
    "experiment": {"trials_max", "trials_min", "confidence", "rel_halfwidth", "seed", "parallel", "backend", "check"},
}


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass
class RunSpec:
    scenarios: list[Scenario]
    loads: tuple[float, ...]
    experiment: dict
    topology: tuple[Path, Path] | None
    output: Path
    replay: Path | None
    sweep_vf: tuple[int, ...]
    resolved: dict = field(repr=False)

    def network(self) -> Network:
        if self.topology is None:
            return deutsche_telekom()
        return load_network(*self.topology)

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def experiment_config(self, scenario: Scenario) -> ExperimentConfig:
        return ExperimentConfig(scenario, self.loads, **self.experiment)


# ----------------------------------------------------------------------------
# scenario parsing

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _check_keys(doc: dict, where: str = "") -> None:
    for key in doc:
        if key not in _TOP_KEYS:
            raise ConfigError(where + str(key), "unknown key")
    for sect, allowed in _SECTION_KEYS.items():
        val = doc.get(sect)
        if val is None or (sect == "topology" and val == "dt"):
            continue
        if not isinstance(val, dict):
            raise ConfigError(where + sect, "expected a mapping")
        for key in val:
            if key not in allowed:
                raise ConfigError(f"{where}{sect}.{key}", "unknown key")


def _int(val, where: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(where, f"expected an integer, got {val!r}")
    if lo is not None and val < lo:
        raise ConfigError(where, f"must be >= {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigError(where, f"must be <= {hi}, got {val}")
    return val


def _num(val, where: str, positive: bool = False) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(where, f"expected a finite number, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(where, f"must be positive, got {val}")
    return float(val)


def _choice(val, where: str, options) -> str:
    val = str(val).lower()
    if val not in options:
        raise ConfigError(where, f"expected one of {sorted(options)}, got {val!r}")
    return val


def _vf(val, where: str, n: int) -> int | None:
    if val is None:
        return None
    return _int(val, where, 1, max(n - 1, 1))


def _scenario(doc: dict, where: str) -> Scenario:
    part = doc.get("partition") or {}
    sched = doc.get("scheduler") or {}
    traffic = doc.get("traffic") or {}

    fs = _int(part.get("fs", 360), where + "partition.fs", 1)
    sizes_raw = part.get("bin_sizes", list(range(1, 11)))
    if not isinstance(sizes_raw, list) or not sizes_raw:
        raise ConfigError(where + "partition.bin_sizes", "expected a non-empty list")
    sizes = tuple(_int(b, f"{where}partition.bin_sizes[{i}]", 1) for i, b in enumerate(sizes_raw))
    if any(a >= b for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(where + "partition.bin_sizes", "must be strictly increasing")
    n = len(sizes)

    extra = part.get("extra_bins", "greedy")
    if extra in (None, "greedy"):
        extra_bins = None
    elif extra == "paper":
        if fs != 360 or sizes != tuple(range(1, 11)):
            raise ConfigError(where + "partition.extra_bins", "'paper' applies only to FS=360 with bin sizes 1..10")
        extra_bins = PAPER_EXTRA_BINS_360
    elif isinstance(extra, list) and len(extra) == n:
        extra_bins = tuple(_int(x, f"{where}partition.extra_bins[{i}]", 0) for i, x in enumerate(extra))
    else:
        raise ConfigError(where + "partition.extra_bins", f"expected 'paper', 'greedy' or a list of {n} integers")

    try:
        sc = Scenario(
            partitioning=_choice(part.get("scheme", "sip"), where + "partition.scheme", {"sip", "sp"}),
            routing=_choice(doc.get("routing", "pbr"), where + "routing", {"pbr", "llr"}),
            spr=_choice(sched.get("method", "atm"), where + "scheduler.method", {"atm", "dpm", "none"}),
            fs=fs,
            bin_sizes=sizes,
            extra_bins=extra_bins,
            k=_int(doc.get("k", 4), where + "k", 1),
            mean_holding=_num(traffic.get("mean_holding", 1.0), where + "traffic.mean_holding", positive=True),
            t0=None if sched.get("t0") is None else _num(sched["t0"], where + "scheduler.t0", positive=True),
            margin=_num(sched.get("margin", 0.0), where + "scheduler.margin"),
            requests=_int(traffic.get("requests", 100_000), where + "traffic.requests", 1),
            vf=_vf(traffic.get("vf"), where + "traffic.vf", n),
            warmup=_int(traffic.get("warmup", 0), where + "traffic.warmup", 0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(where.rstrip(".") or "scenario", str(exc)) from None
    try:
        sc.plan()
    except PlanError as exc:
        raise ConfigError(where + "partition", str(exc)) from None
    return sc


def _experiment(doc: dict) -> dict:
    exp = doc.get("experiment") or {}
    out = {
        "trials_max": _int(exp.get("trials_max", 10), "experiment.trials_max", 1),
        "trials_min": _int(exp.get("trials_min", 2), "experiment.trials_min", 1),
        "confidence": _num(exp.get("confidence", 0.90), "experiment.confidence"),
        "rel_halfwidth": _num(exp.get("rel_halfwidth", 0.10), "experiment.rel_halfwidth"),
        "seed": _int(exp.get("seed", 1), "experiment.seed", 0, 2**64 - 1),
        "parallel": _int(exp.get("parallel", 1), "experiment.parallel", 1),
        "backend": exp.get("backend"),
        "check": bool(exp.get("check", False)),
    }
    if not 0 < out["confidence"] < 1:
        raise ConfigError("experiment.confidence", "must be in (0, 1)")
    if out["rel_halfwidth"] < 0:
        raise ConfigError("experiment.rel_halfwidth", "must be non-negative")
    if out["backend"] is not None:
        out["backend"] = _choice(out["backend"], "experiment.backend", {"compiled", "python"})
    return out


def load_scenario(path: str | Path, seed: int | None = None, parallel: int | None = None,
                  output: str | Path | None = None) -> RunSpec:
    """Parse and fully validate a scenario file. Raises :class:`ConfigError`."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--scenario", f"file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    _check_keys(doc)
    base_dir = path.parent

    if seed is not None:
        doc = _merge(doc, {"experiment": {"seed": seed}})
    experiment = _experiment(doc)
    if parallel is not None:
        experiment["parallel"] = _int(parallel, "--parallel", 1)

    topo = doc.get("topology")
    topology = None
    if topo not in (None, "dt"):
        if set(topo) != {"nodes", "edges"}:
            raise ConfigError("topology", "needs both 'nodes' and 'edges'")
        topology = tuple(base_dir / str(topo[k]) for k in ("nodes", "edges"))
        for key, p in zip(("nodes", "edges"), topology):
            if not p.is_file():
                raise ConfigError(f"topology.{key}", f"file not found: {p}")

    loads_raw = doc.get("loads")
    if not isinstance(loads_raw, list) or not loads_raw:
        raise ConfigError("loads", "expected a non-empty list of erlang values")
    loads = tuple(_num(x, f"loads[{i}]", positive=True) for i, x in enumerate(loads_raw))

    variants = doc.get("variants") or [{}]
    if not isinstance(variants, list):
        raise ConfigError("variants", "expected a list of override mappings")
    scenarios = []
    for i, over in enumerate(variants):
        if not isinstance(over, dict):
            raise ConfigError(f"variants[{i}]", "expected a mapping")
        where = f"variants[{i}]." if len(variants) > 1 or over else ""
        merged = _merge({k: v for k, v in doc.items() if k != "variants"}, over)
        _check_keys(merged, where)
        scenarios.append(_scenario(merged, where))

    n = len(scenarios[0].bin_sizes)
    sweep_raw = doc.get("sweep_vf") or []
    if not isinstance(sweep_raw, list):
        raise ConfigError("sweep_vf", "expected a list")
    sweep = tuple(_vf(v, f"sweep_vf[{i}]", n) for i, v in enumerate(sweep_raw))

    replay = (doc.get("traffic") or {}).get("replay")
    if replay is not None:
        replay = base_dir / str(replay)
        if not replay.is_dir():
            raise ConfigError("traffic.replay", f"directory not found: {replay}")

    out = Path(output) if output is not None else base_dir / str(doc.get("output", "results"))

    resolved = {
        "scenarios": [_scenario_dict(s) for s in scenarios],
        "loads": list(loads),
        "experiment": {k: v for k, v in experiment.items() if k != "parallel"},
        "topology": [_file_digest(p) for p in topology] if topology else "dt",
        "sweep_vf": list(sweep),
        "replay": replay is not None,
    }
    return RunSpec(scenarios, loads, experiment, topology, out, replay, sweep, resolved)


def _scenario_dict(s: Scenario) -> dict:
    d = {k: getattr(s, k) for k in s.__dataclass_fields__}
    d["bin_sizes"] = list(s.bin_sizes)
    d["extra_bins"] = None if s.extra_bins is None else list(s.extra_bins)
    d["t0"] = s.scheduler().t0
    return d


def _file_digest(p: Path) -> str:
    return hashlib.sha256(p.read_bytes()).hexdigest()


# ----------------------------------------------------------------------------
# output

def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _load_label(load: float) -> str:
    return f"{load:g}"


def write_csv(path: Path, spec: RunSpec, rows: list[tuple[dict, LoadResult]], timing: bool) -> None:
    extra = [k for k in rows[0][0]] if rows else []
    buf = io.StringIO()
    buf.write(f"# eonprofile {__version__}\n")
    buf.write(f"# config_sha256 {spec.config_hash()}\n")
    buf.write(f"# seed {spec.experiment['seed']} rng {RNG_NAME} trial_seed SeedSequence([seed, trial])\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(extra + CSV_COLUMNS)
    for prefix, r in rows:
        w.writerow([_fmt(v) for v in prefix.values()] + [
            r.scenario, _load_label(r.load), r.trials, _fmt(r.bp), _fmt(r.bp_halfwidth),
            _fmt(r.sur), _fmt(r.rf), _fmt(r.rf_halfwidth), _fmt(r.wall_time) if timing else "",
        ])
    path.write_text(buf.getvalue())


def write_metadata(path: Path, spec: RunSpec, command: str, rows: list[tuple[dict, LoadResult]]) -> None:
    meta = {
        "command": command,
        "version": version_string(),
        "config_sha256": spec.config_hash(),
        "rng": RNG_NAME,
        "seed": spec.experiment["seed"],
        "trial_seeds": "SeedSequence([seed, trial_index])",
        "config": spec.resolved,
        "runs": [
            {**prefix, "scenario": r.scenario, "load": r.load, "trials": r.trials,
             "seeds": [[spec.experiment["seed"], t] for t in range(r.trials)],
             "wall_time": r.wall_time}
            for prefix, r in rows
        ],
    }
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _stream_file(root: Path, load: float, trial: int) -> Path:
    return root / f"load{_load_label(load)}_trial{trial}.csv"


def _replay_source(root: Path):
    def source(load, trial):
        p = _stream_file(root, load, trial)
        if not p.is_file():
            raise ConfigError("traffic.replay", f"missing recorded stream {p.name}")
        return load_stream(p)
    return source


def _run_grid(spec: RunSpec, net: Network, scenarios, prefix_for, args) -> list[tuple[dict, LoadResult]]:
    streams = _replay_source(spec.replay) if spec.replay else None
    rows = []
    for sc in scenarios:
        log.info("running %s at loads %s", sc.name, ", ".join(map(_load_label, spec.loads)))
        results = run_experiment(spec.experiment_config(sc), net, streams=streams)
        for r in results:
            log.info("  %s load %s: BP %.4g (%d trials, %.1fs)", r.scenario, _load_label(r.load), r.bp, r.trials, r.wall_time)
            rows.append((prefix_for(sc), r))
        if args.dump_streams:
            _dump_streams(spec, net, sc, results, streams)
        if args.verbose:
            _write_trace(spec, net, sc, streams)
    return rows


def _dump_streams(spec, net, sc, results, streams) -> None:
    from .engine import make_stream

    root = spec.output / "streams"
    root.mkdir(parents=True, exist_ok=True)
    same = spec.experiment.get("same_seed", False)
    for r in results:
        for t in range(r.trials):
            idx = 0 if same else t
            stream = streams(r.load, idx) if streams else make_stream(sc, net, r.load, trial_seed(spec.experiment["seed"], idx))
            dump_stream(stream, _stream_file(root, r.load, idx))


def _write_trace(spec, net, sc, streams) -> None:
    """Re-run trial 0 of every load on the Python loop and log each bin move."""
    path = spec.output / f"trace_{sc.name}.log"
    with open(path, "w") as f:
        f.write("time,rid,from_p,from_b,to_p,to_b,reason,bound\n")
        for load in spec.loads:
            trace = []
            stream = streams(load, 0) if streams else None
            run_trial(sc, load, trial_seed(spec.experiment["seed"], 0), net,
                      stream=stream, trace=trace, check=spec.experiment["check"])
            f.write(f"# load {_load_label(load)}\n")
            for mv in trace:
                f.write(f"{mv.time!r},{mv.rid},{mv.src.pnum},{mv.src.bnum},{mv.dst.pnum},{mv.dst.bnum},{mv.reason},{_fmt(mv.bound)}\n")
    log.info("move trace written to %s", path)


# ----------------------------------------------------------------------------
# commands

def cmd_plan(spec: RunSpec, args) -> int:
    seen = set()
    for sc in spec.scenarios:
        plan = sc.plan()
        key = (plan.scheme, plan.total_slots, plan.bin_sizes, plan.bin_counts)
        if key in seen:
            continue
        seen.add(key)
        print(f"[{sc.partitioning.upper()}]")
        print(plan.report())
    return 0


def cmd_run(spec: RunSpec, args) -> int:
    net = spec.network()
    spec.output.mkdir(parents=True, exist_ok=True)
    rows = _run_grid(spec, net, spec.scenarios, lambda sc: {}, args)
    write_csv(spec.output / "results.csv", spec, rows, args.timing)
    write_metadata(spec.output / "metadata.json", spec, "run", rows)
    print(spec.output / "results.csv")
    return 0


def cmd_sweep_vf(spec: RunSpec, args) -> int:
    vfs = spec.sweep_vf
    if args.vf:
        n = len(spec.scenarios[0].bin_sizes)
        try:
            vfs = tuple(_vf(int(v), "--vf", n) for v in args.vf.split(","))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("--vf", f"expected comma-separated integers, got {args.vf!r}") from None
    if not vfs:
        raise ConfigError("sweep_vf", "no VF values given (set sweep_vf or pass --vf)")
    from .engine import with_overrides

    net = spec.network()
    spec.output.mkdir(parents=True, exist_ok=True)
    spec.resolved["sweep_vf"] = list(vfs)
    rows = []
    for vf in vfs:
        variants = [with_overrides(sc, vf=vf) for sc in spec.scenarios]
        rows.extend(_run_grid(spec, net, variants, lambda sc: {"VF": sc.vf}, args))
    write_csv(spec.output / "sweep_vf.csv", spec, rows, args.timing)
    write_metadata(spec.output / "sweep_vf_metadata.json", spec, "sweep-vf", rows)
    print(spec.output / "sweep_vf.csv")
    return 0


COMMANDS = {"plan": cmd_plan, "run": cmd_run, "sweep-vf": cmd_sweep_vf}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eonprofile", description="Profile-service EON simulator.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", required=True, help="YAML scenario file")
    p.add_argument("--out", help="output directory (overrides the scenario's 'output')")
    p.add_argument("--seed", type=int, help="master seed (overrides experiment.seed)")
    p.add_argument("--parallel", type=int, help="worker processes for trials")
    p.add_argument("--verbose", "-v", action="store_true", help="progress on stderr plus a per-scenario move trace")
    p.add_argument("--vf", help="sweep-vf only: comma-separated VF values")
    p.add_argument("--timing", action="store_true", help="fill the wall_time CSV column (makes output non-reproducible)")
    p.add_argument("--dump-streams", action="store_true", help="write every simulated request stream for later replay")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        spec = load_scenario(args.scenario, seed=args.seed, parallel=args.parallel, output=args.out)
        return COMMANDS[args.command](spec, args)
    except (ConfigError, TopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
