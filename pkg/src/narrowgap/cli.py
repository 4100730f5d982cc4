"""Command-line driver: one subcommand per claim, deterministic artifacts.

Subcommands: validate (hypothesis checks only), ansatz (emit leading-term
samples), solve (single boundary-value solve), thm11, remark13, decay,
cor41 (one experiment each), all (every check named in the configuration).

Every run writes to the output directory:
  config_echo.json   the parsed configuration with defaults filled
  <check>_<stat>.csv sweep tables (full float precision)
  <check>_<stat>.dat plot-ready two-column data (clean points only)
  fits.json          fit summaries as structured records
  report.txt         human-readable report with a digest manifest
  runlog.jsonl       solver/check events with wall-clock timings

report.txt and the CSV/JSON artifacts are byte-reproducible for a given
configuration and package version; runlog.jsonl carries the timings and is
the only non-deterministic file (the manifest lists it without a digest).

Exit status: 0 when every verdict is PASS or SKIPPED, 1 otherwise, 2 for
configuration errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .ansatz import build_ansatz
from .coefficients import check_ann, check_pointwise_ellipticity
from .config import ConfigError, RunConfig, parse_config
from .discretize import grid_for, solve_bvp
from .experiments import CHECKS, Verdict
from .geometry import validate_profiles

COMMANDS = ("validate", "ansatz", "solve", "thm11", "remark13", "decay",
            "cor41", "all")


@dataclass
class RunReport:
    version: str
    command: str
    config: dict
    verdicts: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(v.passed for v in self.verdicts)

    def render(self):
        """Deterministic text report; timings live in runlog.jsonl only."""
        lines = [
            "narrowgap run report",
            f"version: {self.version}",
            f"command: {self.command}",
            "",
            "hypothesis validation:",
        ]
        lines += [f"  {s}" for s in self.validation] or ["  (none)"]
        lines.append("")
        lines.append("verdicts:")
        if self.verdicts:
            for v in self.verdicts:
                lines += ["  " + ln for ln in v.summary().splitlines()]
        else:
            lines.append("  (none)")
        lines.append("")
        lines.append("file manifest (sha256):")
        for name in sorted(self.manifest):
            lines.append(f"  {name}  {self.manifest[name]}")
        lines.append("")
        status = 0 if self.all_passed else 1
        lines.append(f"exit status: {status}")
        return "\n".join(lines) + "\n"


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Emitter:
    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.manifest = {}
        outdir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.outdir / name).write_bytes(data)
        self.manifest[name] = _digest(data)


def _float_csv(rows, header):
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _hypothesis_summary(cfg: RunConfig, seed: int):
    """Profile and tensor hypothesis checks at the widest configured gap."""
    eps = (cfg.experiment.eps_list or (1e-1,))[0]
    out = []
    pair = cfg.geometry.build_pair()
    rep = validate_profiles(pair, dim=cfg.geometry.n - 1)
    out.append(f"profiles ((A1)-(A3)): {'pass' if rep.passed else 'FAIL'}")
    out += ["  " + ln.strip() for ln in str(rep).splitlines()]
    region = cfg.geometry.build_region(eps)
    tensor, _ = cfg.build_tensor()
    ell = check_pointwise_ellipticity(tensor, region=region, rng=seed)
    out.append(str(ell))
    ann = check_ann(tensor, region=region)
    out.append(str(ann))
    all_ok = rep.passed and ell.passed and ann.passed
    return out, all_ok


def _emit_verdict_files(em: _Emitter, verdict: Verdict):
    for stat, sr in sorted(verdict.sweeps.items()):
        base = f"{verdict.name}_{stat}"
        em.write(base + ".csv", sr.to_csv())
        rows = [f"{p.eps!r} {p.value!r}" for p in sr.clean()]
        em.write(base + ".dat", "\n".join(rows) + "\n")


def _fits_record(verdicts):
    rec = {}
    for v in verdicts:
        rec[v.name] = {
            name: {"model": f.model, "slope": f.slope, "intercept": f.intercept,
                   "r_squared": f.r_squared, "npoints": f.npoints,
                   "decay_constant": f.decay_constant}
            for name, f in sorted(v.fits.items())}
        rec[v.name]["status"] = v.status
        rec[v.name]["details"] = _jsonable(v.details)
    return rec


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _single_eps(cfg: RunConfig) -> float:
    """Gap width for single-solve commands: geometry.epsilon, else the sweep head."""
    if cfg.geometry.epsilon is not None:
        return cfg.geometry.epsilon
    return (cfg.experiment.eps_list or (1e-2,))[0]


def _run_ansatz_emit(cfg: RunConfig, em: _Emitter):
    """Sample ubar and its gradient on the solver grid and write them out."""
    eps = _single_eps(cfg)
    region = cfg.geometry.build_region(eps)
    tensor, lame = cfg.build_tensor()
    traces = cfg.build_traces()
    af = build_ansatz(tensor, region, traces, cfg.solver.ansatz_mode, lame=lame)
    grid = grid_for(region, *cfg.solver.scaled_nodes())
    XP, T = grid.node_coords()
    x = region.from_box(XP, T)
    u = af.value(x)
    g = af.gradient(x)
    N, n = u.shape[-1], g.shape[-1]
    cols = (["xprime%d" % a for a in range(region.d)] + ["t", "xn"]
            + ["u%d" % i for i in range(N)]
            + ["du%d_dx%d" % (i, a) for i in range(N) for a in range(n)])
    flat = np.concatenate([XP.reshape(-1, region.d), T.reshape(-1, 1),
                           x[..., -1].reshape(-1, 1), u.reshape(-1, N),
                           g.reshape(-1, N * n)], axis=-1)
    em.write("ansatz_field.csv", _float_csv(flat, ",".join(cols)))
    return []


def _run_single_solve(cfg: RunConfig, em: _Emitter, log):
    eps = _single_eps(cfg)
    region = cfg.geometry.build_region(eps)
    tensor, lame = cfg.build_tensor()
    traces = cfg.build_traces()
    af = build_ansatz(tensor, region, traces, cfg.solver.ansatz_mode, lame=lame)
    grid = grid_for(region, *cfg.solver.scaled_nodes())
    df, rep = solve_bvp(tensor, region, traces, grid,
                        closure=cfg.solver.closure, ansatz=af,
                        lateral_value=cfg.solver.lateral_value,
                        tol=cfg.solver.tol, direct_limit=cfg.solver.direct_limit)
    log({"event": "solve", "eps": eps, **rep.record()})
    XP, T = grid.node_coords()
    u = np.moveaxis(df.values, 0, -1)
    flat = np.concatenate([XP.reshape(-1, region.d), T.reshape(-1, 1),
                           u.reshape(-1, df.N)], axis=-1)
    cols = (["xprime%d" % a for a in range(region.d)] + ["t"]
            + ["u%d" % i for i in range(df.N)])
    em.write("solution.csv", _float_csv(flat, ",".join(cols)))
    note = (f"single solve at eps {eps:g}: method {rep.method}, "
            f"{rep.unknowns} unknowns, residual {rep.residual:.3e}")
    return [Verdict("solve", "PASS", {"note": note})]


def run(cfg: RunConfig, command: str = "all", outdir=None) -> RunReport:
    """Execute a command against a parsed configuration; write artifacts."""
    outdir = Path(outdir if outdir is not None else cfg.output.dir)
    em = _Emitter(outdir)
    events = []

    def log(record):
        events.append(record)

    report = RunReport(__version__, command, cfg.to_dict())
    t_start = time.perf_counter()

    validation, hyp_ok = _hypothesis_summary(cfg, cfg.experiment.seed)
    report.validation = validation

    if command == "validate":
        if not hyp_ok:
            report.verdicts.append(Verdict("validate", "FAIL",
                                           {"note": "hypothesis checks failed"}))
        else:
            report.verdicts.append(Verdict("validate", "PASS",
                                           {"note": "profiles and tensor pass "
                                                    "their declared hypotheses"}))
    elif command == "ansatz":
        _run_ansatz_emit(cfg, em)
        report.verdicts.append(Verdict("ansatz", "PASS",
                                       {"note": "field samples written to "
                                                "ansatz_field.csv"}))
    elif command == "solve":
        try:
            report.verdicts.extend(_run_single_solve(cfg, em, log))
        except Exception as exc:
            report.verdicts.append(
                Verdict("solve", "ABORTED",
                        {"error": f"{type(exc).__name__}: {exc}"}))
    else:
        names = cfg.experiment.checks if command == "all" else (command,)
        for name in names:
            try:
                verdict = CHECKS[name](cfg)
            except Exception as exc:   # stage failure: record, keep going
                verdict = Verdict(name, "ABORTED",
                                  {"error": f"{type(exc).__name__}: {exc}"})
            report.verdicts.append(verdict)
            _emit_verdict_files(em, verdict)
            for ev in verdict.solver_events:
                log({"event": "solve", "check": name, **ev})
            log({"event": "check", "name": name, "status": verdict.status,
                 "elapsed": verdict.elapsed})
            report.timings[name] = verdict.elapsed

    em.write("config_echo.json", cfg.to_json() + "\n")
    em.write("fits.json", json.dumps(_fits_record(report.verdicts), indent=2,
                                     sort_keys=True) + "\n")

    report.timings["total"] = time.perf_counter() - t_start
    report.manifest = dict(em.manifest)
    report.manifest["runlog.jsonl"] = "(timing log, excluded from digests)"
    em.write("report.txt", report.render())
    report.manifest["report.txt"] = em.manifest["report.txt"]

    log({"event": "total", "elapsed": report.timings["total"]})
    runlog = "\n".join(json.dumps(_jsonable(e), sort_keys=True) for e in events)
    (outdir / "runlog.jsonl").write_text(runlog + "\n", encoding="utf-8")
    return report


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.threads is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, threads=args.threads))
    if args.seed is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, seed=args.seed))
    if args.grid_scale is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, grid_scale=args.grid_scale))
    if args.out is not None:
        from .config import OutputConfig
        cfg = replace(cfg, output=OutputConfig(dir=args.out))
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="narrowgap",
        description="Numerical experiments for gradient asymptotics of "
                    "elliptic systems in narrow regions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", default=None, metavar="DIR")
        p.add_argument("--threads", type=int, default=None, metavar="K")
        p.add_argument("--seed", type=int, default=None, metavar="S")
        p.add_argument("--grid-scale", type=float, default=None, metavar="F",
                       dest="grid_scale")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return 2

    report = run(cfg, args.command)
    outdir = Path(cfg.output.dir)
    print(report.render(), end="")
    print(f"artifacts written to {outdir}")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
