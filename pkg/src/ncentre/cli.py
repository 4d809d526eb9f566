"""Command line driver.

Commands: simulate, scatter, verify-integrals, entropy, plotdata.  Every
output file is accompanied by ``<file>.manifest.json`` holding the config
hash, command, parameters, seed, tool version and wall time.  Outputs are
deterministic given config and seed; only the manifest wall time varies.

Exit codes: 0 pass, 1 check failure, 2 insufficient determinacy,
64 usage error, 65 data format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .entropy import BeamFamily, census_csv, word_census
from .integrator import IntegratorSettings, StopCondition, crossing_time, propagate
from .model import ConfigError, GevreyParams, PhaseState, config_from_dict, hamiltonian
from .scattering import (
    beam_direction,
    beam_state,
    record_row,
    scattering_map_csv,
    scattering_record,
)
from .verify import integral_checks, random_beams

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_UNDETERMINED = 2
EXIT_USAGE = 64
EXIT_DATA = 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _vector(text: str) -> list:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _span(text: str) -> np.ndarray:
    """'a:b:n' -> n evenly spaced values; a single number -> [a]."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) == 3:
            return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 'start:stop:count' or a number, got {text!r}")


def _load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw)


def _settings(args, config, energy) -> IntegratorSettings:
    kw = {}
    if args.budget_time is not None:
        kw["max_time"] = args.budget_time * crossing_time(config, energy)
    if args.budget_steps is not None:
        kw["max_steps"] = args.budget_steps
    return IntegratorSettings.for_config(config, energy, **kw)


def _manifest(path: Path, args, config, started: float, extra=None) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    man = {
        "config_hash": config.digest() if config is not None else None,
        "command": args.command,
        "parameters": params,
        "seeds": [args.seed],
        "tool_version": __version__,
        "wall_time": time.time() - started,
        "output": path.name,
    }
    if extra:
        man.update(extra)
    Path(str(path) + ".manifest.json").write_text(
        json.dumps(man, sort_keys=True, indent=2, default=_plain) + "\n")


def _plain(obj):
    return obj.tolist() if hasattr(obj, "tolist") else str(obj)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _beam(config, energy, angle, impact) -> PhaseState:
    if config.dim == 2:
        return beam_state(config, energy, beam_direction(angle[0], 2), impact[0])
    return beam_state(config, energy, beam_direction(angle[:2], 3), impact[:2])


def cmd_simulate(args, config, gevrey) -> int:
    started = time.time()
    if args.q is not None:
        if args.p is None or len(args.q) != config.dim or len(args.p) != config.dim:
            raise UsageError(f"--q and --p need {config.dim} components each")
        x = PhaseState(args.q, args.p)
        energy = hamiltonian(x, config)
    else:
        if args.energy is None:
            raise UsageError("give either --q/--p or --energy with --angle/--impact")
        energy = args.energy
        x = _beam(config, energy, args.angle, args.impact)
    settings = _settings(args, config, energy)
    tr = propagate(x, config, settings, StopCondition(escape=not args.no_escape))
    out = _outdir(args)
    tpath, epath = out / "trajectory.csv", out / "events.jsonl"
    tr.to_csv(tpath)
    tr.events_jsonl(epath)
    extra = {"status": tr.status, "energy_drift": tr.energy_drift}
    _manifest(tpath, args, config, started, extra)
    _manifest(epath, args, config, started, extra)
    print(f"status={tr.status} steps={tr.n_steps} drift={tr.energy_drift:.3e} -> {tpath}")
    return EXIT_OK


def _scatter_row(job):
    config, params, x, settings = job
    try:
        rec = scattering_record(x, config, settings)
        return record_row(params, rec, config.dim)
    except Exception as exc:  # recorded in-row so the batch continues
        nan = [math.nan] * (2 * config.dim + 2)
        return [*params, f"Error: {type(exc).__name__}: {exc}", *nan, ""]


def _map(func, jobs, n_jobs: int):
    if n_jobs <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, jobs, chunksize=max(1, len(jobs) // (8 * n_jobs))))


def cmd_scatter(args, config, gevrey) -> int:
    started = time.time()
    energy = args.energy
    settings = _settings(args, config, energy)
    rng = np.random.default_rng(args.seed)
    names = ["angle", "impact"] if config.dim == 2 else ["theta", "phi", "impact1", "impact2"]
    if args.random:
        beams = random_beams(config, energy, args.random, rng, args.b_max)
        jobs = [(config, b.params, b.state, settings) for b in beams]
    else:
        jobs = []
        for a in args.angles:
            for b in args.impacts:
                if config.dim == 2:
                    params = (float(a), float(b))
                    x = beam_state(config, energy, beam_direction(a, 2), b)
                else:
                    params = (float(a), args.phi, float(b), args.impact2)
                    x = beam_state(config, energy, beam_direction((a, args.phi), 3),
                                   (b, args.impact2))
                jobs.append((config, params, x, settings))
    rows = _map(_scatter_row, jobs, args.jobs)
    out = _outdir(args)
    path = out / "scatter.csv"
    path.write_text(scattering_map_csv(names, rows, config.dim))
    counts = {}
    for r in rows:
        cls = r[len(names)]
        counts[cls] = counts.get(cls, 0) + 1
    _manifest(path, args, config, started, {"classes": counts})
    print(f"{len(rows)} rows {counts} -> {path}")
    return EXIT_OK


def _check_job(job):
    config, gevrey, x, settings, points = job
    return integral_checks(x, config, gevrey, settings=settings, spread_points=points).to_dict()


def cmd_verify(args, config, gevrey) -> int:
    started = time.time()
    gevrey = gevrey or GevreyParams()
    energy = args.energy if args.energy is not None else gevrey.e_window[0]
    settings = _settings(args, config, energy)
    rng = np.random.default_rng(args.seed)
    beams = random_beams(config, energy, args.samples, rng)
    jobs = [(config, gevrey, b.state, settings, args.points) for b in beams]
    results = _map(_check_job, jobs, args.jobs)
    usable = [r for r in results if r["rank"] is not None]
    d = config.dim
    n_use = len(usable)
    frac = (lambda pred: sum(1 for r in usable if pred(r)) / n_use) if n_use else (lambda _: 0.0)
    checks = {
        "conservation": {"fraction": frac(lambda r: r["spread"] is not None
                                          and r["spread"] <= args.spread_tol),
                         "threshold": 0.98, "tolerance": args.spread_tol},
        "rank": {"fraction": frac(lambda r: r["rank"] == d), "threshold": 0.95},
        "bracket_H": {"fraction": frac(lambda r: r["bracket_H_ok"]), "threshold": 1.0,
                      "tolerance": args.bracket_tol},
        "bracket_ff": {"fraction": frac(lambda r: r["bracket_ff_ok"]), "threshold": 1.0,
                       "tolerance": args.bracket_tol},
    }
    for c in checks.values():
        c["passed"] = n_use > 0 and c["fraction"] >= c["threshold"]
    determinate = n_use >= 0.5 * len(results)
    if not determinate:
        code = EXIT_UNDETERMINED
    else:
        code = EXIT_OK if all(c["passed"] for c in checks.values()) else EXIT_FAIL
    report = {
        "energy": energy,
        "gevrey": {"C": gevrey.c_const, "g": gevrey.g_index},
        "samples": len(results),
        "usable": n_use,
        "determinate": determinate,
        "checks": checks,
        "exit_code": code,
        "points": results,
    }
    out = _outdir(args)
    path = out / "verify.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=1, allow_nan=True) + "\n")
    _manifest(path, args, config, started, {"exit_code": code})
    for name, c in checks.items():
        print(f"{name}: {'PASS' if c['passed'] else 'FAIL'} fraction={c['fraction']:.3f}")
    return code


def cmd_entropy(args, config, gevrey) -> int:
    started = time.time()
    energy = args.energy
    settings = _settings(args, config, energy)
    span = config.extent + 0.5 * config.length_scale
    fams = []
    for i in range(args.families):
        ang = 2.0 * math.pi * i / args.families + args.angle_offset
        u = beam_direction(ang if config.dim == 2 else (0.5 * math.pi, ang), config.dim)
        fams.append(BeamFamily(config, energy, tuple(u), -span, span))
    census = word_census(fams, config, args.L_max, settings, grid=args.grid,
                         max_samples=args.max_samples, refine=not args.no_refine)
    out = _outdir(args)
    path = out / "census.csv"
    path.write_text(census_csv(census))
    _manifest(path, args, config, started, {"slope": census.slope})
    print(f"slope={census.slope:.4f} residual={census.residual:.4f} "
          f"samples={census.sample_size} -> {path}")
    return EXIT_OK


def _read_csv(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return rows


def cmd_plotdata(args, config, gevrey) -> int:
    started = time.time()
    rows = _read_csv(args.input)
    cols = rows[0].keys()
    try:
        if args.kind == "trajectory":
            qs = sorted((c for c in cols if c.startswith("q")), key=lambda c: int(c[1:]))
            head = " ".join(qs)
            data = [[float(r[c]) for c in qs] for r in rows]
        elif args.kind == "census":
            head = "L log_count"
            data = [[int(r["L"]), math.log(int(r["count"]))] for r in rows if int(r["count"]) > 0]
        else:
            params = list(cols)[: list(cols).index("class")]
            vary = [c for c in params if len({r[c] for r in rows}) > 1] or params[:1]
            pname = vary[0]
            if args.kind == "tau":
                head = f"{pname} tau"
                data = [[float(r[pname]), float(r["tau"])] for r in rows
                        if not math.isnan(float(r["tau"]))]
            else:
                dim = sum(1 for c in cols if c.startswith("pp"))
                head = f"{pname} angle"
                data = []
                for r in rows:
                    pm = np.array([float(r[f"pm{i + 1}"]) for i in range(dim)])
                    pp = np.array([float(r[f"pp{i + 1}"]) for i in range(dim)])
                    if np.any(np.isnan(pm)) or np.any(np.isnan(pp)):
                        continue
                    if dim == 2:
                        ang = math.atan2(pm[0] * pp[1] - pm[1] * pp[0], pm @ pp)
                    else:
                        c = pm @ pp / (np.linalg.norm(pm) * np.linalg.norm(pp))
                        ang = math.acos(max(-1.0, min(1.0, c)))
                    data.append([float(r[pname]), ang])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.input}: unexpected content for kind {args.kind!r}: {exc}")
    out = _outdir(args)
    path = out / f"{Path(args.input).stem}.{args.kind}.dat"
    body = [f"# {head}"] + [" ".join(repr(v) for v in row) for row in data]
    path.write_text("\n".join(body) + "\n")
    _manifest(path, args, None, started)
    print(f"{len(data)} rows -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--budget-time", type=float, default=None,
                        help="time budget per leg in crossing times (default 1e4)")
    common.add_argument("--budget-steps", type=int, default=None)

    p = _Parser(prog="ncentre", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="propagate one orbit")
    s.add_argument("--q", type=_vector)
    s.add_argument("--p", type=_vector)
    s.add_argument("--energy", type=float)
    s.add_argument("--angle", type=_vector, default=[0.0])
    s.add_argument("--impact", type=_vector, default=[0.0])
    s.add_argument("--no-escape", action="store_true", help="ignore the escape sphere")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scatter", parents=[common], help="scattering map over a beam grid")
    s.add_argument("--energy", type=float, required=True)
    s.add_argument("--angles", type=_span, default=np.array([0.0]),
                   help="beam angle (theta in space) grid 'a:b:n'")
    s.add_argument("--impacts", type=_span, default=np.linspace(-1.0, 1.0, 21))
    s.add_argument("--phi", type=float, default=0.0)
    s.add_argument("--impact2", type=float, default=0.0)
    s.add_argument("--random", type=int, default=0, help="use N random beams instead")
    s.add_argument("--b-max", type=float, default=None)
    s.set_defaults(func=cmd_scatter)

    s = sub.add_parser("verify-integrals", parents=[common],
                       help="conservation, rank and bracket checks")
    s.add_argument("--energy", type=float)
    s.add_argument("--samples", type=int, default=20)
    s.add_argument("--points", type=int, default=20, help="orbit points for conservation")
    s.add_argument("--spread-tol", type=float, default=1e-4)
    s.add_argument("--bracket-tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("entropy", parents=[common], help="itinerary word census")
    s.add_argument("--energy", type=float, required=True)
    s.add_argument("--L-max", dest="L_max", type=int, default=8)
    s.add_argument("--grid", type=int, default=200)
    s.add_argument("--families", type=int, default=1)
    s.add_argument("--angle-offset", type=float, default=0.0)
    s.add_argument("--max-samples", type=int, default=30000)
    s.add_argument("--no-refine", action="store_true")
    s.set_defaults(func=cmd_entropy)

    s = sub.add_parser("plotdata", parents=[common], help="columnar plot data from a CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--kind", required=True, choices=["tau", "angle", "census", "trajectory"])
    s.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config, gevrey = (None, None)
        if args.command != "plotdata":
            if not args.config:
                raise UsageError("--config is required")
            config, gevrey = _load(args.config)
        return args.func(args, config, gevrey)
    except UsageError as exc:
        print(f"ncentre: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        print(f"ncentre: data error: {exc}{where}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
