"""Command line front end for single runs, sweeps, speed checks and exact oracles."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics, flow
from .flow import FlowConfig, FlowError
from .geometry import GeometryError, SupportProfile, angenent_oval, displacements, oval_a2, support_from_turning_angle
from .speeds import SpeedError, check_admissible, constants, resolve

EXIT_OK, EXIT_MONITOR_FAILED, EXIT_ERROR = 0, 1, 2

FLOW_FIELDS = {f.name: f for f in dataclasses.fields(FlowConfig)}


@dataclass
class RunSpec:
    speed_id: str = "mean"
    n: int = 2
    seed: str = "oval:8"
    flow: FlowConfig = field(default_factory=FlowConfig)
    monitors: str = "all"
    out_dir: str | None = None
    force: bool = False
    reference: bool = True
    chou_window: tuple | None = None

    def label(self) -> str:
        raw = f"{self.speed_id}_n{self.n}_{self.seed}_N{self.flow.N}"
        return "".join(ch if ch.isalnum() or ch in "-_." else "-" for ch in raw)


def output_root(explicit: str | None = None) -> Path:
    return Path(explicit or os.environ.get("PANCAKE_OUT") or "pancake-out")


# ---------------------------------------------------------------------------
# configuration: a TOML file mirrored by flags; flags win


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML file with run settings; flags override it")
    p.add_argument("--speed", help="speed id: mean, pr:<r>, gauss-root, mix:<id>:<w>,...")
    p.add_argument("--n", type=int, help="number of principal curvatures")
    p.add_argument("--seed", help="oval:<R>, circle:<r0> or file:<path.csv>")
    p.add_argument("--monitors", help="comma separated monitor names, or 'all'")
    p.add_argument("--out", help="output directory (default $PANCAKE_OUT/<label>)")
    p.add_argument("--force", action="store_true", default=None,
                   help="run even if the admissibility check fails")
    p.add_argument("--no-reference", dest="reference", action="store_false", default=None,
                   help="skip the half-resolution run used to size discretization slack")
    p.add_argument("--chou-window", help="simulation-time window t0,t1 for the Chou monitor")
    g = p.add_argument_group("flow")
    g.add_argument("--N", type=int)
    g.add_argument("--cfl", type=float)
    g.add_argument("--scheme")
    g.add_argument("--no-symmetry", dest="symmetry_enforce", action="store_false", default=None)
    g.add_argument("--stop-kappa", type=float)
    g.add_argument("--stop-area", type=float)
    g.add_argument("--record-every", type=int)
    g.add_argument("--diff-backend", choices=["fd2", "fd4", "spectral"])
    g.add_argument("--pole-band", type=int)
    g.add_argument("--max-seconds", type=float)
    g.add_argument("--allow-kappa-below-lambda", action="store_true", default=None)
    g.add_argument("--pure-python", action="store_true", default=None)


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _window(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    a, b = (float(v) for v in str(text).split(","))
    return a, b


def build_spec(args: argparse.Namespace, cfg: dict) -> RunSpec:
    flow_cfg = dict(cfg.get("flow", {}))
    for name in FLOW_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            flow_cfg[name] = v
    unknown = set(flow_cfg) - set(FLOW_FIELDS)
    if unknown:
        raise ValueError(f"unknown flow settings: {', '.join(sorted(unknown))}")

    def pick(flag, key, default):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        return cfg.get(key, default)

    return RunSpec(
        speed_id=pick("speed", "speed", "mean"),
        n=int(pick("n", "n", 2)),
        seed=str(pick("seed", "seed", "oval:8")),
        flow=FlowConfig(**flow_cfg),
        monitors=pick("monitors", "monitors", "all"),
        out_dir=pick("out", "out", None),
        force=bool(pick("force", "force", False)),
        reference=bool(pick("reference", "reference", True)),
        chou_window=_window(pick("chou_window", "chou_window", None)),
    )


# ---------------------------------------------------------------------------
# run


def _seed_profile(seed: str, N: int, n: int, stride: int = 1):
    """Build the initial profile.  ``stride`` > 1 subsamples a file seed for a
    coarser reference run; the coarse grid nodes are every stride-th fine node."""
    kind, _, value = seed.partition(":")
    if kind == "oval":
        R = float(value)
        return support_from_turning_angle(angenent_oval(-R, N), 0.0, n), {"kind": "oval", "R": R}
    if kind == "circle":
        r0 = float(value)
        if not r0 > 0:
            raise ValueError(f"circle radius must be positive, got {r0}")
        return flow.circle(r0, N, n), {"kind": "circle", "r0": r0}
    if kind == "file":
        with open(value, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        sigma = np.array([float(r["sigma"]) for r in rows])
        if sigma.size != N * stride:
            raise ValueError(f"seed file has {sigma.size} nodes but N={N * stride}")
        return SupportProfile(sigma[::stride], 0.0, n), {"kind": "file", "path": value}
    raise ValueError(f"unresolvable seed {seed!r}; use oval:<R>, circle:<r0> or file:<path>")


def _monitor_names(monitors) -> list[str] | str:
    if isinstance(monitors, (list, tuple)):
        return list(monitors)
    return "all" if monitors in (None, "all") else [m.strip() for m in monitors.split(",") if m.strip()]


def simulate(spec: RunSpec, N: int | None = None):
    cfg = spec.flow if N is None else dataclasses.replace(spec.flow, N=N)
    speed = resolve(spec.speed_id, spec.n)
    seed, info = _seed_profile(spec.seed, cfg.N, spec.n, spec.flow.N // cfg.N)
    return flow.run(seed, speed, cfg, info)


def execute(spec: RunSpec, out_dir: Path | None = None, quiet: bool = False) -> tuple[int, dict]:
    """Run one RunSpec end to end and write its artifacts.  Returns (exit code, summary)."""
    from . import plotting

    speed = resolve(spec.speed_id, spec.n)
    adm = check_admissible(speed)
    if not adm.passed and not spec.force:
        failed = ", ".join(f"({c.name}) witness {c.witness}" for c in adm.failures())
        raise SpeedError(f"speed {spec.speed_id!r} rejected by the admissibility check: {failed}")
    traj = simulate(spec)
    ref = None
    if spec.reference and (spec.flow.N // 2) % 4 == 0:
        ref = simulate(spec, spec.flow.N // 2)
    report = diagnostics.evaluate(traj, ref, _monitor_names(spec.monitors), spec.chou_window)
    out = Path(out_dir or spec.out_dir or output_root() / spec.label())
    flow.write_trajectory(traj, out, {
        "probe_seed": adm.seed,
        "admissibility": adm.to_json(),
        "reference_N": ref.config.N if ref is not None else None,
        "reference_T_ext": ref.T_ext if ref is not None else None,
    })
    diagnostics.write_bounds_json(report, out / "bounds.json")
    plotting.profiles_svg(traj, out / "profiles.svg")
    plotting.margins_svg(report, out / "margins.svg")
    plotting.area_fit_svg(traj, report, out / "area_fit.svg")
    summary = summarize(spec, traj, report, out)
    if not quiet:
        print_report(summary, report)
    return (EXIT_OK if report.passed else EXIT_MONITOR_FAILED), summary


def summarize(spec, traj, report, out) -> dict:
    def coef(model, key):
        try:
            return report.fit(model).coefficients[key]
        except KeyError:
            return math.nan

    # a monitor whose constant is fitted to the data sits at zero margin by construction
    applicable = [b for b in report.bounds if b.applicable and not b.detail.get("fitted")]
    worst = min(applicable, key=lambda b: b.worst_margin + b.slack_used, default=None)
    return {
        "label": spec.label(),
        "speed": spec.speed_id,
        "n": spec.n,
        "seed": spec.seed,
        "R": traj.seed.get("R", math.nan),
        "N": spec.flow.N,
        "T_ext": traj.T_ext,
        "phidot1_fit": coef("area_log_law", "a"),
        "C_area_fit": coef("area_log_law", "b"),
        "C_ell_fit": coef("ell_constant", "C"),
        "worst_monitor": worst.name if worst else "",
        "worst_margin": worst.worst_margin if worst else math.nan,
        "failed": ";".join(b.name for b in report.bounds if not b.passed),
        "passed": report.passed,
        "out": str(out),
        "error": "",
    }


def print_report(summary: dict, report) -> None:
    print(f"T_ext = {summary['T_ext']:.9f}    artifacts: {summary['out']}")
    for b in report.bounds:
        if not b.applicable:
            status = "n/a "
        else:
            status = "PASS" if b.passed else "FAIL"
        print(f"  {status}  {b.name:24s} worst margin {b.worst_margin: .3e}  slack {b.slack_used:.2e}")
    for f in report.fits:
        coefs = ", ".join(f"{k} = {v:.4g}" for k, v in f.coefficients.items())
        print(f"  fit   {f.model:24s} {coefs}  window [{f.window[0]:.3g}, {f.window[1]:.3g}]")


def cmd_run(args) -> int:
    spec = build_spec(args, load_config(args.config))
    code, _ = execute(spec)
    return code


# ---------------------------------------------------------------------------
# sweep


SWEEP_COLUMNS = ["label", "speed", "n", "seed", "R", "N", "T_ext", "phidot1_fit", "C_area_fit",
                 "C_ell_fit", "worst_monitor", "worst_margin", "passed", "failed", "error"]


def _sweep_member(spec: RunSpec, out: str) -> dict:
    try:
        _, summary = execute(spec, Path(out), quiet=True)
        return summary
    except (SpeedError, FlowError, GeometryError, ValueError) as exc:
        return {"label": spec.label(), "speed": spec.speed_id, "n": spec.n, "seed": spec.seed,
                "N": spec.flow.N, "passed": False, "error": str(exc)}


def _fmt_cell(v):
    if isinstance(v, float):
        return "%.12e" % v
    return str(v)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    base = build_spec(args, cfg)
    sweep_cfg = cfg.get("sweep", {})
    Rs = [float(v) for v in (args.R.split(",") if args.R else sweep_cfg.get("R", []))]
    speeds = args.speeds.split(",") if args.speeds else list(sweep_cfg.get("speeds", []))
    if not Rs and not speeds:
        print("sweep: give a non-empty --R list or --speeds list", file=sys.stderr)
        return EXIT_ERROR
    specs = []
    for sid in speeds or [base.speed_id]:
        for R in Rs or [None]:
            seed = f"oval:{R:g}" if R is not None else base.seed
            specs.append(dataclasses.replace(base, speed_id=sid.strip(), seed=seed))
    root = output_root(base.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs or int(sweep_cfg.get("jobs", 1))
    outs = [str(root / s.label()) for s in specs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_member, specs, outs))
    else:
        rows = [_sweep_member(s, o) for s, o in zip(specs, outs)]
    with open(root / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt_cell(r.get(c, "")) for c in SWEEP_COLUMNS])
    print(f"{'run':40s} {'T_ext':>10s} {'phidot1':>9s} {'C_ell':>9s} {'diff':>9s}  status")
    prev = {}
    for r in rows:
        c = r.get("C_ell_fit", math.nan)
        p = prev.get(r["speed"], math.nan)
        diff = abs(c - p) if math.isfinite(c) and math.isfinite(p) else math.nan
        status = "error: " + r["error"] if r.get("error") else ("pass" if r.get("passed") else "FAIL " + r.get("failed", ""))
        print(f"{r['label']:40s} {r.get('T_ext', math.nan):10.5f} {r.get('phidot1_fit', math.nan):9.4f} "
              f"{c:9.4f} {diff:9.4f}  {status}")
        prev[r["speed"]] = c
    print(f"wrote {root / 'sweep.csv'}")
    return EXIT_OK if all(r.get("passed") for r in rows) else EXIT_MONITOR_FAILED


# ---------------------------------------------------------------------------
# check-speed and oracle


def cmd_check_speed(args) -> int:
    speed = resolve(args.speed_id, args.n)
    report = check_admissible(speed)
    if args.json:
        print(report.dumps())
    else:
        print(f"speed {speed.name} (n={speed.n}), probe seed {report.seed}")
        for c in report.conditions.values():
            mark = "pass" if c.passed else "FAIL"
            wit = "" if c.passed else f"  witness {c.witness}"
            print(f"  ({c.name}) {mark}  worst {c.worst_violation:.3e}  tol {c.tolerance:.1e}{wit}  {c.detail}")
        if report.passed:
            sc = constants(speed)
            print(f"  phi1 = {sc.phi1:.12g}  phidot1 = {sc.phidot1:.12g}  taylor_C = {sc.taylor_C:.6g}")
    return EXIT_OK if report.passed else EXIT_MONITOR_FAILED


def cmd_oracle(args) -> int:
    t = args.t
    if not t < 0:
        print("oracle: t must be negative (extinction at t = 0)", file=sys.stderr)
        return EXIT_ERROR
    speed = resolve(args.speed, args.n)
    phi1 = float(speed.eval_reduced(1.0, 1.0))
    curve = angenent_oval(t, args.N)
    d = displacements(curve)
    out = {
        "t": t,
        "circle": {"phi1": phi1, "radius": math.sqrt(-2 * phi1 * t),
                   "area": -2 * math.pi * phi1 * t},
        "oval": {"a2": oval_a2(t), "h": d.h, "ell": d.ell, "area": d.A,
                 "ell_bounds": [-t, -t + math.log(2)],
                 "h_bounds": [math.pi / 2 * (1 - math.exp(t)), math.pi / 2]},
        "grim": {f"x={x:.6g}": -math.log(math.cos(x)) + t
                 for x in (0.0, math.pi / 6, math.pi / 4, math.pi / 3)},
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pancake", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one flow and check every monitor")
    _add_run_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run several R values or speeds in parallel")
    _add_run_flags(s)
    s.add_argument("--R", help="comma separated oval parameters")
    s.add_argument("--speeds", help="comma separated speed ids")
    s.add_argument("--jobs", type=int, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check-speed", help="probe a speed for admissibility")
    c.add_argument("speed_id")
    c.add_argument("--n", type=int, default=2)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_check_speed)

    o = sub.add_parser("oracle", help="print exact circle, oval and translator values at time t")
    o.add_argument("--t", type=float, required=True)
    o.add_argument("--N", type=int, default=512)
    o.add_argument("--speed", default="mean")
    o.add_argument("--n", type=int, default=2)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpeedError, FlowError, GeometryError, ValueError, OSError) as exc:
        print(f"pancake {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
