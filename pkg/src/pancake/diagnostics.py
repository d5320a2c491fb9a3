"""Runtime monitors for the inequalities obeyed by oval-seeded flows, and
least-squares fits of their asymptotic constants.

Every monitor reduces a trajectory to a margin series ``m(t)`` (positive means
satisfied) and passes when ``min m >= -slack``.  The slack is a fixed base
(2% for bounds that depend on the extrapolated extinction time, tiny for exact
pointwise identities) plus a discretization term.  The discretization term is
measured, not assumed: when a reference run at half the resolution is given it
is the change in the worst margin between the two runs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import DEFAULT_BACKEND, curvatures_from_support, embed, pole_blend_weights, steiner_point, theta_grid
from .speeds import SpeedError, constants

__all__ = [
    "DiagnosticsRecord",
    "BoundReport",
    "AsymptoticFit",
    "FitError",
    "Report",
    "MONITORS",
    "compute_records",
    "record_array",
    "evaluate",
    "monitor",
    "grim_cap_distance",
    "tip_grim_distance",
    "phi_evolution_residual",
    "fit_log_law",
    "fit_area_asymptotics",
    "fit_ell_asymptotics",
    "fit_improved_speed",
    "harnack_observation",
    "write_diagnostics_csv",
    "write_bounds_json",
]

TIME_SLACK = 0.02
EXACT_SLACK = 1e-8


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    h: float
    ell: float
    A: float
    rin: float
    rout: float
    phi_min: float
    phi_max: float
    min_kappa_minus_lambda: float
    max_ratio: float
    lambda_integral: float
    lambda2_over_kappa_integral: float
    tip_grim_dist: float
    area_rate_residual: float
    # extra columns
    t_sim: float = 0.0
    kappa_max: float = 0.0
    phi_pole: float = 0.0
    phi_integral: float = 0.0
    length: float = 0.0
    area_rate: float = 0.0
    lambda_mono_violation: float = 0.0
    barrier_margin: float = 0.0
    cos_ratio_min: float = 0.0
    phiapprox_margin: float = 0.0
    u_gap_c1: float = 0.0


COLUMNS = [f.name for f in dataclasses.fields(DiagnosticsRecord)]


def record_array(records, name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


# ---------------------------------------------------------------------------
# tip comparison with the translating solution


def _grim_nearest(X, Y, iters: int = 60):
    """Closest point on Y = -log cos u to each (X, Y), by safeguarded Newton."""
    lim = np.pi / 2 - 1e-9
    u = np.clip(X, -lim + 1e-6, lim - 1e-6)
    for _ in range(iters):
        tn = np.tan(u)
        g = -np.log(np.cos(u))
        d1 = (u - X) + (g - Y) * tn
        d2 = 1 + tn * tn + (g - Y) * (1 + tn * tn)
        d2 = np.where(d2 > 0.1, d2, 0.1 + np.abs(d2))
        u_new = np.clip(u - d1 / d2, -lim, lim)
        if np.max(np.abs(u_new - u)) < 1e-15:
            u = u_new
            break
        u = u_new
    return u, -np.log(np.cos(u))


def grim_cap_distance(x, y, height: float = 1.0, min_nodes: int = 16) -> float:
    """One-sided Hausdorff distance from the cap of a closed curve below its top
    point to the unit-width translator, both with the tip at the origin."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    top = int(np.argmax(y))
    N = x.size
    depth = y[top] - y
    idx = [top]
    for direction in (1, -1):
        j = (top + direction) % N
        while depth[j] <= height and j != top and len(idx) < N:
            idx.append(j)
            j = (j + direction) % N
    if len(idx) < min_nodes:
        raise ValueError(f"cap unresolved: {len(idx)} nodes within depth {height} of the tip")
    X = x[idx] - x[top]
    Y = depth[idx]
    u, g = _grim_nearest(X, Y)
    return float(np.max(np.hypot(X - u, Y - g)))


def tip_grim_distance(traj, t: float) -> float:
    if t > -1:
        raise ValueError(f"tip comparison needs t <= -1, got {t}")
    f = traj.frame_at(t)
    pts = embed(f, traj.config.diff_backend).points
    return grim_cap_distance(pts[:, 0], pts[:, 1])


STENCIL_REACH = {"fd2": 2, "fd4": 4}


def phi_evolution_residual(before, after, speed, backend: str = DEFAULT_BACKEND, band: int = 3):
    """Residual of the speed's own evolution equation between two profiles.

    The time derivative of ``phi`` at fixed normal angle is a centred difference
    over ``before -> after`` and is compared against
    ``phi_k k^2 phi_tt - phi_l l^2 tan(theta) phi_t + phi (phi_k k^2 + phi_l l^2)``
    evaluated on the midpoint profile.  Nodes whose stencil touches the pole
    band are masked with NaN since ``tan`` is singular there.

    Returns
    -------
    ndarray
        Pointwise residual, NaN near the poles.
    """
    dt = after.t - before.t
    if dt <= 0:
        raise ValueError("profiles must be in increasing time order")
    mid = before.replace(sigma=0.5 * (before.sigma + after.sigma), t=before.t + 0.5 * dt)
    p0 = curvatures_from_support(before, speed, backend, band).phi
    p1 = curvatures_from_support(after, speed, backend, band).phi
    cd = curvatures_from_support(mid, speed, backend, band)
    gk, gl = speed.grad_reduced(cd.kappa, cd.lam)
    phi = cd.phi
    d = 2 * np.pi / phi.size
    fp, fm = np.roll(phi, -1), np.roll(phi, 1)
    phi_tt = (fp + fm - 2 * phi) / d**2
    phi_t = (fp - fm) / (2 * d)
    a = gk * cd.kappa**2
    b = gl * cd.lam**2
    with np.errstate(invalid="ignore", over="ignore"):
        rhs = a * phi_tt - b * np.tan(mid.theta) * phi_t + phi * (a + b)
    res = (p1 - p0) / dt - rhs
    # phi_t at a node sees band values through two applications of the stencil
    reach = STENCIL_REACH.get(backend, 2)
    w = pole_blend_weights(phi.size, band)
    ok = np.ones(phi.size, dtype=bool)
    for k in range(-reach, reach + 1):
        ok &= np.roll(w, k) >= 1
    res[~ok] = np.nan
    return res


# ---------------------------------------------------------------------------
# per-frame records


def _speed_constants(speed):
    try:
        return constants(speed)
    except SpeedError:
        return None


def _phi1(speed) -> float:
    return float(speed._reduced(np.array(1.0), np.array(1.0)))


def compute_records(traj) -> list[DiagnosticsRecord]:
    cfg = traj.config
    speed = traj.speed
    N = cfg.N
    th = theta_grid(N)
    c = np.abs(np.cos(th))
    nu = np.stack([np.sin(th), -np.cos(th)], axis=-1)
    d = 2 * np.pi / N
    sc = _speed_constants(speed)
    phi1 = _phi1(speed)
    upper = slice(N // 4, 3 * N // 4 + 1)
    # blended nodes carry an interpolated lambda, so monotonicity is checked
    # on the pole node and the nodes using the geometric formula
    wts = pole_blend_weights(N, cfg.pole_band)[N // 4: N // 2 + 1]
    unblended = (wts == 0) | (wts >= 1)
    rows = []
    for f in traj.frames:
        cd = curvatures_from_support(f, speed, cfg.diff_backend, cfg.pole_band)
        k, lam, phi, rho = cd.kappa, cd.lam, cd.phi, cd.rho
        sigma = f.sigma
        t = f.t - traj.T_ext
        ds = rho * d
        centred = sigma - nu @ steiner_point(sigma)
        pts = embed(f, cfg.diff_backend).points
        arc = lam[N // 4: N // 2 + 1][unblended]
        mono = max(0.0, -float(np.min(np.diff(arc)))) / float(np.max(lam))
        generic = ~cd.pole_mask & (c > 1e-12)
        if sc is not None:
            ok = k >= lam
            err = np.abs(phi - k - sc.phidot1 * lam)
            pa = float(np.min(((sc.taylor_C * lam * lam / k - err) / phi)[ok])) if ok.any() else 0.0
        else:
            pa = math.nan
        try:
            tip = grim_cap_distance(pts[:, 0], pts[:, 1])
        except ValueError:
            tip = math.nan
        xu, yu = pts[upper, 0], pts[upper, 1]
        sel = (xu >= 0) & (xu < np.pi / 2)
        gap = ((-t - yu) * (np.pi / 2 - xu))[sel]
        rows.append(dict(
            t=t, t_sim=f.t,
            h=float(sigma[N // 4]), ell=float(max(sigma[N // 2], sigma[0])),
            A=0.5 * d * float(np.sum(sigma * rho)),
            rin=float(np.min(centred)), rout=float(np.max(centred)),
            phi_min=float(np.min(phi)), phi_max=float(np.max(phi)), phi_pole=float(phi[N // 4]),
            min_kappa_minus_lambda=float(np.min(k - lam)), max_ratio=float(np.max(k / lam)),
            kappa_max=float(np.max(k)),
            lambda_integral=float(np.sum(lam * ds)),
            lambda2_over_kappa_integral=float(np.sum(lam * lam / k * ds)),
            phi_integral=float(np.sum(phi * ds)), length=float(np.sum(ds)),
            tip_grim_dist=tip,
            lambda_mono_violation=mono,
            barrier_margin=float(np.min(phi - c)),
            cos_ratio_min=float(np.min(phi[generic] / c[generic])),
            phiapprox_margin=pa,
            u_gap_c1=float(np.max(gap)) / (phi1 * np.pi) if gap.size else math.nan,
        ))
    t = np.array([r["t_sim"] for r in rows])
    A = np.array([r["A"] for r in rows])
    P = np.array([r["phi_integral"] for r in rows])
    if len(rows) > 1:
        rate = np.diff(A) / np.diff(t)
        res = rate + 0.5 * (P[1:] + P[:-1])
        rate = np.concatenate([rate[:1], rate])
        res = np.concatenate([res[:1], res])
    else:
        rate = -P
        res = np.zeros(1)
    for r, q, e in zip(rows, rate, res):
        r["area_rate"] = float(q)
        r["area_rate_residual"] = float(e)
    return [DiagnosticsRecord(**r) for r in rows]


def write_diagnostics_csv(records, path) -> None:
    rows = np.array([[getattr(r, c) for c in COLUMNS] for r in records], dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        np.savetxt(fh, np.atleast_2d(rows), fmt="%.12e", delimiter=",")


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class BoundReport:
    name: str
    frames_checked: int
    worst_margin: float
    witness_time: float | None
    passed: bool
    slack_used: float
    slack_discretization: float = 0.0
    applicable: bool = True
    scale_invariant: bool = False
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["kind"] = "bound"
        return d


@dataclass(frozen=True)
class AsymptoticFit:
    model: str
    window: tuple[float, float]
    coefficients: dict
    stderr: dict
    target: dict
    residual_norm: float
    n_points: int
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["kind"] = "fit"
        d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class Report:
    bounds: tuple
    fits: tuple = ()
    observations: tuple = ()
    series: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.bounds)

    def __getitem__(self, name: str) -> BoundReport:
        for b in self.bounds:
            if b.name == name:
                return b
        raise KeyError(name)

    def fit(self, model: str) -> AsymptoticFit:
        for f in self.fits:
            if f.model == model:
                return f
        raise KeyError(model)

    def to_json(self) -> list:
        return ([b.to_json() for b in self.bounds] + [f.to_json() for f in self.fits]
                + [dict(o, kind="observation") for o in self.observations])


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_bounds_json(report: Report, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(report.to_json()), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# monitors


@dataclass
class _Series:
    t: np.ndarray
    m: np.ndarray
    base: float
    detail: dict = field(default_factory=dict)


@dataclass
class _Ctx:
    traj: object
    rec: dict
    phi1: float
    R: float | None
    t_floor: float
    chou_window: tuple | None

    @property
    def oval(self) -> bool:
        return self.R is not None

    def sel(self, t_max: float | None = None) -> np.ndarray:
        t = self.rec["t"]
        m = t <= -self.t_floor
        if t_max is not None:
            m &= t <= t_max
        return m


MONITORS: dict[str, tuple[Callable, bool]] = {}


def monitor(name: str, scale_invariant: bool = False):
    def wrap(fn):
        MONITORS[name] = (fn, scale_invariant)
        return fn
    return wrap


@monitor("sturm", scale_invariant=True)
def _sturm(ctx):
    r = ctx.rec
    return _Series(r["t"], r["min_kappa_minus_lambda"] / r["kappa_max"], EXACT_SLACK)


@monitor("pinching", scale_invariant=True)
def _pinching(ctx):
    r = ctx.rec
    q = r["max_ratio"]
    return _Series(r["t"], 1.0 - q / q[0], 0.01, {"initial_max_ratio": float(q[0])})


@monitor("lambda_monotone", scale_invariant=True)
def _lambda_monotone(ctx):
    r = ctx.rec
    return _Series(r["t"], -r["lambda_mono_violation"], EXACT_SLACK)


@monitor("ell_ge_h", scale_invariant=True)
def _ell_ge_h(ctx):
    r = ctx.rec
    return _Series(r["t"], r["ell"] / r["h"] - 1.0, EXACT_SLACK)


@monitor("hl_sandwich", scale_invariant=True)
def _hl(ctx):
    r = ctx.rec
    s = ctx.sel()
    t, hl = r["t"][s], (r["h"] * r["ell"])[s]
    lo = hl / (-(np.pi / 2) * t) - 1.0
    hi = 1.0 - hl / (-np.pi * ctx.phi1 * t)
    return _Series(t, np.minimum(lo, hi), TIME_SLACK,
                   {"lower_margin": float(np.min(lo)), "upper_margin": float(np.min(hi))})


@monitor("extinction_time_bounds")
def _tr(ctx):
    if not ctx.oval:
        return None
    R, T = ctx.R, ctx.traj.T_ext
    lo = R / (2 * ctx.phi1) * (1 - math.exp(-R))
    hi = R + math.log(2)
    m = min(T / lo - 1.0, 1.0 - T / hi)
    return _Series(np.array([-T]), np.array([m]), 0.0, {"T_ext": T, "lower": lo, "upper": hi})


@monitor("phi_min", scale_invariant=True)
def _phi_min(ctx):
    r = ctx.rec
    s = ctx.sel()
    h, ell = r["h"][s], r["ell"][s]
    bound = 2 * h / (h * h + ell * ell) * ctx.phi1
    return _Series(r["t"][s], 1.0 - r["phi_min"][s] / bound, TIME_SLACK)


@monitor("poles_minimize_phi", scale_invariant=True)
def _poles(ctx):
    r = ctx.rec
    return _Series(r["t"], r["phi_min"] / r["phi_pole"] - 1.0, EXACT_SLACK)


@monitor("displacement_bounds")
def _displacement(ctx):
    if not ctx.oval:
        return None
    r = ctx.rec
    s = ctx.sel(-0.5)
    t, h, ell = r["t"][s], r["h"][s], r["ell"][s]
    q = 1 - math.exp(-ctx.R)
    hb = (np.pi / 2) * q * np.exp(2 * ctx.phi1 / t)
    lb = (-2 * ctx.phi1 * t / q) * np.exp(2 * ctx.phi1 / (-t))
    mh = h / hb - 1.0
    ml = 1.0 - ell / lb
    return _Series(t, np.minimum(mh, ml), TIME_SLACK,
                   {"h_margin": float(np.min(mh)) if mh.size else None,
                    "ell_margin": float(np.min(ml)) if ml.size else None})


def default_chou_window(traj) -> tuple[float, float]:
    """Simulation-time window [0.2, 0.6] * T_ext."""
    return 0.2 * traj.T_ext, 0.6 * traj.T_ext


@monitor("chou", scale_invariant=True)
def _chou(ctx):
    r = ctx.rec
    t0, t1 = ctx.chou_window or default_chou_window(ctx.traj)
    ts = r["t_sim"]
    s = (ts >= t0) & (ts <= t1)
    if s.sum() < 2:
        return None
    rr = 0.5 * float(np.min(r["rin"][s]))
    RR = float(np.max(r["rout"][s]))
    first = int(np.argmax(s))
    bound = (RR / rr) * max(2 * ctx.phi1 / rr, float(r["phi_max"][first]))
    phimax = r["phi_max"][s]
    dt = ts[s] - ts[first]
    inner = phimax[1:] / (2 / rr + dt[1:] ** -0.5)
    return _Series(r["t"][s], 1.0 - phimax / bound, TIME_SLACK,
                   {"window_sim": [t0, t1], "r": rr, "R": RR, "bound": bound,
                    "interior_constant": float(np.max(inner)) if inner.size else None})


@monitor("barrier_cos")
def _barrier(ctx):
    if not ctx.oval:
        return None
    r = ctx.rec
    return _Series(r["t"], r["barrier_margin"], 1e-6)


@monitor("phiapprox", scale_invariant=True)
def _phiapprox(ctx):
    r = ctx.rec
    m = r["phiapprox_margin"]
    if not np.all(np.isfinite(m)):
        return None
    sc = constants(ctx.traj.speed)
    return _Series(r["t"], m, EXACT_SLACK,
                   {"phidot1": sc.phidot1, "taylor_C": sc.taylor_C, "taylor_C_estimated": True,
                    "taylor_samples": sc.taylor_samples})


@monitor("ell_lower_linear")
def _lestarbit(ctx):
    if not ctx.oval:
        return None
    r = ctx.rec
    s = ctx.sel()
    return _Series(r["t"][s], r["ell"][s] / (-r["t"][s]) - 1.0, TIME_SLACK)


@monitor("uh_phi_asymptotics")
def _uh(ctx):
    """First-order decay shapes with a fitted constant c1 (reported, not asserted)."""
    if not ctx.oval:
        return None
    r = ctx.rec
    s = ctx.sel(-1.0)
    if not s.any():
        return None
    t = r["t"][s]
    c_i = float(np.max(r["phi_min"][s] * t * t / (ctx.phi1 * np.pi)))
    c_ii = float(np.max((1 - 2 * r["h"][s] / np.pi) * (-t) / (2 * ctx.phi1)))
    c_iii = float(np.max(r["u_gap_c1"][s]))
    c1 = max(c_i, c_ii, c_iii, 0.0)
    ok = math.isfinite(c1)
    return _Series(t, np.zeros_like(t) if ok else np.full_like(t, -np.inf), 0.0,
                   {"c1": c1, "c1_phi_min": c_i, "c1_h": c_ii, "c1_u": c_iii, "fitted": True})


@monitor("lambda_integrals")
def _lambda_integrals(ctx):
    if not ctx.oval:
        return None
    r = ctx.rec
    s = ctx.sel()
    t = r["t"][s]
    q = (-t) * r["lambda_integral"][s]
    excess = (q - 2 * np.pi) * np.sqrt(-t)
    sup2 = float(np.max(r["lambda2_over_kappa_integral"][s] * t * t))
    return _Series(t, 1.0 - q / (2 * np.pi), TIME_SLACK,
                   {"c_fit": float(max(0.0, np.max(excess))), "epsilon": 0.5,
                    "sup_t2_lambda2_over_kappa": sup2})


@monitor("crude_area_decay", scale_invariant=True)
def _crude(ctx):
    """|A' + 2 pi| should not decrease as t increases."""
    if not ctx.oval:
        return None
    r = ctx.rec
    s = ctx.sel()
    t = r["t"][s]
    g = np.abs(r["area_rate"][s] + 2 * np.pi)
    # for each record, the smallest value seen at any later time
    later_min = np.minimum.accumulate(g[::-1])[::-1]
    return _Series(t, later_min / g - 1.0, TIME_SLACK)


@monitor("area_law", scale_invariant=True)
def _area_law(ctx):
    r = ctx.rec
    P = r["phi_integral"]
    return _Series(r["t"], -np.abs(r["area_rate_residual"]) / P, 1e-3)


@monitor("round_point", scale_invariant=True)
def _round(ctx):
    from .flow import rescaled_tail

    tail = rescaled_tail(ctx.traj)
    ratios = np.array([f.ratio for f in tail])
    devs = np.array([f.deviation for f in tail])
    monotone = bool(np.all(np.diff(devs) <= 1e-12 + 1e-3 * devs[:-1])) if devs.size > 1 else True
    return _Series(np.array([tail[-1].t]), np.array([0.01 - (ratios[-1] - 1.0)]), 0.0,
                   {"final_ratio": float(ratios[-1]), "frames": len(tail), "monotone": monotone})


@monitor("tip_grim")
def _tip(ctx):
    if not ctx.oval or ctx.traj.T_ext < 6:
        return None
    ds = [tip_grim_distance(ctx.traj, t) for t in (-6.0, -4.0, -2.0)]
    m = min(ds[1] - ds[0], ds[2] - ds[1]) / ds[2]
    return _Series(np.array([-2.0]), np.array([m]), 0.0, {"distances": ds, "times": [-6, -4, -2]})


def _records_dict(records) -> dict:
    return {c: record_array(records, c) for c in COLUMNS}


def _context(traj, t_floor, chou_window) -> _Ctx:
    R = traj.seed.get("R") if traj.seed.get("kind") == "oval" else None
    floor = t_floor if t_floor is not None else 1e-3 * traj.T_ext
    return _Ctx(traj, _records_dict(traj.records), _phi1(traj.speed), R, floor, chou_window)


KAPPA_LAMBDA_MONITORS = ("sturm", "pinching", "lambda_monotone")


def _series_for(name, ctx):
    fn, _ = MONITORS[name]
    if name in KAPPA_LAMBDA_MONITORS and not ctx.traj.kappa_lambda_checked:
        return None
    s = fn(ctx)
    if s is None or s.m.size == 0:
        return None
    return s


def _disc(series, ref_series) -> float:
    """Richardson-style error estimate of the worst margin: the change in it
    between the reference resolution and this one."""
    if ref_series is None:
        return 0.0
    return float(abs(np.min(series.m) - np.min(ref_series.m)))


def evaluate(traj, reference=None, monitors="all", chou_window=None, t_floor=None,
             fits: bool = True) -> Report:
    """Run the monitor set on ``traj``.

    ``reference`` is an optional run of the same problem at half the grid size;
    when given, each slack includes the change in worst margin between the two.
    """
    names = list(MONITORS) if monitors in ("all", None) else list(monitors)
    unknown = [n for n in names if n not in MONITORS]
    if unknown:
        raise KeyError(f"unknown monitors: {', '.join(unknown)}")
    ctx = _context(traj, t_floor, chou_window)
    rctx = None
    if reference is not None:
        ref_window = None
        if chou_window is not None:
            ref_window = chou_window
        rctx = _context(reference, t_floor, ref_window)
    bounds = []
    series = {}
    for name in names:
        inv = MONITORS[name][1]
        s = _series_for(name, ctx)
        if s is None:
            bounds.append(BoundReport(name, 0, 0.0, None, True, 0.0, 0.0, False, inv))
            continue
        series[name] = (s.t, s.m)
        disc = _disc(s, _series_for(name, rctx)) if rctx is not None else 0.0
        j = int(np.argmin(s.m))
        worst = float(s.m[j])
        slack = s.base + disc
        bounds.append(BoundReport(name, int(s.m.size), worst, float(s.t[j]), worst >= -slack,
                                  slack, disc, True, inv, s.detail))
    out_fits = []
    observations = []
    if fits and ctx.oval:
        for fn in (fit_area_asymptotics, fit_ell_asymptotics, fit_improved_speed):
            try:
                out_fits.append(fn(traj))
            except FitError as exc:
                observations.append({"name": fn.__name__, "error": str(exc)})
    observations.append(harnack_observation(traj))
    return Report(tuple(bounds), tuple(out_fits), tuple(observations), series)


def harnack_observation(traj) -> dict:
    """Largest relative decrease of phi in time at a fixed normal direction."""
    cfg = traj.config
    prev = None
    worst = 0.0
    for f in traj.frames:
        phi = curvatures_from_support(f, traj.speed, cfg.diff_backend, cfg.pole_band).phi
        if prev is not None:
            worst = max(worst, float(np.max((prev - phi) / prev)))
        prev = phi
    return {"name": "harnack_phi_nondecreasing", "max_relative_decrease": worst,
            "asserted": False}


# ---------------------------------------------------------------------------
# asymptotic fits


def _window(t, window, min_points=10):
    lo, hi = window
    s = (t >= lo) & (t <= hi)
    if s.sum() < min_points:
        raise FitError(f"window [{lo}, {hi}] holds {int(s.sum())} records, need at least {min_points}")
    return s, (float(t[s].min()), float(t[s].max()))


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(1, y.size - X.shape[1])
    cov = (resid @ resid / dof) * np.linalg.inv(X.T @ X)
    return coef, np.sqrt(np.maximum(np.diag(cov), 0.0)), float(np.linalg.norm(resid))


def fit_log_law(t, A, window=(-7.0, -2.0)) -> AsymptoticFit:
    """Least squares for ``A / (2 pi) + t = a log(-t) + b``."""
    t = np.asarray(t, dtype=float)
    A = np.asarray(A, dtype=float)
    s, eff = _window(t, window)
    y = A[s] / (2 * np.pi) + t[s]
    X = np.column_stack([np.log(-t[s]), np.ones(s.sum())])
    coef, se, rn = _lstsq(X, y)
    return AsymptoticFit("area_log_law", eff, {"a": float(coef[0]), "b": float(coef[1])},
                         {"a": float(se[0]), "b": float(se[1])}, {}, rn, int(s.sum()),
                         {"requested_window": list(window)})


def fit_area_asymptotics(traj, window=(-7.0, -2.0)) -> AsymptoticFit:
    t = record_array(traj.records, "t")
    A = record_array(traj.records, "A")
    fit = fit_log_law(t, A, window)
    return dataclasses.replace(fit, target={"phidot1": _target_phidot(traj)})


def _target_phidot(traj):
    sc = _speed_constants(traj.speed)
    return None if sc is None else sc.phidot1


def fit_ell_constant(t, ell, phidot1: float, window=(-3.5, -1.5)) -> AsymptoticFit:
    """Mean and linear drift of ``ell + t - phidot1 log(-t)`` over the window."""
    if window[1] > -1:
        raise FitError(f"window not ancient: upper end {window[1]} > -1")
    t = np.asarray(t, dtype=float)
    ell = np.asarray(ell, dtype=float)
    s, eff = _window(t, window)
    q = ell[s] + t[s] - phidot1 * np.log(-t[s])
    X = np.column_stack([np.ones(s.sum()), t[s]])
    coef, se, rn = _lstsq(X, q)
    return AsymptoticFit("ell_constant", eff, {"C": float(np.mean(q)), "drift": float(coef[1])},
                         {"C": float(np.std(q) / math.sqrt(q.size)), "drift": float(se[1])},
                         {"phidot1": phidot1}, rn, int(s.sum()), {"requested_window": list(window)})


def fit_ell_asymptotics(traj, window=(-3.5, -1.5)) -> AsymptoticFit:
    pd = _target_phidot(traj)
    if pd is None:
        raise FitError("speed constants unavailable")
    return fit_ell_constant(record_array(traj.records, "t"), record_array(traj.records, "ell"), pd, window)


def fit_speed_limit(t, cos_ratio_min, window=(-6.0, -2.0)) -> AsymptoticFit:
    """Fit ``(-t)(min phi/|cos| - 1) = L + b / (-t)`` and report L."""
    t = np.asarray(t, dtype=float)
    q = np.asarray(cos_ratio_min, dtype=float)
    s, eff = _window(t, window)
    m = (-t[s]) * (q[s] - 1.0)
    X = np.column_stack([np.ones(s.sum()), 1.0 / (-t[s])])
    coef, se, rn = _lstsq(X, m)
    return AsymptoticFit("improved_speed", eff, {"L": float(coef[0]), "b": float(coef[1])},
                         {"L": float(se[0]), "b": float(se[1])}, {}, rn, int(s.sum()),
                         {"requested_window": list(window)})


def fit_improved_speed(traj, window=(-6.0, -2.0)) -> AsymptoticFit:
    fit = fit_speed_limit(record_array(traj.records, "t"), record_array(traj.records, "cos_ratio_min"), window)
    return dataclasses.replace(fit, target={"phidot1": _target_phidot(traj)})
