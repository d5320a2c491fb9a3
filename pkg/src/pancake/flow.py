"""Integration of the support-function flow ``d sigma / dt = -phi(kappa, lambda)``."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import (
    BACKENDS,
    DEFAULT_BACKEND,
    LostConvexity,
    SupportProfile,
    angenent_oval,
    curvatures_from_support,
    embed,
    pole_blend_weights,
    radius_of_curvature,
    steiner_point,
    support_from_turning_angle,
    symmetrize,
    theta_grid,
)
from .speeds import SpeedFunction, constants

__all__ = [
    "FlowError",
    "FlowConfig",
    "Trajectory",
    "RescaledFrame",
    "step",
    "run",
    "circle",
    "evolve_from_oval",
    "rescaled_tail",
    "write_trajectory",
]

CSV_FMT = "%.12e"


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    """Numerical parameters of a run.

    ``record_every = 0`` picks a stride of about ``250 (N / 512)^2`` steps,
    which keeps the number of recorded frames roughly independent of N.
    """

    N: int = 512
    cfl: float = 0.2
    scheme: str = "explicit-rk2"
    symmetry_enforce: bool = True
    stop_kappa: float = 1e3
    stop_area: float = 1e-4
    record_every: int = 0
    diff_backend: str = DEFAULT_BACKEND
    pole_band: int = 3
    max_steps: int = 50_000_000
    max_seconds: float | None = None
    allow_kappa_below_lambda: bool = False
    pure_python: bool = False
    frames_saved: int = 40

    def __post_init__(self):
        if self.N < 8 or self.N % 4:
            raise FlowError(f"N must be a multiple of 4, got {self.N}")
        if not 0 < self.cfl <= 0.5:
            raise FlowError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if self.scheme != "explicit-rk2":
            raise FlowError(f"unsupported scheme {self.scheme!r}; only explicit-rk2 is implemented")
        if self.diff_backend not in BACKENDS:
            raise FlowError(f"unknown diff_backend {self.diff_backend!r}")

    @property
    def stride(self) -> int:
        if self.record_every > 0:
            return self.record_every
        return max(1, int(round(250 * (self.N / 512) ** 2)))

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded frames of one run.

    ``frames[i].t`` is simulation time; ``times`` is re-indexed so the
    extrapolated extinction sits at 0.
    """

    frames: tuple
    speed: SpeedFunction
    config: FlowConfig
    T_ext: float
    T_ext_fit: float
    status: str
    steps: int
    seed: dict = field(default_factory=dict)
    kernel: str = "python"
    kappa_lambda_checked: bool = True
    records: tuple = ()

    @property
    def speed_id(self) -> str:
        return self.speed.name

    @property
    def sim_times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames])

    @property
    def times(self) -> np.ndarray:
        return self.sim_times - self.T_ext

    @property
    def T_ext_error(self) -> float:
        return abs(self.T_ext - self.T_ext_fit)

    def frame_at(self, t: float) -> SupportProfile:
        """Recorded frame nearest to re-indexed time ``t``."""
        return self.frames[int(np.argmin(np.abs(self.times - t)))]

    def with_records(self) -> "Trajectory":
        from .diagnostics import compute_records

        return dataclasses.replace(self, records=tuple(compute_records(self)))

    def rescaled(self, s: float) -> "Trajectory":
        """Parabolic rescaling: lengths by ``s``, times by ``s**2``."""
        frames = tuple(f.replace(sigma=s * f.sigma, t=s * s * f.t) for f in self.frames)
        out = dataclasses.replace(self, frames=frames, T_ext=s * s * self.T_ext,
                                  T_ext_fit=s * s * self.T_ext_fit, records=())
        return out.with_records()


def _kernel_args(speed: SpeedFunction, cfg: FlowConfig):
    N = cfg.N
    th = theta_grid(N)
    w = pole_blend_weights(N, cfg.pole_band)
    if speed.is_native:
        kinds = np.array([1 if t.kind == "gauss" else 0 for t in speed.terms], dtype=np.int64)
        rs = np.array([t.r for t in speed.terms], dtype=float)
        ws = np.array([t.weight * speed.normalization for t in speed.terms], dtype=float)
        custom = None
    else:
        kinds = np.zeros(0, dtype=np.int64)
        rs = np.zeros(0)
        ws = np.zeros(0)

        def custom(k, l):
            return speed._reduced(k, l), speed.grad_reduced(k, l)[0]

    return dict(kinds=kinds, rs=rs, ws=ws, w=w, c=np.cos(th), sn=np.sin(th), custom=custom)


def _call(advance, name, sigma, t, max_steps, t_end, speed, cfg, args, dt_fixed=0.0,
          stop_kappa=None, stop_area=None):
    extra = {}
    if name == "python":
        extra["custom"] = args["custom"]
    return advance(sigma, t, max_steps, t_end, speed.n, args["kinds"], args["rs"], args["ws"],
                   kernels.BACKEND_CODES[cfg.diff_backend], args["w"], args["c"], args["sn"],
                   cfg.cfl, cfg.symmetry_enforce,
                   cfg.stop_kappa if stop_kappa is None else stop_kappa,
                   cfg.stop_area if stop_area is None else stop_area, dt_fixed, **extra)


def _raise_for(status: int, node: int, sigma: np.ndarray, t: float, backend: str):
    if status == 3:
        rho = radius_of_curvature(sigma, backend)
        raise LostConvexity(node, rho[node], t)
    if status == 4:
        raise FlowError(f"non-finite curvature or speed at node {node}, t={t:.6g} (dt too large?)")


def stable_dt(profile: SupportProfile, speed: SpeedFunction, backend: str = DEFAULT_BACKEND,
              pole_band: int = 3) -> float:
    """Largest dt for which the explicit midpoint step is linearly stable (cfl = 0.5)."""
    cd = curvatures_from_support(profile, speed, backend, pole_band)
    gk, _ = speed.grad_reduced(cd.kappa, cd.lam)
    m = float(np.max(gk * cd.kappa ** 2))
    d = 2 * np.pi / profile.N
    return np.inf if m <= 0 else 0.5 * d * d / m


def step(profile: SupportProfile, speed: SpeedFunction, dt: float,
         config: FlowConfig | None = None) -> SupportProfile:
    """One explicit midpoint step of size ``dt`` followed by the symmetry projection."""
    cfg = config or FlowConfig(N=profile.N)
    if cfg.N != profile.N:
        cfg = dataclasses.replace(cfg, N=profile.N)
    if not dt > 0:
        raise FlowError(f"dt must be positive, got {dt}")
    limit = stable_dt(profile, speed, cfg.diff_backend, cfg.pole_band)
    if dt > limit:
        raise FlowError(f"dt too large: {dt:.3e} exceeds the stability limit {limit:.3e}")
    args = _kernel_args(speed, cfg)
    advance, name = kernels.get_advance(cfg.diff_backend, speed.is_native, cfg.pure_python)
    sigma = np.array(profile.sigma, dtype=float)
    t, steps, status, node, _ = _call(advance, name, sigma, profile.t, 1, np.nan, speed, cfg, args,
                                      dt_fixed=dt, stop_kappa=np.inf, stop_area=-np.inf)
    _raise_for(status, node, sigma, t, cfg.diff_backend)
    return profile.replace(sigma=sigma, t=t)


def _area_rate(profile: SupportProfile, speed, cfg) -> tuple[float, float]:
    cd = curvatures_from_support(profile, speed, cfg.diff_backend, cfg.pole_band)
    d = 2 * np.pi / profile.N
    A = 0.5 * d * float(np.sum(profile.sigma * cd.rho))
    return A, d * float(np.sum(cd.phi * cd.rho))


def _extinction_time(frames, speed, cfg) -> tuple[float, float]:
    """Two estimates: rate extrapolation from the last frame, and a linear fit
    of A(t) over its final decade."""
    A_last, rate = _area_rate(frames[-1], speed, cfg)
    T_rate = frames[-1].t + A_last / rate
    tail = []
    for f in reversed(frames):
        A, _ = _area_rate(f, speed, cfg)
        if A > 10 * A_last:
            break
        tail.append((f.t, A))
    if len(tail) >= 3:
        ts, As = np.array(tail).T
        slope_, icpt = np.polyfit(ts, As, 1)
        T_fit = -icpt / slope_ if slope_ < 0 else T_rate
    else:
        T_fit = T_rate
    return float(T_rate), float(T_fit)


def run(initial: SupportProfile, speed: SpeedFunction, config: FlowConfig | None = None,
        seed: dict | None = None) -> Trajectory:
    """Integrate from ``initial`` until the curvature or area stop triggers."""
    cfg = config or FlowConfig(N=initial.N)
    if cfg.N != initial.N:
        raise FlowError(f"profile has N={initial.N} but config has N={cfg.N}")
    if speed.n != initial.n:
        raise FlowError(f"speed is for n={speed.n} but profile has n={initial.n}")
    cd = curvatures_from_support(initial, speed, cfg.diff_backend, cfg.pole_band)
    kmax = float(np.max(cd.kappa))
    gap = float(np.min(cd.kappa - cd.lam))
    if gap < -1e-8 * kmax and not cfg.allow_kappa_below_lambda:
        j = int(np.argmin(cd.kappa - cd.lam))
        raise FlowError(f"initial profile violates kappa >= lambda at node {j} "
                        f"(kappa - lambda = {gap:.3e}); set allow_kappa_below_lambda to override")
    sigma = np.array(initial.sigma, dtype=float)
    if cfg.symmetry_enforce:
        sigma = symmetrize(sigma)
    args = _kernel_args(speed, cfg)
    advance, name = kernels.get_advance(cfg.diff_backend, speed.is_native, cfg.pure_python)
    t = float(initial.t)
    frames = [initial.replace(sigma=sigma.copy(), t=t)]
    total = 0
    start = time.monotonic()
    while True:
        t, steps, status, node, _ = _call(advance, name, sigma, t, cfg.stride, np.nan, speed, cfg, args)
        total += steps
        _raise_for(status, node, sigma, t, cfg.diff_backend)
        if steps:
            frames.append(initial.replace(sigma=sigma.copy(), t=t))
        if status in (1, 2):
            break
        if total >= cfg.max_steps or (cfg.max_seconds and time.monotonic() - start > cfg.max_seconds):
            raise FlowError(f"no extinction within budget ({total} steps, t={t:.6g})")
    T_rate, T_fit = _extinction_time(frames, speed, cfg)
    traj = Trajectory(tuple(frames), speed, cfg, T_rate, T_fit, kernels.STATUS[status], total,
                      seed or {"kind": "profile"}, name, gap >= -1e-8 * kmax)
    return traj.with_records()


def circle(r0: float, N: int, n: int = 2) -> SupportProfile:
    return SupportProfile(np.full(N, float(r0)), 0.0, n)


def evolve_from_oval(R: float, speed: SpeedFunction, config: FlowConfig | None = None) -> Trajectory:
    """Run from the rotated oval time slice at t = -R."""
    if not R > 0:
        raise FlowError(f"R must be positive, got {R}")
    cfg = config or FlowConfig()
    seed = support_from_turning_angle(angenent_oval(-R, cfg.N), 0.0, speed.n)
    return run(seed, speed, cfg, {"kind": "oval", "R": float(R)})


@dataclass(frozen=True, eq=False)
class RescaledFrame:
    t: float
    tau: float
    sigma: np.ndarray

    @property
    def ratio(self) -> float:
        return float(np.max(self.sigma) / np.min(self.sigma))

    @property
    def deviation(self) -> float:
        return float(np.max(np.abs(self.sigma - 1.0)))


def rescaled_tail(traj: Trajectory, decades: float = 1.0) -> list[RescaledFrame]:
    """Frames with ``T_ext - t`` within ``decades`` of the last one, centred and
    divided by the radius ``sqrt(2 phi_1 (T_ext - t))`` of the shrinking sphere."""
    phi1 = float(traj.speed._reduced(np.array(1.0), np.array(1.0)))
    taus = traj.T_ext - traj.sim_times
    last = taus[-1]
    if not last > 0:
        raise FlowError("trajectory did not stop before the extrapolated extinction time")
    out = []
    th = theta_grid(traj.config.N)
    nu = np.stack([np.sin(th), -np.cos(th)], axis=-1)
    for f, tau in zip(traj.frames, taus):
        if tau <= last * 10 ** decades:
            centred = f.sigma - nu @ steiner_point(f.sigma)
            out.append(RescaledFrame(f.t - traj.T_ext, float(tau), centred / np.sqrt(2 * phi1 * tau)))
    return out


# ---------------------------------------------------------------------------
# serialization


def _write_csv(path: Path, header: list[str], rows: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, np.atleast_2d(rows), fmt=CSV_FMT, delimiter=",")


def saved_frame_indices(traj: Trajectory) -> list[int]:
    n = len(traj.frames)
    k = min(n, max(2, traj.config.frames_saved))
    return sorted(set(np.linspace(0, n - 1, k).round().astype(int).tolist()))


def frame_table(profile: SupportProfile, speed: SpeedFunction, cfg: FlowConfig) -> np.ndarray:
    """Columns theta, sigma, x, y, kappa, lambda, phi."""
    cd = curvatures_from_support(profile, speed, cfg.diff_backend, cfg.pole_band)
    pts = embed(profile, cfg.diff_backend).points
    return np.column_stack([profile.theta, profile.sigma, pts[:, 0], pts[:, 1], cd.kappa, cd.lam, cd.phi])


def meta(traj: Trajectory) -> dict:
    try:
        sc = constants(traj.speed).to_json()
    except Exception as exc:  # degenerate speeds still get a trajectory
        sc = {"error": str(exc)}
    return {
        "speed_id": traj.speed_id,
        "speed": traj.speed.to_json(),
        "constants": sc,
        "config": traj.config.to_json(),
        "seed": traj.seed,
        "T_ext": traj.T_ext,
        "T_ext_fit": traj.T_ext_fit,
        "status": traj.status,
        "steps": traj.steps,
        "frames": len(traj.frames),
        "kernel": traj.kernel,
        "kappa_lambda_checked": traj.kappa_lambda_checked,
    }


def write_trajectory(traj: Trajectory, out_dir, extra: dict | None = None) -> Path:
    """Write ``meta.json``, ``frames.csv`` and ``diagnostics.csv`` into ``out_dir``.

    ``extra`` entries are merged into ``meta.json``.
    """
    from .diagnostics import _clean, write_diagnostics_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(_clean({**meta(traj), **(extra or {})}), fh, indent=2, sort_keys=True)
        fh.write("\n")
    blocks = []
    for i in saved_frame_indices(traj):
        f = traj.frames[i]
        tab = frame_table(f, traj.speed, traj.config)
        lead = np.column_stack([np.full(f.N, i), np.full(f.N, f.t), np.full(f.N, f.t - traj.T_ext)])
        blocks.append(np.hstack([lead, tab]))
    _write_csv(out / "frames.csv",
               ["frame", "t_sim", "t", "theta", "sigma", "x", "y", "kappa", "lambda", "phi"],
               np.vstack(blocks))
    write_diagnostics_csv(traj.records, out / "diagnostics.csv")
    return out
