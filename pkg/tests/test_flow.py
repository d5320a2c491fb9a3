import json
import math

import numpy as np
import pytest

from conftest import circle_run, oval_run
from pancake import FlowConfig, evolve_from_oval, resolve, rescaled_tail, run, step
from pancake.diagnostics import phi_evolution_residual
from pancake.flow import FlowError, circle, stable_dt, write_trajectory
from pancake.geometry import (
    LostConvexity,
    SupportProfile,
    angenent_oval,
    curvatures_from_support,
    embed,
    radius_of_curvature,
    support_from_turning_angle,
    symmetrize,
    theta_grid,
)
from pancake.speeds import custom_speed

H = resolve("mean", 2)
P2 = resolve("pr:2", 2)


def hausdorff(a, b):
    P, Q = embed(a).points, embed(b).points
    D = np.hypot(P[:, None, 0] - Q[None, :, 0], P[:, None, 1] - Q[None, :, 1])
    return max(D.min(axis=0).max(), D.min(axis=1).max())


class TestStep:
    def test_circle_radial_ode(self):
        out = step(circle(1.0, 64), H, 1e-4)
        np.testing.assert_allclose(out.sigma, math.sqrt(1 - 4e-4), atol=1e-8)
        assert out.t == 1e-4

    def test_symmetric_output(self):
        p = support_from_turning_angle(angenent_oval(-2.0, 128))
        out = step(p, H, 0.5 * stable_dt(p, H))
        assert out.is_symmetric(0.0)

    def test_zero_speed_is_identity(self):
        zero = custom_speed("zero", 2, lambda z: np.zeros(z.shape[:-1]))
        p = support_from_turning_angle(angenent_oval(-1.0, 64))
        p = p.replace(sigma=symmetrize(p.sigma))
        out = step(p, zero, 1e-3)
        np.testing.assert_array_equal(out.sigma, p.sigma)

    def test_dt_too_large(self):
        p = circle(1.0, 64)
        with pytest.raises(FlowError, match="dt too large"):
            step(p, H, 2 * stable_dt(p, H))

    def test_non_positive_dt(self):
        with pytest.raises(FlowError):
            step(circle(1.0, 64), H, 0.0)

    def test_lost_convexity(self):
        th = theta_grid(64)
        with pytest.raises(LostConvexity):
            step(SupportProfile(1 + 0.5 * np.cos(4 * th), 0.0, 2), H, 1e-6)

    def test_spectral_and_custom_paths(self):
        p = support_from_turning_angle(angenent_oval(-1.0, 64))
        dt = 0.25 * stable_dt(p, H)
        a = step(p, H, dt, FlowConfig(N=64, diff_backend="spectral"))
        wrapped = custom_speed("mean-wrapped", 2, lambda z: z.sum(axis=-1))
        b = step(p, wrapped, dt)
        c = step(p, H, dt)
        np.testing.assert_allclose(b.sigma, c.sigma, rtol=1e-12)
        assert np.max(np.abs(a.sigma - c.sigma)) < 1e-3


class TestRun:
    def test_circle_mean(self, mean_circle):
        assert mean_circle.T_ext == pytest.approx(0.25, abs=1e-3)
        err = max(np.max(np.abs(f.sigma - math.sqrt(1 - 4 * f.t))) for f in mean_circle.frames)
        assert err <= 1e-4

    def test_circle_pr2(self):
        tr = circle_run("pr:2", 256)
        assert tr.T_ext == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-3)

    def test_frames(self, mean_circle):
        t = mean_circle.sim_times
        assert np.all(np.diff(t) > 0)
        assert mean_circle.T_ext >= t[-1]
        assert all(np.all(radius_of_curvature(f.sigma) > 0) for f in mean_circle.frames)
        assert mean_circle.status in ("stop_kappa", "stop_area")

    def test_time_step_order(self):
        # the circle is exact in space, so the remaining error is the time stepping
        errs = [abs(run(circle(1.0, 64), H, FlowConfig(N=64, cfl=c)).T_ext - 0.25) for c in (0.2, 0.1)]
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)

    def test_kappa_lambda_precondition(self):
        th = theta_grid(64)
        # elongated across the axis, so the rotational curvature dominates at the tip
        p = SupportProfile(1 - 0.05 * np.cos(2 * th), 0.0, 2)
        cd = curvatures_from_support(p, H)
        assert np.min(cd.kappa - cd.lam) < 0
        with pytest.raises(FlowError, match="kappa >= lambda"):
            run(p, H, FlowConfig(N=64))
        tr = run(p, H, FlowConfig(N=64, allow_kappa_below_lambda=True))
        assert not tr.kappa_lambda_checked

    def test_budget(self):
        with pytest.raises(FlowError, match="no extinction"):
            run(circle(1.0, 64), H, FlowConfig(N=64, max_steps=10, record_every=5))

    def test_mismatched_config(self):
        with pytest.raises(FlowError):
            run(circle(1.0, 64), H, FlowConfig(N=128))

    @pytest.mark.parametrize("kw", [dict(N=30), dict(cfl=0.6), dict(cfl=0.0), dict(scheme="semi-implicit"),
                                    dict(diff_backend="fd6")])
    def test_config_validation(self, kw):
        with pytest.raises(FlowError):
            FlowConfig(**kw)

    def test_python_fallback_matches(self):
        a = run(circle(1.0, 64), H, FlowConfig(N=64))
        b = run(circle(1.0, 64), H, FlowConfig(N=64, pure_python=True))
        assert b.kernel == "python"
        assert a.T_ext == pytest.approx(b.T_ext, rel=1e-12)

    def test_deterministic(self):
        a = run(circle(1.0, 64), P2, FlowConfig(N=64))
        b = run(circle(1.0, 64), P2, FlowConfig(N=64))
        assert a.T_ext == b.T_ext
        for fa, fb in zip(a.frames, b.frames):
            np.testing.assert_array_equal(fa.sigma, fb.sigma)

    def test_rescaled_parabolically(self, mean_circle):
        r = mean_circle.rescaled(2.0)
        assert r.T_ext == 4 * mean_circle.T_ext
        np.testing.assert_allclose(r.frames[-1].sigma, 2 * mean_circle.frames[-1].sigma)
        np.testing.assert_allclose(r.times, 4 * mean_circle.times)


class TestOvalRun:
    def test_extinction_time_bounds(self, mean_oval):
        R, phi1 = 8.0, 2.0
        assert R / (2 * phi1) * (1 - math.exp(-R)) <= mean_oval.T_ext <= R + math.log(2)
        assert mean_oval.seed == {"kind": "oval", "R": 8.0}

    def test_hl_at_minus_one(self, mean_oval):
        f = mean_oval.frame_at(-1.0)
        t = f.t - mean_oval.T_ext
        hl = f.sigma[f.N // 4] * max(f.sigma[f.N // 2], f.sigma[0])
        assert -(math.pi / 2) * t <= hl <= -math.pi * 2 * t

    def test_kappa_ge_lambda(self, mean_oval):
        for f in mean_oval.frames[:: max(1, len(mean_oval.frames) // 50)]:
            cd = curvatures_from_support(f, H)
            assert np.min(cd.kappa - cd.lam) >= -1e-8 * np.max(cd.kappa)

    def test_approximators_converge_in_R(self):
        runs = {R: oval_run("mean", R, 256) for R in (2.0, 4.0, 8.0)}
        d2 = hausdorff(runs[2.0].frame_at(-1.0), runs[8.0].frame_at(-1.0))
        d4 = hausdorff(runs[4.0].frame_at(-1.0), runs[8.0].frame_at(-1.0))
        assert d4 < d2

    def test_round_point(self, mean_oval):
        tail = rescaled_tail(mean_oval)
        assert tail[-1].ratio <= 1.01
        devs = np.array([f.deviation for f in tail])
        assert devs[-1] < devs[0]

    def test_fd4_rejects_under_resolved_seed(self):
        # the tip of the R = 16 seed spans too few nodes for the 5-point stencil
        with pytest.raises(LostConvexity):
            evolve_from_oval(16.0, H, FlowConfig(N=256, diff_backend="fd4"))
        assert oval_run("mean", 16.0, 256).T_ext > 16 / 4

    def test_invalid_R(self):
        with pytest.raises(FlowError):
            evolve_from_oval(0.0, H, FlowConfig(N=64))


class TestRescaledTail:
    def test_circle_is_round(self, mean_circle):
        tail = rescaled_tail(mean_circle)
        assert len(tail) >= 2
        assert max(abs(f.sigma - 1).max() for f in tail) <= 1e-3


class TestPdeResidual:
    @pytest.mark.parametrize("speed", [H, P2], ids=["mean", "pr2"])
    def test_second_order_on_oval(self, speed):
        errs = []
        for N in (64, 128, 256):
            p = support_from_turning_angle(angenent_oval(-1.0, N))
            dt = 0.05 * stable_dt(p, speed)
            q = step(step(p, speed, dt), speed, dt)
            errs.append(np.nanmax(np.abs(phi_evolution_residual(p, q, speed))))
        r = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(r > 3.5)

    def test_circle(self):
        p = circle(1.0, 64)
        dt = 0.05 * stable_dt(p, H)
        q = step(step(p, H, dt), H, dt)
        assert np.nanmax(np.abs(phi_evolution_residual(p, q, H))) < 1e-6

    def test_requires_forward_time(self):
        p = circle(1.0, 64)
        with pytest.raises(ValueError):
            phi_evolution_residual(p, p, H)


class TestSerialization:
    def test_artifacts(self, tmp_path):
        tr = circle_run("mean", 64)
        out = write_trajectory(tr, tmp_path / "c", {"note": "x"})
        meta = json.loads((out / "meta.json").read_text(encoding="utf-8"))
        assert meta["T_ext"] == tr.T_ext and meta["note"] == "x"
        assert meta["config"]["N"] == 64
        lines = (out / "frames.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "frame,t_sim,t,theta,sigma,x,y,kappa,lambda,phi"
        cells = lines[1].split(",")
        assert len(cells) == 10 and all("e" in c for c in cells)
        diag = (out / "diagnostics.csv").read_text(encoding="utf-8").splitlines()
        assert diag[0].startswith("t,h,ell,A,rin,rout,phi_min,phi_max,min_kappa_minus_lambda,max_ratio,"
                                  "lambda_integral,lambda2_over_kappa_integral,tip_grim_dist,area_rate_residual")
        assert len(diag) == len(tr.records) + 1
