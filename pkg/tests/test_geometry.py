import math

import numpy as np
import pytest

from pancake import resolve
from pancake.geometry import (
    GeometryError,
    LostConvexity,
    ProfileCurve,
    SupportProfile,
    angenent_oval,
    angenent_oval_curvatures,
    curvature_fields,
    curvatures_from_support,
    displacements,
    embed,
    grim_reaper,
    lambda_theta_residual,
    oval_a2,
    radius_of_curvature,
    slope,
    steiner_point,
    support_from_turning_angle,
    symmetrize,
    theta_grid,
)

H = resolve("mean", 2)


def perturbed(N, eps=0.01):
    th = theta_grid(N)
    return SupportProfile(1.0 + eps * np.cos(2 * th), 0.0, 2)


def oval_profile(t, N):
    return support_from_turning_angle(angenent_oval(t, N))


def rates(errors):
    e = np.asarray(errors)
    return e[:-1] / e[1:]


class TestDifferentiation:
    @pytest.mark.parametrize("backend", ["fd2", "spectral"])
    def test_exact_on_first_harmonics(self, backend):
        # translations carry no curvature: sigma = r + a cos + b sin has rho = r
        th = theta_grid(64)
        s = 2.0 + 0.3 * np.cos(th) - 0.2 * np.sin(th)
        np.testing.assert_allclose(radius_of_curvature(s, backend), 2.0, rtol=1e-10)
        np.testing.assert_allclose(slope(s, backend), -0.3 * np.sin(th) - 0.2 * np.cos(th), atol=1e-10)

    @pytest.mark.parametrize("backend,rate", [("fd2", 4), ("fd4", 16)])
    def test_finite_difference_order(self, backend, rate):
        errs = []
        for N in (64, 128, 256, 512):
            p = perturbed(N)
            errs.append(np.max(np.abs(radius_of_curvature(p.sigma, backend) - (1 - 0.03 * np.cos(2 * p.theta)))))
        assert np.all(np.abs(rates(errs) / rate - 1) < 0.02)

    def test_unknown_backend(self):
        with pytest.raises(GeometryError):
            radius_of_curvature(np.ones(8), "fd6")


class TestCurvatures:
    def test_circle(self):
        cd = curvatures_from_support(SupportProfile(np.full(64, 2.0), 0.0, 2), H)
        np.testing.assert_allclose(cd.kappa, 0.5, rtol=1e-14)
        np.testing.assert_allclose(cd.lam, 0.5, rtol=1e-14)
        np.testing.assert_allclose(cd.phi, 2.0 / 2.0, rtol=1e-14)

    @pytest.mark.parametrize("backend", ["fd4", "spectral"])
    def test_cos2_perturbation(self, backend):
        p = perturbed(512)
        rho, kappa, *_ = curvature_fields(p, backend)
        np.testing.assert_allclose(kappa, 1 / (1 - 0.03 * np.cos(2 * p.theta)), atol=1e-8, rtol=0)

    def test_oval_lambda_second_order(self):
        # away from the poles the generic formula converges at O(N^-2)
        errs = []
        for N in (1024, 2048, 4096):
            p = oval_profile(-4.0, N)
            _, _, lam, _, _ = curvature_fields(p)
            _, lam_exact = angenent_oval_curvatures(-4.0, p.theta)
            far = np.abs(np.cos(p.theta)) > 0.1
            errs.append(np.max(np.abs(lam - lam_exact)[far]))
        assert np.all(rates(errs) > 3.5)

    def test_oval_kappa_converges(self):
        errs = []
        for N in (1024, 2048, 4096):
            p = oval_profile(-4.0, N)
            k, _ = angenent_oval_curvatures(-4.0, p.theta)
            errs.append(np.max(np.abs(curvature_fields(p)[1] / k - 1)))
        assert np.all(rates(errs) > 3.5)

    def test_pole_nodes_exact(self):
        p = oval_profile(-2.0, 256)
        cd = curvatures_from_support(p, H)
        for j in (64, 192):
            assert cd.lam[j] == cd.kappa[j]
            assert cd.pole_mask[j]

    def test_pole_rule_agrees_on_sphere(self):
        p = SupportProfile(np.full(128, 1.5), 0.0, 2)
        _, kappa, lam, y, w = curvature_fields(p, pole_band=0)
        generic = w > 0
        np.testing.assert_allclose(lam[generic], kappa[generic], rtol=1e-13)

    def test_generic_rule_just_outside_band(self):
        errs = []
        for N in (256, 512, 1024, 2048):
            p = oval_profile(-1.0, N)
            _, kappa, lam, _, w = curvature_fields(p)
            j = N // 4 + int(np.argmax(w[N // 4:] >= 1))
            _, lam_exact = angenent_oval_curvatures(-1.0, p.theta[j:j + 1])
            errs.append(abs(lam[j] - lam_exact[0]))
        assert np.all(rates(errs) > 3.5)

    def test_lost_convexity(self):
        th = theta_grid(64)
        with pytest.raises(LostConvexity) as exc:
            curvatures_from_support(SupportProfile(1 + 0.5 * np.cos(4 * th), 0.0, 2), H)
        assert exc.value.node in range(64)

    def test_lambda_theta_residual_second_order(self):
        errs = []
        for N in (512, 1024, 2048):
            p = oval_profile(-1.0, N)
            r = lambda_theta_residual(p)
            far = np.abs(np.cos(p.theta)) > 0.1
            errs.append(np.max(np.abs(r[far])))
        assert np.all(rates(errs) > 3.2)

    def test_lambda_theta_residual_masks_band(self):
        r = lambda_theta_residual(oval_profile(-1.0, 256))
        assert np.isnan(r[64]) and np.isnan(r[192])
        assert np.isfinite(r[0]) and np.isfinite(r[128])

    def test_backends_agree(self):
        diffs = []
        for N in (256, 512, 1024):
            p = oval_profile(-1.0, N)
            k4 = curvature_fields(p, "fd4")[1]
            ks = curvature_fields(p, "spectral")[1]
            diffs.append(np.max(np.abs(k4 / ks - 1)))
        assert np.all(rates(diffs) > 3.5)


class TestEmbedding:
    def test_circle(self):
        c = embed(SupportProfile(np.full(64, 3.0), 0.0, 2))
        np.testing.assert_allclose(np.hypot(c.x, c.y), 3.0, rtol=1e-14)
        assert c.is_convex()

    def test_segment_rejected(self):
        th = theta_grid(64)
        with pytest.raises(GeometryError):
            embed(SupportProfile(np.abs(np.sin(th)), 0.0, 2))

    @pytest.mark.parametrize("make", [
        lambda N: SupportProfile(np.full(N, 1.0), 0.0, 2),
        lambda N: oval_profile(-2.0, N),
        perturbed,
    ], ids=["circle", "oval", "perturbed"])
    def test_support_round_trip(self, make):
        for N in (64, 256):
            p = make(N)
            back = support_from_turning_angle(embed(p))
            np.testing.assert_allclose(back.sigma, p.sigma, rtol=1e-2 / N**2)

    def test_curve_round_trip_second_order(self):
        errs = []
        for N in (256, 512, 1024):
            c = angenent_oval(-1.0, N)
            errs.append(np.max(np.abs(embed(support_from_turning_angle(c)).points - c.points)))
        assert np.all(rates(errs) > 3.5)

    def test_non_uniform_grid_rejected(self):
        c = angenent_oval(-1.0, 64)
        with pytest.raises(GeometryError):
            support_from_turning_angle(ProfileCurve(c.points, c.theta + 0.01))

    def test_non_convex_rejected(self):
        c = angenent_oval(-1.0, 64)
        pts = c.points.copy()
        pts[10] *= 0.5
        with pytest.raises(GeometryError):
            support_from_turning_angle(ProfileCurve(pts, c.theta))

    def test_grid_size(self):
        with pytest.raises(GeometryError):
            angenent_oval(-1.0, 30)

    def test_steiner_point_tracks_translation(self):
        th = theta_grid(128)
        shift = np.array([0.3, -0.2])
        s = 1.0 + 0.05 * np.cos(2 * th) + np.stack([np.sin(th), -np.cos(th)], -1) @ shift
        np.testing.assert_allclose(steiner_point(s), shift, atol=1e-14)

    def test_symmetrize_is_projection(self):
        rng = np.random.default_rng(1)
        s = 1 + 0.01 * rng.standard_normal(64)
        once = symmetrize(s)
        np.testing.assert_allclose(symmetrize(once), once, rtol=0, atol=1e-15)
        assert SupportProfile(once, 0.0, 2).is_symmetric()


class TestOval:
    def test_implicit_equation(self):
        for t in (-0.5, -2.0, -8.0):
            c = angenent_oval(t, 512)
            res = np.cos(c.x) - math.exp(t) * np.cosh(c.y)
            assert np.max(np.abs(res)) < 1e-10

    def test_unit_a(self):
        t = -math.log(2) / 2
        assert oval_a2(t) == pytest.approx(1.0, rel=1e-14)
        c = angenent_oval(t, 64)
        assert c.x[16] == pytest.approx(math.pi / 4, rel=1e-14)

    @pytest.mark.parametrize("t", [-1.0, -4.0, -8.0])
    def test_ell_bounds(self, t):
        ell = angenent_oval(t, 256).y[128]
        assert -t <= ell <= -t + math.log(2)

    def test_ell_limit(self):
        vals = [angenent_oval(t, 64).y[32] + t for t in (-5.0, -10.0, -20.0)]
        assert abs(vals[-1] - math.log(2)) < 1e-12
        assert abs(vals[0] - math.log(2)) > abs(vals[1] - math.log(2)) > abs(vals[2] - math.log(2))

    def test_positive_time_rejected(self):
        with pytest.raises(GeometryError):
            angenent_oval(0.0, 64)

    def test_exact_curvatures(self):
        # the profile's curvature is sqrt(cos^2 + a^2); at the tip a^2 + 1 under the root
        k, lam = angenent_oval_curvatures(-1.0, np.array([math.pi / 2, math.pi]))
        a2 = oval_a2(-1.0)
        assert k[0] == pytest.approx(math.sqrt(a2), rel=1e-14)
        assert lam[0] == k[0]
        assert k[1] == pytest.approx(math.sqrt(1 + a2), rel=1e-14)


class TestGrim:
    def test_origin(self):
        g = grim_reaper(0.0, 201)
        assert g.x[100] == 0.0 and g.y[100] == 0.0

    def test_sec_two(self):
        g = grim_reaper(0.0, 7, delta=math.pi / 6)
        assert g.x[-1] == pytest.approx(math.pi / 3, rel=1e-15)
        assert g.y[-1] == pytest.approx(math.log(2), rel=1e-14)

    def test_translation(self):
        a, b = grim_reaper(0.3, 101), grim_reaper(1.8, 101)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_allclose(b.y - a.y, 1.5, atol=4e-15)


class TestDisplacements:
    def test_circle(self):
        errs = []
        for N in (64, 128, 256):
            d = displacements(SupportProfile(np.full(N, 2.0), 0.0, 2))
            assert d.h == d.ell == 2.0
            assert d.rin == pytest.approx(2.0, rel=1e-14) and d.rout == pytest.approx(2.0, rel=1e-14)
            assert d.A_support == pytest.approx(4 * math.pi, rel=1e-14)
            errs.append(abs(d.A - 4 * math.pi))
        assert np.all(np.abs(rates(errs) - 4) < 0.05)

    def test_oval_deep_time(self):
        d = displacements(angenent_oval(-8.0, 1024))
        assert 8.0 <= d.ell <= 8.0 + math.log(2)
        assert math.pi / 2 * (1 - math.exp(-8.0)) <= d.h <= math.pi / 2

    def test_area_forms_agree(self):
        errs = []
        for N in (256, 512, 1024):
            d = displacements(oval_profile(-1.0, N))
            errs.append(abs(d.A - d.A_support))
        assert np.all(rates(errs) > 3.5)

    def test_sandwich(self):
        for t in (-0.5, -2.0, -6.0):
            d = displacements(oval_profile(t, 512))
            assert 2 * d.h * d.ell <= d.A <= 4 * d.h * d.ell
            assert d.h <= d.rout and d.ell <= d.rout

    def test_curve_and_support_agree(self):
        c = angenent_oval(-2.0, 512)
        a, b = displacements(c), displacements(support_from_turning_angle(c))
        assert a.h == pytest.approx(b.h, rel=1e-12)
        assert a.ell == pytest.approx(b.ell, rel=1e-12)
        assert a.A == pytest.approx(b.A, rel=1e-4)

    def test_type_error(self):
        with pytest.raises(TypeError):
            displacements(np.ones(8))
