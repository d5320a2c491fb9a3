"""Support-function geometry of O(n)-invariant convex profile curves.

Conventions
-----------
The profile curve lives in the (x, y) plane; x is the rotation axis e1 and the
slab direction, y is the radial coordinate.  Curves are traversed counter-
clockwise and parametrized by turning angle theta, so the unit tangent is
``tau = (cos theta, sin theta)`` and the outward normal is
``nu = (sin theta, -cos theta)``.  With these conventions

* the support function is ``sigma = <gamma, nu>`` and ``gamma = sigma nu + sigma_theta tau``,
* the radius of curvature is ``sigma_theta_theta + sigma = 1 / kappa``,
* the rotational curvature is ``lambda = -cos(theta) / y`` (positive on convex
  curves symmetric about the axis) and ``lambda = kappa`` at the poles
  theta = pi/2, 3 pi/2 where the curve meets the axis,
* theta = pi/2 is the point (h, 0) and theta = pi the top point (0, ell).

Grids are uniform: ``theta_j = 2 pi j / N`` with N a multiple of 4 so both
poles and both tips are nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .speeds import SpeedFunction

__all__ = [
    "BACKENDS",
    "GeometryError",
    "LostConvexity",
    "SupportProfile",
    "CurvatureData",
    "ProfileCurve",
    "OpenCurve",
    "Displacements",
    "theta_grid",
    "radius_of_curvature",
    "slope",
    "pole_blend_weights",
    "symmetrize",
    "curvature_fields",
    "curvatures_from_support",
    "lambda_theta_residual",
    "embed",
    "support_from_turning_angle",
    "angenent_oval",
    "angenent_oval_curvatures",
    "oval_a2",
    "grim_reaper",
    "displacements",
    "steiner_point",
]

# fd2 is exact on 1, cos, sin and tolerates under-resolved seeds; fd4 does not
BACKENDS = ("fd2", "fd4", "spectral")
DEFAULT_BACKEND = "fd2"


class GeometryError(ValueError):
    pass


class LostConvexity(GeometryError):
    """The discrete radius of curvature is non-positive somewhere."""

    def __init__(self, node: int, value: float, t: float | None = None):
        self.node = int(node)
        self.value = float(value)
        self.t = t
        where = f" at t={t:.6g}" if t is not None else ""
        super().__init__(f"lost convexity at node {self.node} (sigma_tt + sigma = {self.value:.3e}){where}")


def theta_grid(N: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(N) / N


def _check_grid(N: int):
    if N < 8 or N % 4:
        raise GeometryError(f"grid size must be a multiple of 4 (>= 8), got {N}")


# ---------------------------------------------------------------------------
# periodic differentiation backends
#
# fd2 is the conservative three-point scheme: it is exact on span{1, cos, sin},
# so translations never create curvature, and it keeps sigma_tt + sigma >= 0
# for any sampled support function (it is the edge length of the circumscribed
# polygon divided by the angle step).  fd4 and spectral are higher order but
# oscillate at unresolved faces.


def radius_of_curvature(sigma: np.ndarray, backend: str = DEFAULT_BACKEND) -> np.ndarray:
    """Discrete ``sigma_theta_theta + sigma``."""
    N = sigma.shape[-1]
    d = 2 * np.pi / N
    if backend == "fd2":
        sp = np.roll(sigma, -1)
        sm = np.roll(sigma, 1)
        return (sp + sm - 2 * np.cos(d) * sigma) / (2 * (1 - np.cos(d)))
    if backend == "fd4":
        d2 = (-np.roll(sigma, -2) + 16 * np.roll(sigma, -1) - 30 * sigma
              + 16 * np.roll(sigma, 1) - np.roll(sigma, 2)) / (12 * d * d)
        return d2 + sigma
    if backend == "spectral":
        k = np.fft.rfftfreq(N, 1.0 / N)
        return np.fft.irfft(-(k * k) * np.fft.rfft(sigma), N) + sigma
    raise GeometryError(f"unknown differentiation backend {backend!r}")


def slope(sigma: np.ndarray, backend: str = DEFAULT_BACKEND) -> np.ndarray:
    """Discrete ``sigma_theta``."""
    N = sigma.shape[-1]
    d = 2 * np.pi / N
    if backend == "fd2":
        return (np.roll(sigma, -1) - np.roll(sigma, 1)) / (2 * np.sin(d))
    if backend == "fd4":
        return (-np.roll(sigma, -2) + 8 * np.roll(sigma, -1)
                - 8 * np.roll(sigma, 1) + np.roll(sigma, 2)) / (12 * d)
    if backend == "spectral":
        k = np.fft.rfftfreq(N, 1.0 / N)
        ik = 1j * k
        if N % 2 == 0:
            ik[-1] = 0.0
        return np.fft.irfft(ik * np.fft.rfft(sigma), N)
    raise GeometryError(f"unknown differentiation backend {backend!r}")


def pole_blend_weights(N: int, band: int = 3) -> np.ndarray:
    """Weight of the generic ``-cos/y`` formula; 0 at the poles, 1 outside the band.

    Inside the band ``|cos theta| < sin(band * dtheta)`` the rotational curvature
    is ``kappa (1 - w) + lambda_generic w`` with ``w = |cos theta| / sin(band dtheta)``.
    """
    th = theta_grid(N)
    c = np.abs(np.cos(th))
    pole = c < 1e-12
    if band <= 0:
        return np.where(pole, 0.0, 1.0)
    w = np.clip(c / np.sin(band * 2 * np.pi / N), 0.0, 1.0)
    w[pole] = 0.0
    return w


def symmetrize(sigma: np.ndarray) -> np.ndarray:
    """Average over the reflections theta -> -theta and theta -> pi - theta."""
    N = sigma.shape[-1]
    j = np.arange(N)
    # pairwise sums so mirrored nodes come out bitwise equal
    u = sigma + sigma[..., (-j) % N]
    return 0.25 * (u + u[..., (N // 2 - j) % N])


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class SupportProfile:
    """Support function sampled at ``theta_j = 2 pi j / N``."""

    sigma: np.ndarray
    t: float = 0.0
    n: int = 2

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim != 1:
            raise GeometryError("sigma must be one-dimensional")
        _check_grid(sigma.size)
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def N(self) -> int:
        return self.sigma.size

    @property
    def theta(self) -> np.ndarray:
        return theta_grid(self.N)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        """Both reflections hold on the grid to within ``tol``."""
        s = self.sigma
        j = np.arange(self.N)
        err = max(np.max(np.abs(s - s[(-j) % self.N])), np.max(np.abs(s - s[(self.N // 2 - j) % self.N])))
        return bool(err <= tol)

    def replace(self, sigma=None, t=None) -> "SupportProfile":
        return SupportProfile(self.sigma if sigma is None else sigma,
                              self.t if t is None else t, self.n)


@dataclass(frozen=True, eq=False)
class CurvatureData:
    kappa: np.ndarray
    lam: np.ndarray
    phi: np.ndarray
    pole_mask: np.ndarray
    rho: np.ndarray
    y: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return self.kappa / self.lam


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """Closed curve sampled on a uniform turning-angle grid; ``points`` has shape (N, 2)."""

    points: np.ndarray
    theta: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def is_convex(self) -> bool:
        e = np.roll(self.points, -1, axis=0) - self.points
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        scale = np.max(np.abs(self.points)) ** 2
        return bool(np.all(cross >= -1e-13 * scale))


@dataclass(frozen=True, eq=False)
class OpenCurve:
    x: np.ndarray
    y: np.ndarray
    t: float


@dataclass(frozen=True)
class Displacements:
    h: float
    ell: float
    A: float
    A_support: float
    rin: float
    rout: float


# ---------------------------------------------------------------------------
# conversions


def _nu(theta):
    return np.stack([np.sin(theta), -np.cos(theta)], axis=-1)


def _tau(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def _radius_checked(sigma: np.ndarray, backend: str, t: float | None = None) -> np.ndarray:
    rho = radius_of_curvature(sigma, backend)
    j = int(np.argmin(rho))
    if not rho[j] > 0:
        raise LostConvexity(j, rho[j], t)
    return rho


def curvature_fields(profile: SupportProfile, backend: str = DEFAULT_BACKEND, pole_band: int = 3):
    """Return ``(rho, kappa, lam, y, w)`` with ``w`` the generic-formula blend weight."""
    sigma = profile.sigma
    rho = _radius_checked(sigma, backend, profile.t)
    kappa = 1.0 / rho
    th = profile.theta
    c = np.cos(th)
    y = -sigma * c + slope(sigma, backend) * np.sin(th)
    w = pole_blend_weights(profile.N, pole_band)
    with np.errstate(divide="ignore", invalid="ignore"):
        generic = np.where(w > 0, -c / y, 0.0)
    lam = kappa * (1.0 - w) + generic * w
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        j = int(np.argmin(np.where(np.isfinite(lam), lam, -np.inf)))
        raise GeometryError(f"rotational curvature invalid at node {j}; profile not symmetric about the axis?")
    return rho, kappa, lam, y, w


def curvatures_from_support(profile: SupportProfile, speed: SpeedFunction,
                            backend: str = DEFAULT_BACKEND, pole_band: int = 3) -> CurvatureData:
    """Profile curvature, rotational curvature and speed at every node."""
    rho, kappa, lam, y, w = curvature_fields(profile, backend, pole_band)
    phi = speed._reduced(kappa, lam)
    return CurvatureData(kappa, lam, phi, w < 1.0, rho, y)


def lambda_theta_residual(profile: SupportProfile, backend: str = DEFAULT_BACKEND, pole_band: int = 3) -> np.ndarray:
    """``kappa * d(lambda)/d(theta) + lambda tan(theta) (kappa - lambda)`` at each node.

    Zero for the exact curve; NaN inside the pole band where tan blows up.
    """
    rho, kappa, lam, y, w = curvature_fields(profile, backend, pole_band)
    th = profile.theta
    with np.errstate(divide="ignore", invalid="ignore"):
        res = kappa * slope(lam, backend) + lam * np.tan(th) * (kappa - lam)
    inside = w < 1.0
    inside = inside | np.roll(inside, 1) | np.roll(inside, -1)
    if backend == "fd4":
        inside = inside | np.roll(inside, 2) | np.roll(inside, -2)
    return np.where(inside, np.nan, res)


def embed(profile: SupportProfile, backend: str = DEFAULT_BACKEND) -> ProfileCurve:
    """gamma = sigma nu + sigma_theta tau."""
    sigma = profile.sigma
    _radius_checked(sigma, backend, profile.t)
    th = profile.theta
    pts = sigma[:, None] * _nu(th) + slope(sigma, backend)[:, None] * _tau(th)
    return ProfileCurve(pts, th)


def support_from_turning_angle(curve: ProfileCurve, t: float = 0.0, n: int = 2) -> SupportProfile:
    """sigma_j = <gamma_j, nu(theta_j)> for a curve on the uniform turning-angle grid."""
    th = np.asarray(curve.theta, dtype=float)
    N = th.size
    _check_grid(N)
    if not np.allclose(th, theta_grid(N), atol=1e-12):
        raise GeometryError("curve is not sampled on the uniform turning-angle grid")
    if not curve.is_convex():
        raise GeometryError("curve is not convex")
    sigma = np.einsum("ij,ij->i", curve.points, _nu(th))
    return SupportProfile(sigma, t, n)


def steiner_point(sigma: np.ndarray) -> np.ndarray:
    """(1/pi) * integral of sigma nu dtheta."""
    N = sigma.size
    th = theta_grid(N)
    return (2.0 / N) * (sigma @ _nu(th))


def _shoelace(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def displacements(obj, backend: str = DEFAULT_BACKEND) -> Displacements:
    """h, ell, enclosed area (polygon and support forms), and centred in/circum radii."""
    if isinstance(obj, SupportProfile):
        sigma = obj.sigma
        N = obj.N
        curve = embed(obj, backend)
        rho = radius_of_curvature(sigma, backend)
        A_support = 0.5 * float(np.sum(sigma * rho)) * 2 * np.pi / N
        h = float(sigma[N // 4])
        ell = float(max(sigma[N // 2], sigma[0]))
    elif isinstance(obj, ProfileCurve):
        curve = obj
        sigma = support_from_turning_angle(obj).sigma
        N = sigma.size
        h = float(np.max(curve.x))
        ell = float(np.max(np.abs(curve.y)))
        A_support = None
    else:
        raise TypeError(f"expected SupportProfile or ProfileCurve, got {type(obj).__name__}")
    A = _shoelace(curve.points)
    if A_support is None:
        rho = radius_of_curvature(sigma, backend)
        A_support = 0.5 * float(np.sum(sigma * rho)) * 2 * np.pi / N
    centred = sigma - _nu(theta_grid(N)) @ steiner_point(sigma)
    return Displacements(h, ell, A, A_support, float(np.min(centred)), float(np.max(centred)))


# ---------------------------------------------------------------------------
# exact solutions


def oval_a2(t: float) -> float:
    """a(t)^2 = 1 / (exp(-2t) - 1)."""
    return 1.0 / np.expm1(-2.0 * t)


def angenent_oval(t: float, N: int) -> ProfileCurve:
    """Angenent oval cos x = e^t cosh y, sampled at turning angles 2 pi j / N."""
    if not t < 0:
        raise GeometryError(f"the Angenent oval exists only for t < 0, got {t}")
    _check_grid(N)
    th = theta_grid(N)
    a2 = oval_a2(t)
    c = np.cos(th)
    q = np.sqrt(c * c + a2)
    x = np.arctan(np.sin(th) / q)
    # q - c cancels where c ~ q > 0; use (q - c)(q + c) = a^2 instead
    with np.errstate(divide="ignore"):
        qmc = np.where(c > 0, a2 / (q + c), q - c)
    y = -t + np.log(qmc / np.sqrt(a2 + 1.0))
    return ProfileCurve(np.stack([x, y], axis=-1), th)


def angenent_oval_curvatures(t: float, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact (kappa, lambda) on the oval: kappa = sqrt(cos^2 + a^2), lambda = -cos / y."""
    a2 = oval_a2(t)
    c = np.cos(theta)
    kappa = np.sqrt(c * c + a2)
    q = kappa
    with np.errstate(divide="ignore"):
        qmc = np.where(c > 0, a2 / (q + c), q - c)
    y = -t + np.log(qmc / np.sqrt(a2 + 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(np.abs(c) < 1e-12, kappa, -c / y)
    return kappa, lam


def grim_reaper(t: float, N: int, delta: float = 1e-3) -> OpenCurve:
    """Translator profile: depth = log sec x + t on (-pi/2 + delta, pi/2 - delta)."""
    x = np.linspace(-np.pi / 2 + delta, np.pi / 2 - delta, N)
    return OpenCurve(x, np.log(1.0 / np.cos(x)) + t, t)
