"""Admissible speed functions.

A speed is a symmetric, 1-homogeneous function of the n principal curvatures.
Every surface we simulate is O(n)-invariant, so the workhorse is the reduced
form ``phi(kappa, lam) = phi(kappa, lam, ..., lam)``; the full n-argument form
is only needed by the admissibility checker.

Speeds built from the registry are linear combinations of *terms* (power
means and the n-th root of the Gauss curvature).  Such speeds have closed-form
gradients and can be handed to the compiled stepping kernel.  Arbitrary
callables are accepted too; they fall back to finite differences.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "DegenerateSpeedError",
    "SpeedError",
    "Term",
    "SpeedFunction",
    "SpeedConstants",
    "ProbeConfig",
    "ConditionResult",
    "AdmissibilityReport",
    "eval_reduced",
    "grad_reduced",
    "constants",
    "normalize",
    "combine",
    "check_admissible",
    "custom_speed",
    "resolve",
    "mean_curvature",
    "power_mean",
    "gauss_root",
]


class SpeedError(ValueError):
    """Base class for speed construction and evaluation failures."""


class DomainError(SpeedError):
    """Curvature arguments outside the positive cone."""


class DegenerateSpeedError(SpeedError):
    """The speed cannot be normalized or fails the C^2 probe at s = 0."""


TERM_KINDS = ("power", "gauss")


@dataclass(frozen=True)
class Term:
    """One raw summand: ``weight * P_r`` (kind ``power``) or ``weight * K^(1/n)``."""

    kind: str
    r: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise SpeedError(f"unknown term kind {self.kind!r}")
        if self.kind == "power" and not self.r > 0:
            raise SpeedError(f"power mean exponent must be positive, got {self.r}")
        if not self.weight > 0:
            raise SpeedError(f"term weights must be positive, got {self.weight}")


def _check_domain(kappa, lam):
    kappa = np.asarray(kappa, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(np.isnan(kappa)) or np.any(np.isnan(lam)):
        raise DomainError("NaN curvature")
    if np.any(kappa <= 0):
        raise DomainError("kappa must be positive")
    if np.any(lam < 0):
        raise DomainError("lambda must be non-negative")
    return kappa, lam


def _term_reduced(term: Term, n: int, k, l):
    if term.kind == "gauss":
        return np.power(k * np.power(l, n - 1), 1.0 / n)
    r = term.r
    if r == 1.0:
        return k + (n - 1) * l
    m = np.maximum(k, l)
    return m * np.power(np.power(k / m, r) + (n - 1) * np.power(l / m, r), 1.0 / r)


def _term_grad(term: Term, n: int, k, l):
    with np.errstate(divide="ignore", invalid="ignore"):
        if term.kind == "gauss":
            g = _term_reduced(term, n, k, l)
            gk = g / (n * k)
            gl = np.where(l > 0, (n - 1) * g / (n * np.where(l > 0, l, 1.0)), np.inf)
            return gk, gl
        r = term.r
        if r == 1.0:
            return np.ones_like(k), np.full_like(k, n - 1.0)
        p = _term_reduced(term, n, k, l)
        gk = np.power(k / p, r - 1.0)
        if r > 1.0:
            gl = (n - 1) * np.power(l / p, r - 1.0)
        else:
            gl = np.where(l > 0, (n - 1) * np.power(np.where(l > 0, l, 1.0) / p, r - 1.0), np.inf)
        return gk, gl


def _term_full(term: Term, n: int, z):
    if term.kind == "gauss":
        return np.power(np.prod(z, axis=-1), 1.0 / n)
    r = term.r
    if r == 1.0:
        return np.sum(z, axis=-1)
    m = np.max(z, axis=-1, keepdims=True)
    return m[..., 0] * np.power(np.sum(np.power(z / m, r), axis=-1), 1.0 / r)


def _term_phidot(term: Term, n: int) -> float:
    # d/ds phi(1, s, ..., s) at s = 0+
    if term.kind == "gauss":
        return math.inf
    if term.r == 1.0:
        return n - 1.0
    return 0.0 if term.r > 1.0 else math.inf


@dataclass(frozen=True)
class SpeedFunction:
    """A normalized (or raw) symmetric 1-homogeneous speed.

    The stored function is ``normalization * raw`` where ``raw`` is either the
    sum of ``terms`` or the custom callable ``full``.
    """

    name: str
    n: int
    terms: tuple[Term, ...] = ()
    normalization: float = 1.0
    full: Callable | None = field(default=None, compare=False)
    reduced: Callable | None = field(default=None, compare=False)
    grad: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise SpeedError(f"n must be an integer >= 2, got {self.n}")
        if self.terms and self.full is not None:
            raise SpeedError("give either terms or a custom callable, not both")

    @property
    def is_native(self) -> bool:
        """True when the compiled kernel can evaluate this speed."""
        return self.full is None

    @property
    def numerical_gradient(self) -> bool:
        return not self.is_native and self.grad is None

    def eval_full(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.n:
            raise DomainError(f"expected {self.n} curvatures, got {z.shape[-1]}")
        if np.any(np.isnan(z)) or np.any(z < 0):
            raise DomainError("curvatures must lie in the closed positive cone")
        if self.full is not None:
            raw = np.asarray(self.full(z), dtype=float)
        else:
            raw = np.zeros(z.shape[:-1])
            for term in self.terms:
                raw = raw + term.weight * _term_full(term, self.n, z)
        return self.normalization * raw

    def eval_reduced(self, kappa, lam):
        k, l = _check_domain(kappa, lam)
        return self._reduced(k, l)

    def _reduced(self, k, l):
        if self.full is not None:
            if self.reduced is not None:
                return self.normalization * np.asarray(self.reduced(k, l), dtype=float)
            k, l = np.broadcast_arrays(k, l)
            z = np.concatenate([k[..., None], np.repeat(l[..., None], self.n - 1, axis=-1)], axis=-1)
            return self.normalization * np.asarray(self.full(z), dtype=float)
        out = np.zeros(np.broadcast(k, l).shape)
        for term in self.terms:
            out = out + term.weight * _term_reduced(term, self.n, k, l)
        return self.normalization * out

    def grad_reduced(self, kappa, lam):
        """Return ``(phi_kappa, phi_lambda)``; phi_lambda includes the (n-1) multiplicity."""
        k, l = _check_domain(kappa, lam)
        if self.is_native:
            gk = np.zeros(np.broadcast(k, l).shape)
            gl = np.zeros_like(gk)
            for term in self.terms:
                tk, tl = _term_grad(term, self.n, k, l)
                gk = gk + term.weight * tk
                gl = gl + term.weight * tl
            return self.normalization * gk, self.normalization * gl
        if self.grad is not None:
            gk, gl = self.grad(k, l)
            return self.normalization * np.asarray(gk, float), self.normalization * np.asarray(gl, float)
        h = 1e-6 * np.maximum(1.0, k)
        gk = (self._reduced(k + h, l) - self._reduced(k - h, l)) / (2 * h)
        hl = 1e-6 * np.maximum(1.0, k)
        lo = np.maximum(l - hl, 0.0)
        gl = (self._reduced(k, l + hl) - self._reduced(k, lo)) / (l + hl - lo)
        return gk, gl

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "normalization": self.normalization,
            "terms": [dataclasses.asdict(t) for t in self.terms],
            "custom": not self.is_native,
        }


def eval_reduced(speed: SpeedFunction, kappa, lam):
    return speed.eval_reduced(kappa, lam)


def grad_reduced(speed: SpeedFunction, kappa, lam):
    return speed.grad_reduced(kappa, lam)


def custom_speed(name: str, n: int, full: Callable, reduced: Callable | None = None,
                 grad: Callable | None = None) -> SpeedFunction:
    """Wrap an arbitrary raw speed ``full(z)`` acting on the last axis of ``z``."""
    return SpeedFunction(name=name, n=n, full=full, reduced=reduced, grad=grad)


def normalize(speed: SpeedFunction) -> SpeedFunction:
    """Rescale so that phi(1, 0, ..., 0) = 1."""
    e1 = np.zeros(speed.n)
    e1[0] = 1.0
    value = float(speed.eval_full(e1))
    if not value > 1e-14 or not math.isfinite(value):
        raise DegenerateSpeedError(
            f"cannot normalize degenerate speed {speed.name!r}: phi(1,0,...,0) = {value}")
    return dataclasses.replace(speed, normalization=speed.normalization / value)


def mean_curvature(n: int) -> SpeedFunction:
    return SpeedFunction("mean", n, (Term("power", 1.0),))


def power_mean(r: float, n: int) -> SpeedFunction:
    return SpeedFunction(f"pr:{_fmt(r)}", n, (Term("power", float(r)),))


def gauss_root(n: int) -> SpeedFunction:
    # cannot be normalized: K^(1/n)(1, 0, ..., 0) = 0
    return SpeedFunction("gauss-root", n, (Term("gauss"),))


def _fmt(x: float) -> str:
    return f"{x:g}"


def combine(speeds: Sequence[SpeedFunction], weights: Sequence[float],
            name: str | None = None) -> SpeedFunction:
    """Positive weighted sum of speeds, then normalized."""
    speeds = list(speeds)
    weights = [float(w) for w in weights]
    if not speeds or len(speeds) != len(weights):
        raise SpeedError("combine needs matching non-empty speed and weight lists")
    if any(w <= 0 for w in weights):
        raise SpeedError("combination weights must be positive")
    n = speeds[0].n
    if any(s.n != n for s in speeds):
        raise SpeedError("cannot combine speeds with different n")
    if name is None:
        name = "mix:" + ",".join(f"{s.name}:{_fmt(w)}" for s, w in zip(speeds, weights))
    if all(s.is_native for s in speeds):
        terms = tuple(
            dataclasses.replace(t, weight=t.weight * s.normalization * w)
            for s, w in zip(speeds, weights) for t in s.terms
        )
        merged = _merge_terms(terms)
        return normalize(SpeedFunction(name, n, merged))

    def full(z):
        return sum(w * s.eval_full(z) for s, w in zip(speeds, weights))

    def reduced(k, l):
        return sum(w * s._reduced(k, l) for s, w in zip(speeds, weights))

    return normalize(custom_speed(name, n, full, reduced))


def _merge_terms(terms: tuple[Term, ...]) -> tuple[Term, ...]:
    merged: dict[tuple[str, float], float] = {}
    for t in terms:
        key = (t.kind, t.r)
        merged[key] = merged.get(key, 0.0) + t.weight
    return tuple(Term(kind, r, w) for (kind, r), w in merged.items())


def resolve(speed_id: str, n: int) -> SpeedFunction:
    """Build a speed from its registry id.

    Ids: ``mean``, ``pr:<r>``, ``gauss-root``, ``mix:<id>:<w>,<id>:<w>,...``.
    Everything except ``gauss-root`` comes back normalized.
    """
    speed_id = speed_id.strip()
    if speed_id == "mean":
        return normalize(mean_curvature(n))
    if speed_id == "gauss-root":
        return gauss_root(n)
    if speed_id.startswith("pr:"):
        try:
            r = float(speed_id[3:])
        except ValueError:
            raise SpeedError(f"bad power-mean exponent in {speed_id!r}") from None
        return normalize(power_mean(r, n))
    if speed_id.startswith("mix:"):
        parts, weights = [], []
        for item in speed_id[4:].split(","):
            sub, sep, w = item.rpartition(":")
            if not sep or not sub:
                raise SpeedError(f"bad mix component {item!r} in {speed_id!r}")
            parts.append(_resolve_raw(sub, n))
            weights.append(float(w))
        return combine(parts, weights, name=speed_id)
    raise SpeedError(f"unknown speed id {speed_id!r}")


def _resolve_raw(speed_id: str, n: int) -> SpeedFunction:
    if speed_id == "gauss-root":
        return gauss_root(n)
    return resolve(speed_id, n)


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class SpeedConstants:
    phi1: float
    phidot1: float
    taylor_C: float
    taylor_samples: int
    phidot1_method: str

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _slice_fn(speed: SpeedFunction):
    """s -> phi(1, s, ..., s)."""
    return lambda s: speed._reduced(np.ones_like(np.asarray(s, float)), np.asarray(s, float))


def _one_sided_derivative(f, h: float) -> float:
    return float((-3.0 * f(0.0) + 4.0 * f(h) - f(2.0 * h)) / (2.0 * h))


def constants(speed: SpeedFunction, samples: int = 2000) -> SpeedConstants:
    """phi1 = phi(1,...,1), phidot1 = d/ds phi(1,s,...,s) at 0+, and the Taylor constant.

    The Taylor constant is sup |d^2/dxi^2 phi(1, xi)| over [0, 1], estimated
    from second differences on ``samples`` intervals; it is an estimate, not
    a bound.
    """
    f = _slice_fn(speed)
    if not float(f(0.0)) > 0:
        raise DegenerateSpeedError(f"degenerate speed {speed.name!r}: phi(1,0,...,0) = 0")
    phi1 = float(speed._reduced(np.array(1.0), np.array(1.0)))
    if speed.is_native:
        phidot1 = speed.normalization * sum(t.weight * _term_phidot(t, speed.n) for t in speed.terms)
        method = "closed-form"
    else:
        h = 1e-4
        d1 = _one_sided_derivative(f, h)
        d2 = _one_sided_derivative(f, h / 2)
        if not (math.isfinite(d1) and abs(d1 - d2) <= 1e-4 * max(1.0, abs(d1))):
            raise DegenerateSpeedError(
                f"degenerate speed {speed.name!r}: one-sided derivative unstable ({d1} vs {d2})")
        phidot1 = d2
        method = "one-sided difference"
    if not math.isfinite(phidot1):
        raise DegenerateSpeedError(f"degenerate speed {speed.name!r}: phidot1 is infinite")

    hx = 1.0 / samples
    xi = np.linspace(0.0, 1.0, samples + 1)
    v = f(xi)
    d2v = np.empty_like(v)
    d2v[1:-1] = (v[:-2] - 2 * v[1:-1] + v[2:]) / hx**2
    d2v[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / hx**2
    d2v[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / hx**2
    taylor_C = float(np.max(np.abs(d2v)))
    # a C^2 slice has a bounded second difference that does not grow under refinement
    coarse = (2 * v[0] - 5 * v[2] + 4 * v[4] - v[6]) / (2 * hx) ** 2
    if not math.isfinite(taylor_C) or abs(d2v[0] - coarse) > 1e-2 * max(1.0, abs(coarse)):
        raise DegenerateSpeedError(f"degenerate speed {speed.name!r}: second derivative diverges at s = 0")
    return SpeedConstants(phi1, float(phidot1), taylor_C, samples, method)


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class ProbeConfig:
    samples: int = 200
    seed: int = 12345
    rel_tol: float = 1e-9
    ellipticity_tol: float = 1e-10
    hessian_tol: float = 1e-6
    scales: tuple[float, ...] = (0.5, 2.0, 10.0)
    h: float = 1e-4
    c2_tol: float = 1e-2


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    worst_violation: float
    witness: tuple[float, ...] | None
    tolerance: float
    detail: str = ""

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["witness"] = list(self.witness) if self.witness is not None else None
        return d


CONDITION_NAMES = ("symmetry", "ellipticity", "homogeneity", "inverse_concavity", "non_degeneracy")


@dataclass(frozen=True)
class AdmissibilityReport:
    speed: str
    n: int
    conditions: dict[str, ConditionResult]
    seed: int

    @property
    def admissible(self) -> bool:
        return all(self.conditions[c].passed for c in CONDITION_NAMES[:4])

    @property
    def non_degenerate(self) -> bool:
        return self.conditions["non_degeneracy"].passed

    @property
    def passed(self) -> bool:
        return self.admissible and self.non_degenerate

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions.values() if not c.passed]

    def to_json(self) -> dict:
        return {
            "speed": self.speed,
            "n": self.n,
            "seed": self.seed,
            "passed": self.passed,
            "conditions": {k: v.to_json() for k, v in self.conditions.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _probe_points(n: int, cfg: ProbeConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    fixed = [np.arange(1.0, n + 1.0), np.ones(n), np.r_[1.0, np.full(n - 1, 0.1)]]
    pts = rng.uniform(0.05, 1.0, size=(cfg.samples, n))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return np.vstack([np.array(fixed), pts])


def _first_failure(viol: np.ndarray, tol: float, pts: np.ndarray):
    bad = np.flatnonzero(viol > tol)
    worst = float(np.max(viol)) if viol.size else 0.0
    if bad.size == 0:
        return True, worst, None
    return False, worst, tuple(float(x) for x in pts[bad[0]])


def check_admissible(speed: SpeedFunction, config: ProbeConfig | None = None) -> AdmissibilityReport:
    """Probe conditions (a)-(e) numerically.  Failures are report entries, never exceptions."""
    cfg = config or ProbeConfig()
    n = speed.n
    pts = _probe_points(n, cfg)
    phi = speed.eval_full(pts)
    scale = np.maximum(np.abs(phi), 1e-300)
    results: dict[str, ConditionResult] = {}

    # (a) symmetry: every transposition of every probe
    viol = np.zeros(len(pts))
    for i, j in itertools.combinations(range(n), 2):
        q = pts.copy()
        q[:, [i, j]] = q[:, [j, i]]
        viol = np.maximum(viol, np.abs(speed.eval_full(q) - phi) / scale)
    ok, worst, wit = _first_failure(viol, cfg.rel_tol, pts)
    results["symmetry"] = ConditionResult("symmetry", ok, worst, wit, cfg.rel_tol)

    # (b) ellipticity on the unit-sphere slice of the cone
    unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    h = 1e-6
    viol = np.zeros(len(unit))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        d = (speed.eval_full(unit + e) - speed.eval_full(unit - e)) / (2 * h)
        viol = np.maximum(viol, cfg.ellipticity_tol - d)
    viol = np.maximum(viol, 0.0)
    ok, worst, wit = _first_failure(viol, 0.0, unit)
    results["ellipticity"] = ConditionResult(
        "ellipticity", ok, worst, wit, cfg.ellipticity_tol, "all partials must exceed the tolerance")

    # (c) 1-homogeneity
    viol = np.zeros(len(pts))
    for s in cfg.scales:
        viol = np.maximum(viol, np.abs(speed.eval_full(s * pts) - s * phi) / (s * scale))
    ok, worst, wit = _first_failure(viol, cfg.rel_tol, pts)
    results["homogeneity"] = ConditionResult("homogeneity", ok, worst, wit, cfg.rel_tol)

    # (d) inverse-concavity: Hessian of r -> 1/phi(1/r) is negative semidefinite
    results["inverse_concavity"] = _check_inverse_concavity(speed, unit, cfg)

    # (e) non-degeneracy
    results["non_degeneracy"] = _check_non_degeneracy(speed, cfg)
    return AdmissibilityReport(speed.name, n, results, cfg.seed)


def _check_inverse_concavity(speed: SpeedFunction, pts: np.ndarray, cfg: ProbeConfig) -> ConditionResult:
    n = speed.n

    def g(r):
        with np.errstate(divide="ignore"):
            v = speed.eval_full(1.0 / r)
        return 1.0 / v

    viol = np.zeros(len(pts))
    for idx, r0 in enumerate(1.0 / pts):
        step = 1e-3 * r0
        g0 = g(r0[None, :])[0]
        H = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = step[i]
                ej[j] = step[j]
                stencil = np.array([r0 + ei + ej, r0 + ei - ej, r0 - ei + ej, r0 - ei - ej])
                gp = g(stencil)
                H[i, j] = H[j, i] = (gp[0] - gp[1] - gp[2] + gp[3]) / (4 * step[i] * step[j])
        # dimensionless: Hessian of a 1-homogeneous g scales like g / |r|^2
        lam_max = float(np.max(np.linalg.eigvalsh(H))) * float(np.dot(r0, r0)) / max(abs(g0), 1e-300)
        viol[idx] = lam_max if math.isfinite(lam_max) else math.inf
    ok, worst, wit = _first_failure(viol, cfg.hessian_tol, pts)
    return ConditionResult("inverse_concavity", ok, worst, wit, cfg.hessian_tol,
                           "largest Hessian eigenvalue of 1/phi(1/r), scaled by |r|^2/g")


def _check_non_degeneracy(speed: SpeedFunction, cfg: ProbeConfig) -> ConditionResult:
    n = speed.n
    e1 = np.zeros(n)
    e1[0] = 1.0
    at_e1 = float(speed.eval_full(e1))
    if not at_e1 > 0:
        return ConditionResult("non_degeneracy", False, abs(at_e1) if at_e1 <= 0 else 0.0,
                               tuple(float(x) for x in e1), cfg.c2_tol, "phi(1,0,...,0) is not positive")

    def f(s):
        z = np.full(n, float(s))
        z[0] = 1.0
        return float(speed.eval_full(z))

    def fit(h):
        s = np.array([0.0, h, 2 * h, 4 * h, 8 * h])
        v = np.array([f(x) for x in s])
        c2, c1, _ = np.polyfit(s, v, 2)
        return c1, 2 * c2

    d1a, d2a = fit(cfg.h)
    d1b, d2b = fit(cfg.h / 2)
    dev1 = abs(d1a - d1b) / max(1.0, abs(d1b))
    dev2 = abs(d2a - d2b) / max(1.0, abs(d2b))
    worst = max(dev1, dev2)
    ok = bool(math.isfinite(worst) and worst <= cfg.c2_tol)
    witness = None if ok else (1.0,) + (cfg.h / 2,) * (n - 1)
    return ConditionResult("non_degeneracy", ok, float(worst), witness, cfg.c2_tol,
                           f"phi'(0+) ~ {d1b:.6g}, phi''(0+) ~ {d2b:.6g} (refinement drift {worst:.3g})")
