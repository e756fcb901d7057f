"""Closed-form shrinking solutions and explicit inequality machinery.

Round spheres and products of round spheres are exact solutions of the flow
with elementary radius laws, so they serve as oracles for every mesh-side
estimator.  This module also evaluates the explicit submanifold Sobolev
constants and runs the zonal-function inequality checkers by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import (
    NegativeTestFunction,
    PastSingularity,
    UnsupportedDimension,
    ValidationError,
)


# ---------------------------------------------------------------------------
# sphere area / ball volume constants

def unit_sphere_area(n: int) -> float:
    """Surface measure of the unit n-sphere in R^{n+1}."""
    if n < 0:
        raise ValidationError("sphere dimension must be >= 0", field="n")
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def unit_ball_volume(n: int) -> float:
    """Volume of the unit n-ball."""
    if n < 0:
        raise ValidationError("ball dimension must be >= 0", field="n")
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def _recurrence_tables(max_n: int = 16):
    # A_1 = 2*pi, A_2 = 4*pi, A_n = 2*pi*A_{n-2}/(n-1); omega_n = A_{n-1}/n.
    area = {0: 2.0, 1: 2.0 * math.pi, 2: 4.0 * math.pi}
    for n in range(3, max_n + 1):
        area[n] = 2.0 * math.pi * area[n - 2] / (n - 1)
    ball = {n: area[n - 1] / n for n in range(1, max_n + 1)}
    return area, ball


#: gamma-free cross-check values for n <= 16 (guards constant-convention bugs)
SPHERE_AREA_TABLE, BALL_VOLUME_TABLE = _recurrence_tables()


# ---------------------------------------------------------------------------
# exact scenes

def _orthonormal(frame: np.ndarray, tol: float = 1e-10) -> bool:
    g = frame.T @ frame
    return bool(np.allclose(g, np.eye(frame.shape[1]), atol=tol))


@dataclass(frozen=True)
class SphereScene:
    """Round n-sphere of initial radius r0 inside an (n+1)-plane of R^{n+d}.

    ``subspace`` holds n+1 orthonormal columns spanning that plane; the
    default is the first n+1 coordinate axes.
    """

    n: int
    d: int = 1
    r0: float = 1.0
    center: np.ndarray | None = None
    subspace: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("sphere intrinsic dimension must be >= 1", field="n")
        if self.d < 1:
            raise ValidationError("codimension must be >= 1", field="d")
        if not self.r0 > 0:
            raise ValidationError("initial radius must be positive", field="r0")
        dim = self.ambient_dim
        if self.center is not None:
            c = np.asarray(self.center, dtype=float)
            if c.shape != (dim,):
                raise ValidationError("center has wrong ambient dimension", field="center")
            object.__setattr__(self, "center", c)
        if self.subspace is not None:
            q = np.asarray(self.subspace, dtype=float)
            if q.shape != (dim, self.n + 1) or not _orthonormal(q):
                raise ValidationError(
                    "subspace must be an orthonormal (ambient x n+1) frame",
                    field="subspace",
                )
            object.__setattr__(self, "subspace", q)

    @property
    def ambient_dim(self) -> int:
        return self.n + self.d

    @property
    def collapse_time(self) -> float:
        return self.r0 ** 2 / (2.0 * self.n)

    def center_point(self) -> np.ndarray:
        if self.center is None:
            return np.zeros(self.ambient_dim)
        return self.center

    def frame(self) -> np.ndarray:
        if self.subspace is None:
            return np.eye(self.ambient_dim)[:, : self.n + 1]
        return self.subspace


@dataclass(frozen=True)
class SphereProductScene:
    """S^p(a0) x S^q(b0) in R^{p+q+2+extra_codim}; both factors shrink."""

    p: int
    q: int
    a0: float = 1.0
    b0: float = 1.0
    extra_codim: int = 0

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValidationError("factor dimensions must be >= 1", field="p")
        if not (self.a0 > 0 and self.b0 > 0):
            raise ValidationError("factor radii must be positive", field="a0")
        if self.extra_codim < 0:
            raise ValidationError("extra_codim must be >= 0", field="extra_codim")

    @property
    def n(self) -> int:
        return self.p + self.q

    @property
    def ambient_dim(self) -> int:
        return self.p + self.q + 2 + self.extra_codim

    @property
    def d(self) -> int:
        return self.ambient_dim - self.n

    @property
    def collapse_time(self) -> float:
        return min(self.a0 ** 2 / (2.0 * self.p), self.b0 ** 2 / (2.0 * self.q))


@dataclass(frozen=True)
class SphereState:
    r: float
    h2: float
    a2: float
    aring2: float
    vol: float
    T: float


@dataclass(frozen=True)
class SphereProductState:
    a: float
    b: float
    h2: float
    a2: float
    aring2: float
    vol: float
    T: float


def sphere_state(scene: SphereScene, t: float) -> SphereState:
    """Exact curvature record of the shrinking sphere at time t."""
    T = scene.collapse_time
    if t < 0 or t >= T:
        raise PastSingularity(f"t={t} outside [0, {T})")
    n = scene.n
    r = math.sqrt(scene.r0 ** 2 - 2.0 * n * t)
    return SphereState(
        r=r,
        h2=n ** 2 / r ** 2,
        a2=n / r ** 2,
        aring2=0.0,
        vol=unit_sphere_area(n) * r ** n,
        T=T,
    )


def sphere_product_state(scene: SphereProductScene, t: float) -> SphereProductState:
    """Exact curvature record of the shrinking sphere product at time t."""
    T = scene.collapse_time
    if t < 0 or t >= T:
        raise PastSingularity(f"t={t} outside [0, {T})")
    p, q = scene.p, scene.q
    a = math.sqrt(scene.a0 ** 2 - 2.0 * p * t)
    b = math.sqrt(scene.b0 ** 2 - 2.0 * q * t)
    h2 = (p / a) ** 2 + (q / b) ** 2
    a2 = p / a ** 2 + q / b ** 2
    return SphereProductState(
        a=a,
        b=b,
        h2=h2,
        a2=a2,
        aring2=a2 - h2 / (p + q),
        vol=unit_sphere_area(p) * a ** p * unit_sphere_area(q) * b ** q,
        T=T,
    )


def scene_form_components(scene, t: float) -> np.ndarray:
    """Second-fundamental-form components (d, n, n) in the canonical frame.

    Spheres are umbilic with one active normal; a product has one diagonal
    block per factor normal.  Extra flat normal directions contribute zeros.
    """
    if isinstance(scene, SphereScene):
        st = sphere_state(scene, t)
        h = np.zeros((scene.d, scene.n, scene.n))
        h[0] = np.eye(scene.n) / st.r
        return h
    if isinstance(scene, SphereProductScene):
        st = sphere_product_state(scene, t)
        n = scene.n
        h = np.zeros((scene.d, n, n))
        h[0, : scene.p, : scene.p] = np.eye(scene.p) / st.a
        h[1, scene.p :, scene.p :] = np.eye(scene.q) / st.b
        return h
    raise TypeError(f"unsupported scene type {type(scene).__name__}")


def spacetime_h_integral(scene: SphereScene, alpha: float, t_end: float) -> float:
    """Accumulated integral of |H|^alpha over M x [0, t_end] on the sphere."""
    if alpha < 1:
        raise ValidationError("alpha must be >= 1", field="alpha")
    T = scene.collapse_time
    if t_end < 0 or t_end >= T:
        raise PastSingularity(f"t_end={t_end} outside [0, {T})")
    if t_end == 0:
        return 0.0
    n = scene.n
    area = unit_sphere_area(n)
    if alpha == n + 2:
        return (n ** (n + 1) * area / 2.0) * math.log(T / (T - t_end))

    def integrand(t):
        r = math.sqrt(scene.r0 ** 2 - 2.0 * n * t)
        return n ** alpha * area * r ** (n - alpha)

    value, _ = integrate.quad(integrand, 0.0, t_end, limit=200)
    return value


def spacetime_h_norm_closed_form(scene: SphereScene, alpha: float, t_end: float) -> float:
    """Spacetime L^alpha norm of |H| on the shrinking sphere up to t_end."""
    return spacetime_h_integral(scene, alpha, t_end) ** (1.0 / alpha)


def hoffman_spruck_constant(n: int, alpha: float, b_real: bool = True) -> float:
    """Explicit submanifold Sobolev constant C(n, alpha).

    ``b_real`` keeps the pi/2 prefactor required when the ambient curvature
    bound is a real number; with an imaginary bound (nonpositively curved or
    Euclidean ambient) the prefactor is dropped.
    """
    if n < 2:
        raise UnsupportedDimension("constant defined for n >= 2")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)", field="alpha")
    value = (
        2.0 ** (n - 2)
        / alpha
        * (1.0 - alpha) ** (-1.0 / n)
        * n
        / (n - 1)
        * unit_ball_volume(n) ** (-1.0 / n)
    )
    if b_real:
        value *= 0.5 * math.pi
    return value


def quadratic_growth_threshold(scene, t: float) -> float:
    """Smallest c1 with d|A|^2/dt <= Laplacian(|A|^2) + c1 |A|^4 at time t.

    The squared norm is spatially constant on these scenes so the Laplacian
    term vanishes; spheres sit exactly at the threshold 2.
    """
    if isinstance(scene, SphereScene):
        st = sphere_state(scene, t)
        n = scene.n
        du = 2.0 * n ** 2 / st.r ** 4
        return du / st.a2 ** 2
    if isinstance(scene, SphereProductScene):
        st = sphere_product_state(scene, t)
        du = 2.0 * scene.p ** 2 / st.a ** 4 + 2.0 * scene.q ** 2 / st.b ** 4
        return du / st.a2 ** 2
    raise TypeError(f"unsupported scene type {type(scene).__name__}")


# ---------------------------------------------------------------------------
# zonal test functions and quadrature on round spheres

MAX_ZONAL_DEGREE = 16


@dataclass(frozen=True)
class ZonalFunction:
    """Polynomial in cos(theta) on the sphere, theta the polar angle."""

    coefficients: tuple  # low degree first

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) == 0 or len(coeffs) - 1 > MAX_ZONAL_DEGREE:
            raise ValidationError(
                f"degree must be <= {MAX_ZONAL_DEGREE}", field="coefficients"
            )
        object.__setattr__(self, "coefficients", coeffs)

    def value(self, theta):
        c = np.cos(np.asarray(theta, dtype=float))
        return np.polynomial.polynomial.polyval(c, self.coefficients)

    __call__ = value

    def theta_derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        c = np.cos(theta)
        dp = np.polynomial.polynomial.polyval(
            c, np.polynomial.polynomial.polyder(self.coefficients)
        )
        return -np.sin(theta) * dp

    def min_sampled(self, samples: int = 10_000) -> float:
        theta = np.linspace(0.0, math.pi, samples)
        return float(self.value(theta).min())


@lru_cache(maxsize=64)
def _zonal_rule(order: int, n: int):
    # Gauss rule in x = cos(theta) absorbing the sin^{n-1} measure, i.e.
    # Gauss-Jacobi with weight (1-x^2)^{(n-2)/2}; exact for polynomial
    # integrands, spectrally accurate otherwise.
    exponent = (n - 2) / 2.0
    x, w = special.roots_jacobi(order, exponent, exponent)
    theta = np.arccos(np.clip(x, -1.0, 1.0))
    return theta, w


def zonal_integral(fn, scene: SphereScene, t: float, order: int = 64) -> float:
    """Integral over the sphere at time t of a function of the polar angle."""
    st = sphere_state(scene, t)
    theta, w = _zonal_rule(order, scene.n)
    vals = np.asarray(fn(theta), dtype=float)
    return unit_sphere_area(scene.n - 1) * st.r ** scene.n * float(w @ vals)


@dataclass(frozen=True)
class SobolevReport:
    which: str
    lhs: float
    rhs: float
    holds: bool
    constant: float


_CALIBRATION_FUNCTIONS = (
    (1.0,),
    (1.0, 1.0),          # 1 + cos
    (1.0, -1.0),         # 1 - cos
    (1.0, 2.0, 1.0),     # (1 + cos)^2
    (2.0, 0.0, 0.0, 1.0),
    (1.0, 0.5, 0.0, 0.0, 0.25),
)


@lru_cache(maxsize=16)
def calibrated_sobolev_constant(n: int, order: int = 96) -> float:
    """Smallest constant that closes the n>=3 Sobolev bound on the built-in
    battery of zonal functions and radii; informational default only."""
    if n < 3:
        raise UnsupportedDimension("calibration defined for n >= 3")
    worst = 0.0
    for r in (0.5, 1.0, 2.0):
        scene = SphereScene(n=n, r0=r)
        for coeffs in _CALIBRATION_FUNCTIONS:
            v = ZonalFunction(coeffs)
            lhs, base = _curvature_weighted_sides(scene, 0.0, v, order)
            if base > 0:
                worst = max(worst, lhs / base)
    return worst


def _curvature_weighted_sides(scene, t, v, order):
    # returns (lhs, rhs-without-constant)
    n = scene.n
    st = sphere_state(scene, t)
    exponent = 2.0 * n / (n - 2.0)
    lp = zonal_integral(lambda th: np.abs(v(th)) ** exponent, scene, t, order)
    lhs = lp ** ((n - 2.0) / n)
    grad2 = zonal_integral(lambda th: (v.theta_derivative(th) / st.r) ** 2, scene, t, order)
    hterm = st.h2 ** ((n + 2.0) / 2.0) * st.vol
    l2 = zonal_integral(lambda th: v(th) ** 2, scene, t, order)
    return lhs, grad2 + hterm * l2


def sobolev_check_zonal(
    scene: SphereScene,
    t: float,
    v: ZonalFunction,
    which: str,
    s: float | None = None,
    hs_alpha: float | None = None,
    c_n: float | None = None,
    order: int = 64,
) -> SobolevReport:
    """Evaluate both sides of one of the three sphere Sobolev inequalities.

    ``which`` selects the checker: ``hoffman_spruck`` is the L^{n/(n-1)}
    bound with the explicit constant (nonnegative v required),
    ``gradient_lower_bound`` the first-order bound with free parameter s,
    and ``curvature_weighted`` the flat-ambient inequality whose
    dimensional constant is a configuration input.
    """
    n = scene.n
    st = sphere_state(scene, t)

    if which == "curvature_weighted":
        if n < 3:
            raise UnsupportedDimension("curvature_weighted requires n >= 3")
        constant = calibrated_sobolev_constant(n) if c_n is None else float(c_n)
        exponent = 2.0 * n / (n - 2.0)
        lp = zonal_integral(lambda th: np.abs(v(th)) ** exponent, scene, t, order)
        lhs = lp ** ((n - 2.0) / n)
        grad2 = zonal_integral(
            lambda th: (v.theta_derivative(th) / st.r) ** 2, scene, t, order
        )
        hterm = st.h2 ** ((n + 2.0) / 2.0) * st.vol
        l2 = zonal_integral(lambda th: v(th) ** 2, scene, t, order)
        rhs = constant * (grad2 + hterm * l2)
        return SobolevReport("curvature_weighted", lhs, rhs, lhs <= rhs * (1 + 1e-12), constant)

    if which == "gradient_lower_bound":
        if n < 3:
            raise UnsupportedDimension("gradient_lower_bound requires n >= 3")
        if s is None or s <= 0:
            raise ValidationError("gradient_lower_bound requires s > 0", field="s")
        constant = hoffman_spruck_constant(n, n / (n + 1.0), b_real=True)
        lhs = zonal_integral(
            lambda th: (v.theta_derivative(th) / st.r) ** 2, scene, t, order
        )
        exponent = 2.0 * n / (n - 2.0)
        lp = zonal_integral(lambda th: np.abs(v(th)) ** exponent, scene, t, order)
        l2 = zonal_integral(lambda th: v(th) ** 2, scene, t, order)
        h0sq = st.h2  # |H| is constant on the sphere
        bracket = lp ** ((n - 2.0) / n) / constant ** 2 - h0sq * (1.0 + 1.0 / s) * l2
        rhs = (n - 2.0) ** 2 / (4.0 * (n - 1.0) ** 2 * (1.0 + s)) * bracket
        return SobolevReport("gradient_lower_bound", lhs, rhs, lhs >= rhs - abs(rhs) * 1e-12, constant)

    if which == "hoffman_spruck":
        if n < 2:
            raise UnsupportedDimension("hoffman_spruck requires n >= 2")
        scale = max(abs(v.value(0.0)), 1.0)
        if v.min_sampled() < -1e-12 * scale:
            raise NegativeTestFunction("hoffman_spruck requires a nonnegative test function")
        alpha = n / (n + 1.0) if hs_alpha is None else float(hs_alpha)
        constant = hoffman_spruck_constant(n, alpha, b_real=False)
        lp = zonal_integral(
            lambda th: np.abs(v(th)) ** (n / (n - 1.0)), scene, t, order
        )
        lhs = lp ** ((n - 1.0) / n)
        habs = math.sqrt(st.h2)
        rhs = constant * zonal_integral(
            lambda th: np.abs(v.theta_derivative(th)) / st.r + np.abs(v(th)) * habs,
            scene,
            t,
            order,
        )
        return SobolevReport("hoffman_spruck", lhs, rhs, lhs <= rhs * (1 + 1e-12), constant)

    raise ValidationError(f"unknown checker {which!r}", field="which")
