"""Every tracked quantity and inequality, evaluated on mesh or analytic states.

Monitors never assert against constants the theory leaves unspecified; those
checks compute both sides, report the ratio, and carry the ``informational``
verdict.  Hard pass/fail is reserved for inequalities with explicit
constants.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from . import analytic
from .curvature import DerivativeData, FundamentalForms, derivative_data, jet_forms
from .errors import UnsupportedDimension, WindowNotCovered
from .mesh import DiscreteImmersion, MeshTopology, measure_weights

#: squared-curvature scale below which derivative fits are treated as noise
GRADIENT_NOISE_FLOOR = 1e-2

HOLDS = "holds"
VIOLATED = "violated"
INFORMATIONAL = "informational"


def lp_norm(values: np.ndarray, p: float, weights: np.ndarray) -> float:
    """(sum w |f|^p)^(1/p) over the vertex measure."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((weights @ np.abs(values) ** p) ** (1.0 / p))


@dataclass
class SpacetimeAccumulator:
    """Running trapezoid-rule value of the spacetime |H|^alpha integral."""

    alpha: float
    value: float = 0.0
    last_integrand: float | None = None

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")

    def update(self, integrand: float, dt: float) -> "SpacetimeAccumulator":
        if dt < 0:
            raise ValueError("dt must be nonnegative")
        if self.last_integrand is not None and dt > 0:
            self.value += 0.5 * dt * (self.last_integrand + integrand)
        self.last_integrand = integrand
        return self

    @property
    def norm(self) -> float:
        return self.value ** (1.0 / self.alpha)


@dataclass
class MonitorReport:
    name: str
    digest: str
    values: dict
    verdict: str
    anchor: str

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "digest": self.digest,
            "values": self.values,
            "verdict": self.verdict,
            "anchor": self.anchor,
        }


@dataclass
class StateView:
    """Uniform monitor input: per-point curvature fields plus the measure.

    Mesh states carry one entry per vertex; analytic states are homogeneous,
    so a single entry with the total volume as weight represents them.
    """

    n: int
    a2: np.ndarray
    h2: np.ndarray
    aring2: np.ndarray
    weights: np.ndarray
    vol: float
    backend: str
    grad_a2: np.ndarray | None = None
    grad_h2: np.ndarray | None = None
    grad_aring2: np.ndarray | None = None
    _diameter: float | None = None
    _diameter_fn: object = None
    digest: str = ""

    def __post_init__(self):
        if not self.digest:
            self.digest = _digest(
                self.n, self.a2, self.h2, self.aring2, self.weights, self.vol
            )

    @property
    def diameter(self) -> float | None:
        if self._diameter is None and self._diameter_fn is not None:
            self._diameter = float(self._diameter_fn())
            self._diameter_fn = None
        return self._diameter


def _digest(*parts) -> str:
    hasher = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            hasher.update(np.ascontiguousarray(part).tobytes())
        else:
            hasher.update(repr(part).encode())
    return hasher.hexdigest()[:16]


def graph_diameter(imm: DiscreteImmersion, topo: MeshTopology | None = None) -> float:
    """Geodesic diameter of the 1-skeleton (exact all-pairs shortest paths)."""
    topo = topo or MeshTopology(imm)
    edges = topo.edges
    lengths = np.linalg.norm(
        imm.vertices[edges[:, 1]] - imm.vertices[edges[:, 0]], axis=1
    )
    nv = imm.num_vertices
    graph = coo_matrix(
        (
            np.concatenate([lengths, lengths]),
            (
                np.concatenate([edges[:, 0], edges[:, 1]]),
                np.concatenate([edges[:, 1], edges[:, 0]]),
            ),
        ),
        shape=(nv, nv),
    ).tocsr()
    dist = shortest_path(graph, method="D", directed=False)
    return float(dist.max())


def mesh_state_view(
    imm: DiscreteImmersion,
    forms: FundamentalForms | None = None,
    deriv: DerivativeData | None = None,
    topo: MeshTopology | None = None,
    with_gradients: bool = False,
) -> StateView:
    topo = topo or MeshTopology(imm)
    if forms is None:
        _, forms = jet_forms(imm, topo=topo)
    if deriv is None and with_gradients:
        frames, _ = jet_forms(imm, topo=topo)
        deriv = derivative_data(imm, frames, forms, topo=topo)
    weights = measure_weights(imm)
    return StateView(
        n=imm.intrinsic_dim,
        a2=forms.a2,
        h2=forms.h2,
        aring2=forms.aring2,
        weights=weights,
        vol=float(weights.sum()),
        backend="mesh",
        grad_a2=None if deriv is None else deriv.grad_a2,
        grad_h2=None if deriv is None else deriv.grad_h2,
        grad_aring2=None if deriv is None else deriv.grad_aring2,
        _diameter_fn=lambda: graph_diameter(imm, topo),
    )


def scene_state_view(scene, t: float) -> StateView:
    """Homogeneous view of an exact scene; gradients vanish identically."""
    if isinstance(scene, analytic.SphereScene):
        st = analytic.sphere_state(scene, t)
        diam = math.pi * st.r
    elif isinstance(scene, analytic.SphereProductScene):
        st = analytic.sphere_product_state(scene, t)
        diam = math.pi * math.hypot(st.a, st.b)
    else:
        raise TypeError(f"unsupported scene type {type(scene).__name__}")
    one = np.ones(1)
    zero = np.zeros(1)
    return StateView(
        n=scene.n,
        a2=st.a2 * one,
        h2=st.h2 * one,
        aring2=st.aring2 * one,
        weights=st.vol * one,
        vol=st.vol,
        backend="analytic",
        grad_a2=zero,
        grad_h2=zero,
        grad_aring2=zero,
        _diameter=diam,
    )


# ---------------------------------------------------------------------------
# individual monitors

def pinching_linear(view: StateView, a: float, b: float = 0.0) -> MonitorReport:
    """Check max(|A|^2 - a|H|^2 - b) <= 0 pointwise."""
    margin = float((view.a2 - a * view.h2 - b).max())
    return MonitorReport(
        name="pinching_linear",
        digest=view.digest,
        values={"a": a, "b": b, "max_margin": margin},
        verdict=HOLDS if margin <= 0 else VIOLATED,
        anchor="max(|A|^2 - a|H|^2 - b) <= 0",
    )


def pinching_andrews_baker(view: StateView) -> MonitorReport:
    """Dimension-dependent roundness pinching: |A|^2 <= c(n) |H|^2, n >= 3."""
    if view.n < 3:
        raise UnsupportedDimension("pinching constant defined for n >= 3")
    c = 4.0 / 9.0 if view.n == 3 else 1.0 / (view.n - 1.0)
    margin = float((view.a2 - c * view.h2).max())
    return MonitorReport(
        name="pinching_andrews_baker",
        digest=view.digest,
        values={"c": c, "max_margin": margin},
        verdict=HOLDS if margin <= 0 else VIOLATED,
        anchor="|A|^2 <= c(n)|H|^2 with c(3)=4/9, c(n)=1/(n-1)",
    )


def _chen_report(view: StateView) -> MonitorReport:
    n = view.n
    bound = n ** n * analytic.unit_ball_volume(n)
    total = float(view.weights @ np.sqrt(np.clip(view.h2, 0.0, None)) ** n)
    return MonitorReport(
        name="chen_total_mean_curvature",
        digest=view.digest,
        values={"integral": total, "bound": bound, "ratio": total / bound},
        verdict=HOLDS if total >= bound else VIOLATED,
        anchor="integral |H|^n dmu >= n^n omega_n",
    )


def _hmax_report(view: StateView) -> MonitorReport:
    n = view.n
    bound = n ** n * analytic.unit_ball_volume(n) / view.vol
    peak = float(view.h2.max())
    return MonitorReport(
        name="hmax_lower_bound",
        digest=view.digest,
        values={"h2_max": peak, "bound": bound, "ratio": peak / bound},
        verdict=HOLDS if peak >= bound else VIOLATED,
        anchor="max|H|^2 >= n^n omega_n / Vol",
    )


def _topping_report(view: StateView) -> MonitorReport:
    n = view.n
    integral = float(view.weights @ np.sqrt(np.clip(view.h2, 0.0, None)) ** (n - 1))
    diam = view.diameter
    ratio = None if diam is None or integral == 0 else diam / integral
    return MonitorReport(
        name="topping_ratio",
        digest=view.digest,
        values={"diameter": diam, "integral": integral, "ratio": ratio},
        verdict=INFORMATIONAL,
        anchor="diam(M) <= c * integral |H|^{n-1} dmu (c unspecified)",
    )


def _gradient_reports(view: StateView) -> list[MonitorReport]:
    # Both sides are least-squares estimates known to +- the fit-noise floor,
    # so the check is interval-valued: flag a violation only when no values
    # inside the noise bands satisfy the inequality.  The |grad A|^2 fields
    # carry 1/length^4 units, so the floor is applied at the state's own
    # curvature scale (max|A|^2)^2, which keeps the verdict invariant under
    # parabolic rescaling; at unit radius this is the plain 1e-2 floor up to
    # an O(1) factor.
    n = view.n
    if n < 2 or view.grad_a2 is None:
        return []
    band = GRADIENT_NOISE_FLOOR * max(float(view.a2.max()), 0.0) ** 2
    out = []
    for name, lhs_arr, coeff in (
        ("gradient_a_vs_aring", view.grad_a2, 3.0 * n / (2.0 * (n - 1.0))),
        ("gradient_h_vs_aring", view.grad_h2, 3.0 * n ** 2 / (2.0 * (n - 1.0))),
    ):
        raw = lhs_arr - coeff * view.grad_aring2
        margin = float(((lhs_arr - band) - coeff * (view.grad_aring2 + band)).max())
        out.append(
            MonitorReport(
                name=name,
                digest=view.digest,
                values={
                    "coefficient": coeff,
                    "max_margin": margin,
                    "raw_margin": float(raw.max()),
                    "noise_band": band,
                },
                verdict=HOLDS if margin <= 1e-12 else VIOLATED,
                anchor=f"pointwise |grad| bound with factor {coeff:g}, "
                f"noise band +-{GRADIENT_NOISE_FLOOR:g} at curvature scale",
            )
        )
    return out


def inequality_suite(view: StateView) -> list[MonitorReport]:
    """Chen, peak-|H|^2, diameter ratio, and the two gradient inequalities."""
    checks = [
        lambda: _chen_report(view),
        lambda: _hmax_report(view),
        lambda: _topping_report(view),
    ]
    reports = _evaluate(checks)
    reports.extend(_gradient_reports(view))
    return reports


def _evaluate(checks):
    workers = int(os.environ.get("MCFLOW_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda fn: fn(), checks))
    return [fn() for fn in checks]


def moser_ratio(trace, window: tuple[float, float] | None = None) -> MonitorReport:
    """Peak |H|^2 over [T0/2, T0] against the spacetime (n+2)-integral.

    The comparison constant is unspecified (it depends on sup|A| and T0), so
    both sides and their ratio are reported without a verdict.
    """
    records = trace.records
    if not records:
        raise WindowNotCovered("empty trace")
    n = trace.intrinsic_dim
    alpha = float(n + 2)
    t_last = records[-1].t
    if window is None:
        window = (0.5 * t_last, t_last)
    lo, hi = window
    if hi > t_last + 1e-14 or records[0].t > 0.0:
        raise WindowNotCovered(f"trace [{records[0].t}, {t_last}] misses [0, {hi}]")
    in_window = [r for r in records if lo - 1e-14 <= r.t <= hi + 1e-14]
    if not in_window:
        raise WindowNotCovered("no records inside the window")
    lhs = max(r.h2_max for r in in_window)
    times = np.array([r.t for r in records])
    integrals = np.array([r.st_integral_alpha.get(alpha, np.nan) for r in records])
    if np.isnan(integrals).any():
        raise WindowNotCovered(f"trace lacks the alpha={alpha:g} accumulator")
    total = float(np.interp(hi, times, integrals))
    rhs_base = total ** (2.0 / (n + 2.0))
    return MonitorReport(
        name="moser_ratio",
        digest=_digest(lo, hi, lhs, total),
        values={
            "window": [lo, hi],
            "lhs_h2_max": lhs,
            "spacetime_integral": total,
            "rhs_base": rhs_base,
            "ratio": lhs / rhs_base if rhs_base > 0 else math.inf,
        },
        verdict=INFORMATIONAL,
        anchor="max_window |H|^2 <= C * (spacetime |H|^{n+2} integral)^{2/(n+2)}",
    )


def blowup_estimate(trace) -> dict:
    """Collapse-time prediction T_hat = t + n / (2 max|H|^2).

    Exact on shrinking spheres, where |H|^2 = n / (2 (T - t)); the stabilized
    value is the median over the last 10 records.
    """
    records = trace.records
    if not records:
        raise WindowNotCovered("empty trace")
    n = trace.intrinsic_dim
    estimates = [r.t + n / (2.0 * r.h2_max) for r in records]
    return {
        "T_hat": estimates[-1],
        "T_hat_stabilized": float(np.median(estimates[-10:])),
        "method": "t + n/(2 max|H|^2), median of last 10 records",
        "series": estimates,
    }
