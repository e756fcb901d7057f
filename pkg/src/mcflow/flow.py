"""Time integration of the curvature flow on discrete immersions.

Two mean-curvature estimators are used deliberately: the jet fit drives the
explicit scheme and all diagnostics, while the implicit scheme moves vertices
through the Laplace-Beltrami identity H = Delta F of the current metric.
Their discrepancy is itself a logged diagnostic: a median gap above 10%
flags an under-resolved mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from .curvature import DEFAULT_RING, jet_forms
from .errors import (
    MaxStepsExceeded,
    SolverFailure,
    StepRejected,
    UnsupportedDimension,
    ValidationError,
)
from .mesh import (
    DiscreteImmersion,
    MeshTopology,
    element_measures,
    measure_weights,
)
from .monitors import SpacetimeAccumulator, lp_norm


@dataclass
class FlowState:
    immersion: DiscreteImmersion
    t: float = 0.0
    step_index: int = 0
    last_dt: float = 0.0


@dataclass
class StopRule:
    """Exactly one stop condition must be set."""

    t_end: float | None = None
    max_a2: float | None = None
    step_cap: int | None = None

    def __post_init__(self):
        given = [v for v in (self.t_end, self.max_a2, self.step_cap) if v is not None]
        if len(given) != 1:
            raise ValidationError("exactly one stop condition required", field="stop")
        if self.t_end is not None and self.t_end <= 0:
            raise ValidationError("t_end must be positive", field="stop.t_end")
        if self.max_a2 is not None and self.max_a2 <= 0:
            raise ValidationError("max_a2 must be positive", field="stop.max_a2")
        if self.step_cap is not None and self.step_cap < 1:
            raise ValidationError("step_cap must be >= 1", field="stop.step_cap")


@dataclass
class SchemeConfig:
    """Step-size policy: dt = min(cfl / max|A|^2, dt_max)."""

    scheme: str = "semi_implicit"
    cfl: float = 0.02
    dt_max: float = math.inf
    redistribute_every: int = 0
    stop: StopRule = field(default_factory=lambda: StopRule(step_cap=100))
    ring: int = DEFAULT_RING
    max_steps: int = 100_000

    def __post_init__(self):
        if self.scheme not in ("explicit", "semi_implicit"):
            raise ValidationError(f"unknown scheme {self.scheme!r}", field="scheme")
        if self.cfl <= 0:
            raise ValidationError("cfl must be positive", field="cfl")
        if self.scheme == "explicit" and self.cfl > 0.5:
            raise ValidationError("explicit scheme requires cfl <= 0.5", field="cfl")
        if self.dt_max <= 0:
            raise ValidationError("dt_max must be positive", field="dt_max")
        if self.redistribute_every < 0:
            raise ValidationError("redistribute_every must be >= 0", field="redistribute_every")


@dataclass
class TraceRecord:
    t: float
    dt: float
    vol: float
    h2_max: float
    h2_min: float
    a2_max: float
    aring_p_norms: dict
    st_integral_alpha: dict
    scheme: str

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "dt": self.dt,
            "vol": self.vol,
            "h2_max": self.h2_max,
            "h2_min": self.h2_min,
            "a2_max": self.a2_max,
            "aring_p_norms": {str(p): v for p, v in self.aring_p_norms.items()},
            "st_integral_alpha": {str(a): v for a, v in self.st_integral_alpha.items()},
            "scheme": self.scheme,
        }


@dataclass
class Snapshot:
    step: int
    t: float
    immersion: DiscreteImmersion
    scalars: dict


@dataclass
class FlowTrace:
    records: list
    snapshots: list
    final_state: FlowState
    status: str  # "stopped" | "singular"
    stop_reason: str
    intrinsic_dim: int

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


# ---------------------------------------------------------------------------
# Laplace-Beltrami assembly

def laplace_beltrami(imm: DiscreteImmersion):
    """Lumped mass vector and stiffness matrix of the current metric.

    Cotangent weights for surfaces, inverse segment lengths for curves; the
    operator is Delta = M^{-1} (-S) with S positive semidefinite.
    """
    nv = imm.num_vertices
    mass = measure_weights(imm)
    if imm.intrinsic_dim == 1:
        lengths = element_measures(imm)
        if (lengths <= 0).any():
            raise SolverFailure("zero-length segment in stiffness assembly")
        i, j = imm.elements[:, 0], imm.elements[:, 1]
        w = 1.0 / lengths
    else:
        x = imm.vertices
        tri = imm.elements
        rows = []
        cols = []
        vals = []
        for corner in range(3):
            a = tri[:, corner]
            b = tri[:, (corner + 1) % 3]
            c = tri[:, (corner + 2) % 3]
            u = x[b] - x[a]
            v = x[c] - x[a]
            cross2 = np.einsum("ij,ij->i", u, u) * np.einsum("ij,ij->i", v, v) - (
                np.einsum("ij,ij->i", u, v)
            ) ** 2
            area2 = np.sqrt(np.clip(cross2, 0.0, None))
            cot = np.einsum("ij,ij->i", u, v) / np.where(area2 > 0, area2, np.inf)
            rows.append(b)
            cols.append(c)
            vals.append(0.5 * cot)
        i = np.concatenate(rows)
        j = np.concatenate(cols)
        w = np.concatenate(vals)
    off = sparse.coo_matrix(
        (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
        shape=(nv, nv),
    ).tocsr()
    diag = np.asarray(off.sum(axis=1)).ravel()
    stiffness = sparse.diags(diag) - off
    return mass, stiffness


def laplace_mean_curvature(imm: DiscreteImmersion) -> np.ndarray:
    """H estimated as the Laplace-Beltrami image of the position."""
    mass, stiffness = laplace_beltrami(imm)
    return -(stiffness @ imm.vertices) / mass[:, None]


def estimator_discrepancy(imm, forms, topo=None) -> float:
    """Median relative gap between the jet-fit and Laplace-Beltrami H fields."""
    h_lb = laplace_mean_curvature(imm)
    diff = np.linalg.norm(h_lb - forms.mean_curvature, axis=1)
    scale = np.maximum(np.linalg.norm(forms.mean_curvature, axis=1), 1e-300)
    return float(np.median(diff / scale))


# ---------------------------------------------------------------------------
# steps

def _checked(imm: DiscreteImmersion, vertices: np.ndarray) -> DiscreteImmersion:
    if not np.isfinite(vertices).all():
        raise StepRejected("non-finite coordinates after step")
    new = imm.with_vertices(vertices)  # validation raises DegenerateElement
    return new


def step_explicit(
    state: FlowState,
    dt: float,
    h_field: np.ndarray | None = None,
    h_source: str = "jet",
    ring: int = DEFAULT_RING,
    topo: MeshTopology | None = None,
) -> FlowState:
    """Forward Euler: move vertices by dt * H.

    ``h_source`` selects the estimator ("jet" default, "laplace" for
    same-operator comparisons against the implicit scheme).
    """
    imm = state.immersion
    if h_field is None:
        if h_source == "jet":
            _, forms = jet_forms(imm, ring=ring, topo=topo)
            h_field = forms.mean_curvature
        elif h_source == "laplace":
            h_field = laplace_mean_curvature(imm)
        else:
            raise ValidationError(f"unknown h_source {h_source!r}", field="h_source")
    try:
        new = _checked(imm, imm.vertices + dt * h_field)
    except Exception as exc:
        raise StepRejected(f"explicit step degenerated: {exc}") from exc
    return FlowState(new, state.t + dt, state.step_index + 1, dt)


def step_semi_implicit(
    state: FlowState, dt: float, topo: MeshTopology | None = None
) -> FlowState:
    """Backward Euler on the frozen-metric Laplacian: (M + dt*S) X_new = M X_old.

    Unconditionally stable and first-order consistent; each ambient
    coordinate solves independently, so data in a coordinate subspace stays
    in it exactly.
    """
    imm = state.immersion
    try:
        mass, stiffness = laplace_beltrami(imm)
        system = (sparse.diags(mass) + dt * stiffness).tocsc()
        solver = splu(system)
        new_vertices = np.column_stack(
            [solver.solve(mass * imm.vertices[:, c]) for c in range(imm.ambient_dim)]
        )
    except StepRejected:
        raise
    except Exception as exc:
        raise SolverFailure(f"implicit solve failed: {exc}") from exc
    try:
        new = _checked(imm, new_vertices)
    except Exception as exc:
        raise StepRejected(f"implicit step degenerated: {exc}") from exc
    return FlowState(new, state.t + dt, state.step_index + 1, dt)


# ---------------------------------------------------------------------------
# tangential redistribution (curves)

def redistribute(imm: DiscreteImmersion) -> DiscreteImmersion:
    """Resample each closed curve cycle to uniform arc length.

    Periodic cubic interpolation against cumulative chord length; vertex
    count and connectivity are unchanged.  A final uniform rescale per cycle
    pins the total chord length, which otherwise drifts at the resampling
    order.
    """
    if imm.intrinsic_dim != 1:
        raise UnsupportedDimension("redistribution implemented for curves only")
    if not imm.closed:
        raise ValidationError("redistribution requires a closed curve", field="closed")
    topo = MeshTopology(imm)
    vertices = imm.vertices.copy()
    for cycle in topo.cycles():
        pts = imm.vertices[cycle]
        closed_pts = np.vstack([pts, pts[:1]])
        seg = np.linalg.norm(np.diff(closed_pts, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        spline = CubicSpline(s, closed_pts, bc_type="periodic")
        # arc length of the spline on a dense grid, then uniform targets
        dense = np.linspace(0.0, s[-1], 32 * len(cycle) + 1)
        dx = spline(dense, 1)
        speed = np.linalg.norm(dx, axis=1)
        arclen = np.concatenate(
            [[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(dense))]
        )
        targets = arclen[-1] * np.arange(len(cycle)) / len(cycle)
        params = np.interp(targets, arclen, dense)
        new_pts = spline(params)
        rolled = np.roll(new_pts, -1, axis=0)
        new_length = np.linalg.norm(rolled - new_pts, axis=1).sum()
        centroid = new_pts.mean(axis=0)
        vertices[cycle] = centroid + (new_pts - centroid) * (s[-1] / new_length)
    return imm.with_vertices(vertices)


# ---------------------------------------------------------------------------
# driver

@dataclass
class MonitorParams:
    p_list: tuple = (2.0,)
    alphas: tuple = ()  # empty -> (n + 2,)


def run_until(
    state: FlowState,
    cfg: SchemeConfig,
    monitors: MonitorParams | None = None,
    snapshot_every: int = 0,
    on_record=None,
) -> FlowTrace:
    """Advance the flow until the stop rule fires, recording each accepted step.

    Steps shrink as curvature concentrates (dt = cfl / max|A|^2), so the
    driver approaches the maximal time from below; element collapse ends the
    run with a ``singular`` verdict instead of surgery.
    """
    monitors = monitors or MonitorParams()
    imm = state.immersion
    n = imm.intrinsic_dim
    alphas = tuple(monitors.alphas) or (float(n + 2),)
    topo = MeshTopology(imm)
    accumulators = {a: SpacetimeAccumulator(alpha=a) for a in alphas}

    records: list[TraceRecord] = []
    snapshots: list[Snapshot] = []
    status, reason = "stopped", ""

    def observe(st: FlowState, dt: float):
        _, forms = jet_forms(st.immersion, ring=cfg.ring, topo=topo)
        weights = measure_weights(st.immersion)
        aring = np.sqrt(np.clip(forms.aring2, 0.0, None))
        habs = np.sqrt(np.clip(forms.h2, 0.0, None))
        for acc in accumulators.values():
            acc.update(float(weights @ habs ** acc.alpha), dt)
        records.append(
            TraceRecord(
                t=st.t,
                dt=dt,
                vol=float(weights.sum()),
                h2_max=float(forms.h2.max()),
                h2_min=float(forms.h2.min()),
                a2_max=float(forms.a2.max()),
                aring_p_norms={p: lp_norm(aring, p, weights) for p in monitors.p_list},
                st_integral_alpha={a: acc.value for a, acc in accumulators.items()},
                scheme=cfg.scheme,
            )
        )
        if on_record is not None:
            on_record(records[-1])
        if snapshot_every and (st.step_index % snapshot_every == 0 or dt == 0.0):
            snapshots.append(
                Snapshot(
                    st.step_index,
                    st.t,
                    st.immersion,
                    {"H2": forms.h2, "A2": forms.a2, "Aring2": forms.aring2, "weight": weights},
                )
            )
        return forms

    forms = observe(state, 0.0)
    accepted = 0
    while True:
        stop = cfg.stop
        if stop.t_end is not None and state.t >= stop.t_end - 1e-14:
            reason = "t_end"
            break
        if stop.max_a2 is not None and records[-1].a2_max >= stop.max_a2:
            reason = "max_a2"
            break
        if stop.step_cap is not None and accepted >= stop.step_cap:
            reason = "step_cap"
            break
        if accepted >= cfg.max_steps:
            raise MaxStepsExceeded(f"no stop condition after {accepted} steps")

        dt = min(cfg.cfl / records[-1].a2_max, cfg.dt_max)
        if stop.t_end is not None:
            dt = min(dt, stop.t_end - state.t)

        try:
            if cfg.scheme == "explicit":
                state = step_explicit(
                    state, dt, h_field=forms.mean_curvature, ring=cfg.ring, topo=topo
                )
            else:
                state = step_semi_implicit(state, dt, topo=topo)
        except StepRejected as exc:
            status, reason = "singular", f"step rejected: {exc}"
            break

        accepted += 1
        if (
            n == 1
            and cfg.redistribute_every
            and accepted % cfg.redistribute_every == 0
        ):
            state = FlowState(
                redistribute(state.immersion), state.t, state.step_index, state.last_dt
            )
        forms = observe(state, dt)

    if snapshot_every and (not snapshots or snapshots[-1].step != state.step_index):
        _, final_forms = jet_forms(state.immersion, ring=cfg.ring, topo=topo)
        weights = measure_weights(state.immersion)
        snapshots.append(
            Snapshot(
                state.step_index,
                state.t,
                state.immersion,
                {
                    "H2": final_forms.h2,
                    "A2": final_forms.a2,
                    "Aring2": final_forms.aring2,
                    "weight": weights,
                },
            )
        )
    return FlowTrace(
        records=records,
        snapshots=snapshots,
        final_state=state,
        status=status,
        stop_reason=reason,
        intrinsic_dim=n,
    )
