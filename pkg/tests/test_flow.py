import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_rotation
from mcflow.curvature import jet_forms
from mcflow.errors import (
    MaxStepsExceeded,
    StepRejected,
    UnsupportedDimension,
    ValidationError,
)
from mcflow.flow import (
    FlowState,
    MonitorParams,
    SchemeConfig,
    StopRule,
    estimator_discrepancy,
    laplace_mean_curvature,
    redistribute,
    run_until,
    step_explicit,
    step_semi_implicit,
)
from mcflow.mesh import DiscreteImmersion, element_measures, measure_weights
from mcflow.scenes import embed_immersion, icosphere, polygon_circle

ICO4_EDGE_SQ = (1.0514622 / 16.0) ** 2  # squared edge length of the subdiv-4 icosphere


def mean_radius(imm, weights=None):
    w = measure_weights(imm) if weights is None else weights
    centroid = (w[:, None] * imm.vertices).sum(axis=0) / w.sum()
    return float(w @ np.linalg.norm(imm.vertices - centroid, axis=1) / w.sum())


def fourier_curve(coeffs_cos, coeffs_sin, segments=256):
    t = 2 * np.pi * np.arange(segments) / segments
    r = np.ones_like(t)
    for k, c in enumerate(coeffs_cos, start=1):
        r += c * np.cos(k * t)
    for k, c in enumerate(coeffs_sin, start=1):
        r += c * np.sin(k * t)
    verts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    els = np.column_stack([np.arange(segments), (np.arange(segments) + 1) % segments])
    return DiscreteImmersion(verts, els.astype(np.int64), 1)


class TestExplicitStep:
    def test_icosphere_single_step(self, icosphere4):
        state = step_explicit(FlowState(immersion=icosphere4), 1e-3)
        assert mean_radius(state.immersion) == pytest.approx(1.0 - 2e-3, abs=1e-4)
        assert state.t == 1e-3
        assert state.step_index == 1

    def test_translation_equivariance_exact(self):
        imm = icosphere(subdiv=2)
        shift = np.array([3.0, -1.0, 2.0])
        a = step_explicit(FlowState(immersion=imm), 1e-3)
        b = step_explicit(FlowState(immersion=imm.transformed(translation=shift)), 1e-3)
        assert np.allclose(
            b.immersion.vertices, a.immersion.vertices + shift, atol=1e-12
        )

    def test_circle_single_step(self):
        imm = polygon_circle(segments=256, r0=1.0)
        state = step_explicit(FlowState(immersion=imm), 1e-3)
        r_new = np.linalg.norm(state.immersion.vertices, axis=1)
        assert np.abs(r_new - math.sqrt(1 - 2e-3)).max() < 5e-6

    def test_blows_up_beyond_diffusion_limit(self, icosphere4):
        # ten steps at dt ~ 10x the diffusion limit wreck the mesh
        state = FlowState(immersion=icosphere4)
        try:
            for _ in range(12):
                state = step_explicit(state, 10 * ICO4_EDGE_SQ / 2)
            _, forms = jet_forms(state.immersion)
            spread = forms.h2.max() / forms.h2.min()
        except StepRejected:
            spread = math.inf
        assert spread > 1e3


class TestSemiImplicitStep:
    def test_stable_at_ten_times_explicit_limit(self, icosphere4):
        # dt tracks 10x the instantaneous diffusion limit for 100 steps;
        # each step stays within 1% of the closed-form radius update
        cfl = 10 * ICO4_EDGE_SQ  # dt = cfl r^2 / n = 10 * (h_t^2 / 2)
        cfg = SchemeConfig(scheme="semi_implicit", cfl=cfl, stop=StopRule(step_cap=100))
        trace = run_until(FlowState(immersion=icosphere4), cfg)
        assert len(trace.records) == 101
        prev = trace.records[0]
        for rec in trace.records[1:]:
            r_prev = math.sqrt(prev.vol / (4 * math.pi))
            r_pred = math.sqrt(r_prev ** 2 - 4 * rec.dt)
            r_now = math.sqrt(rec.vol / (4 * math.pi))
            assert abs(r_now - r_pred) / r_pred <= 1e-2
            assert rec.dt >= 5 * (ICO4_EDGE_SQ * r_prev ** 2) / 2
            assert rec.h2_max / rec.h2_min < 1.2  # mesh stays round
            prev = rec

    def test_richardson_order_two_against_shared_operator(self):
        # same spatial operator on both sides isolates the time discretization
        imm = icosphere(subdiv=2)
        state = FlowState(immersion=imm)

        def gap(dt):
            a = step_semi_implicit(state, dt)
            b = step_explicit(state, dt, h_source="laplace")
            return np.abs(a.immersion.vertices - b.immersion.vertices).max()

        ratio = gap(2e-3) / gap(1e-3)
        assert 3.3 < ratio < 4.7

    def test_coordinate_subspace_preserved_exactly(self):
        imm = embed_immersion(icosphere(subdiv=2), 5)
        state = step_semi_implicit(FlowState(immersion=imm), 5e-3)
        assert np.abs(state.immersion.vertices[:, 3:]).max() == 0.0

    def test_radius_tracks_oracle_with_small_cfl(self, icosphere4):
        cfg = SchemeConfig(
            scheme="semi_implicit", cfl=0.005, stop=StopRule(t_end=0.05)
        )
        trace = run_until(FlowState(immersion=icosphere4), cfg)
        rec = trace.records[-1]
        r2_exact = 1.0 - 4.0 * rec.t
        r2_mesh = rec.vol / (4 * math.pi)
        assert abs(r2_mesh - r2_exact) <= 5e-3


class TestRunUntil:
    def test_step_cap_honored_exactly(self):
        imm = icosphere(subdiv=2)
        cfg = SchemeConfig(stop=StopRule(step_cap=7))
        trace = run_until(FlowState(immersion=imm), cfg)
        assert trace.stop_reason == "step_cap"
        assert len(trace.records) == 8  # initial sample + 7 accepted steps

    def test_vol_strictly_decreasing(self, icosphere4):
        cfg = SchemeConfig(stop=StopRule(step_cap=20))
        trace = run_until(FlowState(immersion=icosphere4), cfg)
        vols = [r.vol for r in trace.records]
        assert all(b < a for a, b in zip(vols, vols[1:]))

    def test_max_a2_stop(self, icosphere4):
        cfg = SchemeConfig(cfl=0.02, stop=StopRule(max_a2=200.0))
        trace = run_until(FlowState(immersion=icosphere4), cfg)
        assert trace.stop_reason == "max_a2"
        assert trace.records[-1].a2_max >= 200.0
        # r^2 at the stop is near n / maxA2
        r2 = trace.records[-1].vol / (4 * math.pi)
        assert r2 == pytest.approx(2.0 / 200.0, rel=0.15)

    def test_dt_policy_bound(self, icosphere4):
        cfg = SchemeConfig(cfl=0.01, dt_max=1e-3, stop=StopRule(step_cap=15))
        trace = run_until(FlowState(immersion=icosphere4), cfg)
        prev = trace.records[0]
        for rec in trace.records[1:]:
            assert rec.dt <= min(cfg.cfl / prev.a2_max, cfg.dt_max) + 1e-15
            prev = rec

    def test_t_end_reached(self, icosphere4):
        cfg = SchemeConfig(cfl=0.05, stop=StopRule(t_end=0.0123))
        trace = run_until(FlowState(immersion=icosphere4), cfg)
        assert trace.records[-1].t == pytest.approx(0.0123, abs=1e-12)

    def test_max_steps_safety(self):
        imm = icosphere(subdiv=1)
        cfg = SchemeConfig(cfl=1e-6, stop=StopRule(t_end=1e9), max_steps=5)
        with pytest.raises(MaxStepsExceeded):
            run_until(FlowState(immersion=imm), cfg)

    def test_discrete_volume_decay_identity(self, icosphere4):
        # per-step |dVol/dt + integral(|H|^2)| <= 5% of the integral
        params = MonitorParams(alphas=(2.0, 4.0))
        cfg = SchemeConfig(cfl=0.01, stop=StopRule(step_cap=25))
        trace = run_until(FlowState(immersion=icosphere4), cfg, params)
        for prev, rec in zip(trace.records, trace.records[1:]):
            flux = (
                rec.st_integral_alpha[2.0] - prev.st_integral_alpha[2.0]
            ) / rec.dt  # trapezoid mean of the |H|^2 integral over the step
            dvol = (rec.vol - prev.vol) / rec.dt
            assert abs(dvol + flux) <= 0.05 * flux

    def test_oracle_gap_shrinks_under_refinement(self):
        gaps = []
        for subdiv in (2, 3):
            imm = icosphere(subdiv=subdiv)
            cfg = SchemeConfig(cfl=0.004, stop=StopRule(t_end=0.04))
            trace = run_until(FlowState(immersion=imm), cfg)
            worst = max(
                abs(r.vol / (4 * math.pi) - (1.0 - 4.0 * r.t)) for r in trace.records
            )
            gaps.append(worst)
        assert gaps[1] < gaps[0]

    def test_trace_commutes_with_isometry(self):
        imm = icosphere(subdiv=2)
        q = random_rotation(3, seed=11)
        shift = np.array([0.4, -2.0, 1.1])
        cfg = SchemeConfig(cfl=0.02, stop=StopRule(step_cap=10))
        a = run_until(FlowState(immersion=imm), cfg)
        b = run_until(FlowState(immersion=imm.transformed(rotation=q, translation=shift)), cfg)
        for ra, rb in zip(a.records, b.records):
            for attr in ("t", "dt", "vol", "h2_max", "h2_min", "a2_max"):
                va, vb = getattr(ra, attr), getattr(rb, attr)
                assert abs(va - vb) <= 1e-10 * max(abs(va), 1.0)

    def test_singular_stop_on_collapse(self):
        # drive a tiny sphere hard into collapse: elements degenerate
        imm = icosphere(subdiv=1, r0=0.05)
        cfg = SchemeConfig(
            scheme="semi_implicit", cfl=0.9, dt_max=1.0, stop=StopRule(t_end=10.0)
        )
        trace = run_until(FlowState(immersion=imm), cfg)
        assert trace.status == "singular" or trace.records[-1].a2_max > 1e4


class TestCurveFlow:
    def test_circle_shrinks_on_oracle(self):
        imm = polygon_circle(segments=256, r0=1.0)
        cfg = SchemeConfig(
            scheme="semi_implicit", cfl=0.01, redistribute_every=10, stop=StopRule(t_end=0.2)
        )
        trace = run_until(FlowState(immersion=imm), cfg)
        rec = trace.records[-1]
        # circle: r^2 = 1 - 2t, length = 2 pi r
        r_exact = math.sqrt(1 - 2 * rec.t)
        assert rec.vol / (2 * math.pi) == pytest.approx(r_exact, rel=5e-3)

    def test_explicit_curve_run(self):
        imm = polygon_circle(segments=128, r0=1.0)
        cfg = SchemeConfig(
            scheme="explicit", cfl=0.5, dt_max=5e-4, stop=StopRule(step_cap=40)
        )
        trace = run_until(FlowState(immersion=imm), cfg)
        rec = trace.records[-1]
        assert rec.vol / (2 * math.pi) == pytest.approx(math.sqrt(1 - 2 * rec.t), rel=1e-2)


class TestRedistribute:
    def test_uniform_circle_fixed_point(self):
        imm = polygon_circle(segments=256)
        out = redistribute(imm)
        assert np.abs(out.vertices - imm.vertices).max() <= 1e-10

    def test_clustered_circle_uniformized(self):
        angles = 2 * np.pi * np.linspace(0, 1, 256, endpoint=False) ** 1.5
        imm = polygon_circle(angles=angles)
        out = redistribute(imm)
        seg = element_measures(out)
        assert seg.max() / seg.min() <= 1.01

    @settings(max_examples=15, deadline=None)
    @given(
        c1=st.floats(-0.15, 0.15),
        c2=st.floats(-0.1, 0.1),
        s3=st.floats(-0.08, 0.08),
    )
    def test_length_preserved(self, c1, c2, s3):
        imm = fourier_curve([c1, c2], [0.0, 0.0, s3])
        before = element_measures(imm).sum()
        after = element_measures(redistribute(imm)).sum()
        assert abs(after - before) / before <= 1e-6

    def test_requires_curve(self, icosphere4):
        with pytest.raises(UnsupportedDimension):
            redistribute(icosphere4)


class TestEstimatorDiscrepancy:
    def test_resolved_sphere_is_small(self, icosphere4, icosphere4_forms):
        _, _, forms = icosphere4_forms
        assert estimator_discrepancy(icosphere4, forms) < 0.1

    def test_laplace_h_points_inward(self, icosphere4):
        h = laplace_mean_curvature(icosphere4)
        dots = np.einsum("vd,vd->v", h, icosphere4.vertices)
        assert (dots < 0).all()


class TestSchemeConfigValidation:
    def test_explicit_cfl_cap(self):
        with pytest.raises(ValidationError):
            SchemeConfig(scheme="explicit", cfl=0.6, stop=StopRule(step_cap=1))

    def test_exactly_one_stop(self):
        with pytest.raises(ValidationError):
            StopRule()
        with pytest.raises(ValidationError):
            StopRule(t_end=1.0, step_cap=5)

    def test_unknown_scheme(self):
        with pytest.raises(ValidationError):
            SchemeConfig(scheme="leapfrog", stop=StopRule(step_cap=1))
