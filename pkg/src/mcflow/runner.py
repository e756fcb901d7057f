"""Run orchestration: drive flows, persist artifacts, assemble check suites.

Artifact layout of one run directory::

    MANIFEST.json     status + config (rewritten on completion)
    trace.ndjson      one record per accepted step, line-atomic appends
    snapshots/        CSV snapshots + connectivity sidecars + index.json
    monitors.json     final monitor reports
    summary.json      collapse-time estimate, roundness, spacetime norms
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import analytic, monitors as mon, rescale as rsc, scenes
from .config import RunConfig, SceneSpec
from .curvature import codazzi_residual, derivative_data, gauss_residual, jet_forms
from .errors import (
    McflowError,
    UnknownQuantity,
    ValidationError,
)
from .flow import (
    FlowState,
    FlowTrace,
    MonitorParams,
    SchemeConfig,
    TraceRecord,
    estimator_discrepancy,
    run_until,
)
from .mesh import DiscreteImmersion, MeshTopology, measure_weights, read_snapshot, write_snapshot
from .monitors import (
    HOLDS,
    INFORMATIONAL,
    VIOLATED,
    MonitorReport,
    blowup_estimate,
    inequality_suite,
    mesh_state_view,
    moser_ratio,
    pinching_andrews_baker,
    pinching_linear,
    scene_state_view,
)

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"not JSON-serializable: {type(value)!r}")


# ---------------------------------------------------------------------------
# analytic flow driver

def run_analytic_trace(
    scene, cfg: SchemeConfig, params: MonitorParams, on_record=None
) -> FlowTrace:
    """Sample the closed-form solution on the same step-size policy as the
    mesh driver; sphere spacetime integrals use the exact formula."""
    n = scene.n
    alphas = tuple(params.alphas) or (float(n + 2),)
    is_sphere = isinstance(scene, analytic.SphereScene)

    def state_at(t):
        return (
            analytic.sphere_state(scene, t)
            if is_sphere
            else analytic.sphere_product_state(scene, t)
        )

    integrals = {a: 0.0 for a in alphas}
    last_integrand = {a: None for a in alphas}
    records = []

    def observe(t, dt):
        st = state_at(t)
        habs = math.sqrt(st.h2)
        for a in alphas:
            if is_sphere:
                integrals[a] = analytic.spacetime_h_integral(scene, a, t)
            else:
                value = habs ** a * st.vol
                if last_integrand[a] is not None and dt > 0:
                    integrals[a] += 0.5 * dt * (last_integrand[a] + value)
                last_integrand[a] = value
        aring_abs = math.sqrt(max(st.aring2, 0.0))
        records.append(
            TraceRecord(
                t=t,
                dt=dt,
                vol=st.vol,
                h2_max=st.h2,
                h2_min=st.h2,
                a2_max=st.a2,
                aring_p_norms={p: aring_abs * st.vol ** (1.0 / p) for p in params.p_list},
                st_integral_alpha=dict(integrals),
                scheme="analytic",
            )
        )
        if on_record is not None:
            on_record(records[-1])
        return st

    t = 0.0
    st = observe(t, 0.0)
    accepted = 0
    reason = ""
    while True:
        stop = cfg.stop
        if stop.t_end is not None and t >= stop.t_end - 1e-14:
            reason = "t_end"
            break
        if stop.max_a2 is not None and st.a2 >= stop.max_a2:
            reason = "max_a2"
            break
        if stop.step_cap is not None and accepted >= stop.step_cap:
            reason = "step_cap"
            break
        dt = min(cfg.cfl / st.a2, cfg.dt_max)
        if stop.t_end is not None:
            dt = min(dt, stop.t_end - t)
        dt = min(dt, 0.5 * (scene.collapse_time - t))  # never step past collapse
        t += dt
        accepted += 1
        st = observe(t, dt)
    return FlowTrace(
        records=records,
        snapshots=[],
        final_state=None,
        status="stopped",
        stop_reason=reason,
        intrinsic_dim=n,
    )


# ---------------------------------------------------------------------------
# the run command

def run(config: RunConfig, out_dir) -> int:
    """Execute one configured flow and write all artifacts; returns exit code."""
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    snap_dir = os.path.join(out_dir, "snapshots")
    manifest_path = os.path.join(out_dir, "MANIFEST.json")
    manifest = {
        "status": "running",
        "config": config.to_dict(),
        "artifacts": ["trace.ndjson"],
        "error": None,
    }
    _dump(manifest, manifest_path)

    params = MonitorParams(p_list=config.monitors.p_list, alphas=config.monitors.alphas)
    trace_path = os.path.join(out_dir, "trace.ndjson")
    try:
        built = config.scene.build()
        # records stream to disk line-by-line so an interrupted run still
        # leaves a valid NDJSON prefix next to the MANIFEST
        with open(trace_path, "w") as fh:

            def emit(rec):
                fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
                fh.flush()

            if config.scene.is_analytic:
                trace = run_analytic_trace(built, config.scheme, params, on_record=emit)
            else:
                state = FlowState(immersion=built)
                trace = run_until(
                    state,
                    config.scheme,
                    params,
                    snapshot_every=config.snapshot_every,
                    on_record=emit,
                )
        reports, summary = _final_reports(config, built, trace)
        if trace.snapshots:
            _write_snapshots(trace, snap_dir)
            manifest["artifacts"].append("snapshots")
        _dump([r.to_json_dict() for r in reports], os.path.join(out_dir, "monitors.json"))
        _dump(summary, os.path.join(out_dir, "summary.json"))
        manifest["artifacts"].extend(["monitors.json", "summary.json"])
        manifest["status"] = "complete"
        _dump(manifest, manifest_path)
    except McflowError as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        _dump(manifest, manifest_path)
        return EXIT_NUMERICAL

    violated = [
        r.name for r in reports if r.verdict == VIOLATED
    ]
    return EXIT_VIOLATION if violated else EXIT_OK


def _write_snapshots(trace: FlowTrace, snap_dir: str) -> None:
    os.makedirs(snap_dir, exist_ok=True)
    index = []
    for snap in trace.snapshots:
        name = f"step_{snap.step:06d}.csv"
        write_snapshot(snap.immersion, os.path.join(snap_dir, name), snap.scalars)
        index.append({"step": snap.step, "t": snap.t, "file": name})
    _dump(index, os.path.join(snap_dir, "index.json"))


def _final_reports(config: RunConfig, built, trace: FlowTrace):
    reports: list[MonitorReport] = []
    n = trace.intrinsic_dim
    summary: dict = {
        "status": trace.status,
        "stop_reason": trace.stop_reason,
        "t_final": trace.records[-1].t,
        "spacetime_norms": {
            str(a): trace.records[-1].st_integral_alpha[a] ** (1.0 / a)
            for a in trace.records[-1].st_integral_alpha
        },
    }

    if config.scene.is_analytic:
        view = scene_state_view(built, trace.records[-1].t)
    else:
        imm = trace.final_state.immersion
        topo = MeshTopology(imm)
        frames, forms = jet_forms(imm, ring=config.scheme.ring, topo=topo)
        deriv = (
            derivative_data(imm, frames, forms, ring=config.scheme.ring, topo=topo)
            if n >= 2
            else None
        )
        view = mesh_state_view(imm, forms, deriv, topo)
        gap = estimator_discrepancy(imm, forms, topo)
        summary["estimator_discrepancy_median"] = gap
        summary["under_resolved"] = gap > 0.10

    reports.append(pinching_linear(view, config.monitors.a, config.monitors.b))
    if n >= 3:
        reports.append(pinching_andrews_baker(view))
    reports.extend(inequality_suite(view))
    try:
        reports.append(moser_ratio(trace))
    except McflowError:
        pass

    blowup = blowup_estimate(trace)
    summary["T_hat"] = blowup["T_hat"]
    summary["T_hat_stabilized"] = blowup["T_hat_stabilized"]

    if trace.snapshots:
        center_info = rsc.estimate_center(trace)
        summary["center"] = center_info["center"].tolist()
        summary["center_drift"] = center_info["drift"]
        summary["center_distance_to_h2_peak"] = center_info["distance_to_h2_peak"]
        last = trace.snapshots[-1]
        if last.t < blowup["T_hat_stabilized"]:
            state = rsc.parabolic_rescale(
                last.immersion, last.t, center_info["center"], blowup["T_hat_stabilized"]
            )
            summary["roundness"] = rsc.roundness_metrics(state.immersion)
            summary["subspace"] = rsc.subspace_dimension(state.immersion)

    summary["verdicts"] = {r.name: r.verdict for r in reports}
    return reports, summary


# ---------------------------------------------------------------------------
# trace directory helpers

def read_trace_records(trace_dir) -> list[TraceRecord]:
    path = os.path.join(str(trace_dir), "trace.ndjson")
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            records.append(
                TraceRecord(
                    t=raw["t"],
                    dt=raw["dt"],
                    vol=raw["vol"],
                    h2_max=raw["h2_max"],
                    h2_min=raw["h2_min"],
                    a2_max=raw["a2_max"],
                    aring_p_norms={float(k): v for k, v in raw["aring_p_norms"].items()},
                    st_integral_alpha={
                        float(k): v for k, v in raw["st_integral_alpha"].items()
                    },
                    scheme=raw["scheme"],
                )
            )
    return records


@dataclass
class _DiskTrace:
    records: list
    snapshots: list
    intrinsic_dim: int


def load_trace(trace_dir):
    """Records plus snapshots of a finished run directory."""
    trace_dir = str(trace_dir)
    records = read_trace_records(trace_dir)
    manifest_path = os.path.join(trace_dir, "MANIFEST.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    scene = SceneSpec(
        kind=manifest["config"]["scene"]["kind"],
        params={k: v for k, v in manifest["config"]["scene"].items() if k != "kind"},
    )
    n = scene.intrinsic_dim()
    snapshots = []
    index_path = os.path.join(trace_dir, "snapshots", "index.json")
    if os.path.exists(index_path):
        with open(index_path) as fh:
            index = json.load(fh)
        from .flow import Snapshot

        for entry in index:
            imm, scalars = read_snapshot(
                os.path.join(trace_dir, "snapshots", entry["file"]), intrinsic_dim=n
            )
            snapshots.append(Snapshot(entry["step"], entry["t"], imm, scalars))
    return _DiskTrace(records=records, snapshots=snapshots, intrinsic_dim=n)


def rescale_trace(trace_dir, T_hat=None, center=None, out_dir=None) -> dict:
    """Rescale every stored snapshot and emit the roundness time series."""
    trace = load_trace(trace_dir)
    if not trace.snapshots:
        raise ValidationError("trace directory has no snapshots", field="trace")
    if T_hat is None:
        T_hat = blowup_estimate(trace)["T_hat_stabilized"]
    if center is None:
        center = rsc.estimate_center(trace)["center"]
    center = np.asarray(center, dtype=float)
    out_dir = os.path.join(str(trace_dir), "rescaled") if out_dir is None else str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    series = []
    for snap in trace.snapshots:
        if snap.t >= T_hat:
            continue
        state = rsc.parabolic_rescale(snap.immersion, snap.t, center, T_hat)
        _, forms = jet_forms(state.immersion)
        metrics = rsc.roundness_metrics(state.immersion, forms)
        name = f"rescaled_{snap.step:06d}.csv"
        write_snapshot(
            state.immersion,
            os.path.join(out_dir, name),
            {
                "H2": forms.h2,
                "A2": forms.a2,
                "Aring2": forms.aring2,
                "weight": measure_weights(state.immersion),
            },
        )
        series.append(
            {"step": snap.step, "t": snap.t, "lambda": state.lam, "file": name, **metrics}
        )
    result = {"T_hat": float(T_hat), "center": center.tolist(), "series": series}
    _dump(result, os.path.join(out_dir, "roundness.json"))
    return result


def emit_plotdata(trace_dir, quantities, out_dir=None) -> str:
    """Whitespace-separated columns of trace quantities, one file per group."""
    if not quantities:
        raise ValidationError("empty quantity list", field="vars")
    records = read_trace_records(trace_dir)

    def column(name):
        if name in ("t", "dt", "vol", "h2_max", "h2_min", "a2_max"):
            return [getattr(r, name) for r in records]
        if name.startswith("aring_"):
            p = float(name.split("_", 1)[1])
            try:
                return [r.aring_p_norms[p] for r in records]
            except KeyError:
                raise UnknownQuantity(f"trace lacks the p={p:g} norm") from None
        if name.startswith("st_integral"):
            suffix = name[len("st_integral") :].lstrip("_")
            keys = sorted(records[0].st_integral_alpha)
            alpha = float(suffix) if suffix else keys[0]
            if alpha not in records[0].st_integral_alpha:
                raise UnknownQuantity(f"trace lacks the alpha={alpha:g} integral")
            return [r.st_integral_alpha[alpha] for r in records]
        raise UnknownQuantity(f"unknown quantity {name!r}")

    cols = [column(q) for q in quantities]
    out_dir = os.path.join(str(trace_dir), "plots") if out_dir is None else str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "_".join(quantities) + ".dat")
    with open(path, "w") as fh:
        for row in zip(*cols):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path


# ---------------------------------------------------------------------------
# check suites

def _identity_reports(name: str, scene_or_imm, refine_pair=None) -> list[MonitorReport]:
    """Tracefree-trace and norm-decomposition identities (hard 1e-12 checks),
    plus informational structural residuals."""
    reports = []
    if isinstance(scene_or_imm, DiscreteImmersion):
        imm = scene_or_imm
        topo = MeshTopology(imm)
        frames, forms = jet_forms(imm, topo=topo)
        n = imm.intrinsic_dim
        trace_comp = np.einsum("vkaa->vk", forms.aring)
        scale = np.maximum(np.sqrt(forms.a2)[:, None], 1e-300)
        trace_rel = float(np.abs(trace_comp / scale).max())
        decomp_rel = float(
            (np.abs(forms.a2 - forms.aring2 - forms.h2 / n) / np.maximum(forms.a2, 1e-300)).max()
        )
        gauss = float(np.abs(gauss_residual(imm, forms, topo)).mean())
        deriv = derivative_data(imm, frames, forms, topo=topo)
        codazzi = float(codazzi_residual(deriv).mean())
        digest = mon.mesh_state_view(imm, forms, topo=topo).digest
    else:
        scene = scene_or_imm
        h = analytic.scene_form_components(scene, 0.0)
        n = scene.n
        trace_comp = np.einsum("kaa->k", h - np.trace(h, axis1=1, axis2=2)[:, None, None] * np.eye(n) / n)
        a2 = float(np.einsum("kab,kab->", h, h))
        tr = np.trace(h, axis1=1, axis2=2)
        h2 = float(tr @ tr)
        aring = h - tr[:, None, None] * np.eye(n) / n
        aring2 = float(np.einsum("kab,kab->", aring, aring))
        trace_rel = float(np.abs(trace_comp).max() / max(math.sqrt(a2), 1e-300))
        decomp_rel = abs(a2 - aring2 - h2 / n) / max(a2, 1e-300)
        gauss = codazzi = 0.0
        digest = mon.scene_state_view(scene, 0.0).digest

    reports.append(
        MonitorReport(
            name=f"{name}:tracefree_trace",
            digest=digest,
            values={"max_rel": trace_rel, "tol": 1e-12},
            verdict=HOLDS if trace_rel <= 1e-12 else VIOLATED,
            anchor="trace(Aring^alpha) = 0",
        )
    )
    reports.append(
        MonitorReport(
            name=f"{name}:norm_decomposition",
            digest=digest,
            values={"max_rel": decomp_rel, "tol": 1e-12},
            verdict=HOLDS if decomp_rel <= 1e-12 else VIOLATED,
            anchor="|A|^2 = |Aring|^2 + |H|^2/n",
        )
    )
    reports.append(
        MonitorReport(
            name=f"{name}:structural_residuals",
            digest=digest,
            values={"gauss_mean_abs": gauss, "codazzi_mean": codazzi},
            verdict=INFORMATIONAL,
            anchor="intrinsic curvature vs form product; derivative symmetry",
        )
    )
    return reports


def default_battery(fast: bool = True) -> list[tuple[str, object]]:
    """Battery scenes: mesh sphere, ellipsoid, Clifford torus, analytic product."""
    subdiv = 3 if fast else 4
    resolution = 32 if fast else 64
    return [
        ("sphere", scenes.icosphere(subdiv=subdiv, r0=1.0)),
        ("ellipsoid", scenes.ellipsoid([1.2, 1.0, 0.9], subdiv=subdiv)),
        ("clifford_torus", scenes.clifford_torus(1.0, 1.0, resolution=resolution)),
        ("s2xs1", analytic.SphereProductScene(p=2, q=1)),
    ]


def check_suite(suite: str, scene: SceneSpec | None = None, fast: bool = True):
    """Run the identities or inequalities suite; returns (reports, exit_code)."""
    if scene is not None:
        battery = [(scene.kind, scene.build())]
    else:
        battery = default_battery(fast=fast)

    reports: list[MonitorReport] = []
    for name, item in battery:
        if suite == "identities":
            reports.extend(_identity_reports(name, item))
        elif suite == "inequalities":
            if isinstance(item, DiscreteImmersion):
                view = mesh_state_view(item, with_gradients=item.intrinsic_dim >= 2)
            else:
                view = scene_state_view(item, 0.0)
            suite_reports = inequality_suite(view)
            for rep in suite_reports:
                rep.name = f"{name}:{rep.name}"
            reports.extend(suite_reports)
            if view.n >= 3:
                rep = pinching_andrews_baker(view)
                rep.name = f"{name}:{rep.name}"
                rep.verdict = INFORMATIONAL  # battery includes non-pinched scenes
                reports.extend([rep])
        else:
            raise ValidationError(f"unknown suite {suite!r}", field="suite")
    code = EXIT_VIOLATION if any(r.verdict == VIOLATED for r in reports) else EXIT_OK
    return reports, code


def oracle_record(scene: SceneSpec, t: float) -> dict:
    """Closed-form state of an analytic scene as a JSON-ready record."""
    built = scene.build()
    if isinstance(built, analytic.SphereScene):
        st = analytic.sphere_state(built, t)
        rec = {
            "kind": "sphere",
            "t": t,
            "r": st.r,
            "h2": st.h2,
            "a2": st.a2,
            "aring2": st.aring2,
            "vol": st.vol,
            "T": st.T,
            "spacetime_norm_n_plus_2": analytic.spacetime_h_norm_closed_form(
                built, float(built.n + 2), t
            )
            if t > 0
            else 0.0,
        }
    elif isinstance(built, analytic.SphereProductScene):
        st = analytic.sphere_product_state(built, t)
        rec = {
            "kind": "sphere_product",
            "t": t,
            "a": st.a,
            "b": st.b,
            "h2": st.h2,
            "a2": st.a2,
            "aring2": st.aring2,
            "vol": st.vol,
            "T": st.T,
        }
    else:
        raise ValidationError("oracle requires an analytic scene", field="scene")
    return rec
