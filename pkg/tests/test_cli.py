import json
import math
import os

import numpy as np
import pytest

from mcflow import cli, runner
from mcflow.analytic import SphereScene, sphere_state, spacetime_h_norm_closed_form
from mcflow.config import config_from_dict, load_config, parse_scene
from mcflow.errors import ParseError, UnknownQuantity, ValidationError
from mcflow.mesh import write_snapshot
from mcflow.monitors import VIOLATED
from mcflow.scenes import icosphere


def minimal_config(**overrides):
    raw = {
        "scene": {"kind": "icosphere", "r0": 1.0, "subdiv": 2},
        "stop": {"maxA2": 30.0},
    }
    raw.update(overrides)
    return raw


class TestLoadConfig:
    def test_minimal_defaults(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(minimal_config()))
        cfg = load_config(path)
        assert cfg.scheme.scheme == "semi_implicit"
        assert cfg.monitors.alphas == (4.0,)  # n + 2 for surfaces
        assert cfg.monitors.p_list == (2.0,)
        assert cfg.scheme.stop.max_a2 == 30.0

    def test_alpha_below_threshold_rejected(self):
        raw = minimal_config(monitors={"alpha": [3.0]})
        with pytest.raises(ValidationError) as err:
            config_from_dict(raw)
        assert "alpha" in str(err.value)

    def test_bad_torus_radius(self):
        raw = {"scene": {"kind": "clifford_torus", "a0": -1.0}, "stop": {"step_cap": 1}}
        with pytest.raises(ValidationError):
            config_from_dict(raw)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            config_from_dict(minimal_config(extra_knob=1))
        with pytest.raises(ValidationError):
            config_from_dict(
                {"scene": {"kind": "icosphere", "radius": 1.0}, "stop": {"step_cap": 1}}
            )

    def test_parse_error_carries_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"scene": {"kind": "icosphere",\n  broken\n}}')
        with pytest.raises(ParseError) as err:
            load_config(path)
        assert err.value.line == 2

    def test_roundtrip(self):
        cfg = config_from_dict(minimal_config(seed=7, snapshot_every=3))
        again = config_from_dict(cfg.to_dict())
        assert again == cfg

    def test_perturbation_amplitude_cap(self):
        raw = minimal_config()
        raw["scene"]["perturbation"] = {"modes": [[2, 0, 0.4]]}
        with pytest.raises(ValidationError):
            config_from_dict(raw)


class TestRun:
    def test_mesh_run_artifacts(self, tmp_path):
        cfg = config_from_dict(minimal_config(snapshot_every=5))
        out = tmp_path / "run1"
        code = runner.run(cfg, out)
        assert code == 0
        assert (out / "trace.ndjson").exists()
        assert (out / "monitors.json").exists()
        assert (out / "summary.json").exists()
        manifest = json.loads((out / "MANIFEST.json").read_text())
        assert manifest["status"] == "complete"
        summary = json.loads((out / "summary.json").read_text())
        assert summary["stop_reason"] == "max_a2"
        # icosphere r0=1: T = 1/4
        assert abs(summary["T_hat_stabilized"] - 0.25) < 0.02
        index = json.loads((out / "snapshots" / "index.json").read_text())
        assert index[0]["step"] == 0
        assert (out / "snapshots" / index[-1]["file"]).exists()

    def test_analytic_run_machine_precision(self, tmp_path):
        raw = {
            "scene": {"kind": "analytic_sphere", "n": 2, "r0": 1.0},
            "stop": {"t_end": 0.2},
            "scheme": {"cfl": 0.05},
        }
        out = tmp_path / "run2"
        code = runner.run(config_from_dict(raw), out)
        assert code == 0
        records = runner.read_trace_records(out)
        scene = SphereScene(n=2, r0=1.0)
        for rec in records:
            st = sphere_state(scene, rec.t)
            assert rec.vol == pytest.approx(st.vol, rel=1e-13)
            assert rec.h2_max == pytest.approx(st.h2, rel=1e-13)
            assert rec.st_integral_alpha[4.0] == pytest.approx(
                spacetime_h_norm_closed_form(scene, 4.0, rec.t) ** 4
                if rec.t > 0
                else 0.0,
                rel=1e-12,
                abs=1e-300,
            )
        summary = json.loads((out / "summary.json").read_text())
        assert summary["T_hat"] == pytest.approx(0.25, rel=1e-12)
        assert summary["verdicts"]["pinching_linear"] == "holds"

    def test_analytic_product_run(self, tmp_path):
        raw = {
            "scene": {"kind": "analytic_sphere_product", "p": 2, "q": 2},
            "stop": {"step_cap": 40},
        }
        code = runner.run(config_from_dict(raw), tmp_path / "run3")
        # S^2 x S^2 violates the linear pinching with the default a = 1/(n-1)
        assert code == 2
        reports = json.loads((tmp_path / "run3" / "monitors.json").read_text())
        verdicts = {r["name"]: r["verdict"] for r in reports}
        assert verdicts["pinching_linear"] == VIOLATED

    def test_numerical_failure_exit_code(self, tmp_path):
        # ring-1 stencils on a tetrahedron underdetermine the jet fit
        verts = np.array([[1.0, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
        faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])
        from mcflow.mesh import DiscreteImmersion

        snap = tmp_path / "tetra.csv"
        write_snapshot(DiscreteImmersion(verts, faces, 2), snap)
        raw = {
            "scene": {"kind": "mesh_file", "path": str(snap)},
            "stop": {"step_cap": 3},
            "scheme": {"ring": 1},
        }
        out = tmp_path / "run4"
        code = runner.run(config_from_dict(raw), out)
        assert code == 3
        manifest = json.loads((out / "MANIFEST.json").read_text())
        assert manifest["status"] == "failed"
        assert "FitUnderdetermined" in manifest["error"]

    def test_reproducible_byte_identical(self, tmp_path):
        cfg = config_from_dict(minimal_config(seed=3))
        runner.run(cfg, tmp_path / "a")
        runner.run(cfg, tmp_path / "b")
        assert (tmp_path / "a" / "trace.ndjson").read_bytes() == (
            tmp_path / "b" / "trace.ndjson"
        ).read_bytes()

    def test_interrupted_run_leaves_valid_prefix(self, tmp_path, monkeypatch):
        import mcflow.flow as flow_mod

        real_step = flow_mod.step_semi_implicit
        calls = {"n": 0}

        def exploding_step(state, dt, topo=None):
            calls["n"] += 1
            if calls["n"] > 4:
                raise KeyboardInterrupt
            return real_step(state, dt, topo=topo)

        monkeypatch.setattr(flow_mod, "step_semi_implicit", exploding_step)
        out = tmp_path / "crash"
        with pytest.raises(KeyboardInterrupt):
            runner.run(config_from_dict(minimal_config()), out)
        # the already-streamed lines parse, and the manifest is readable
        lines = (out / "trace.ndjson").read_text().splitlines()
        assert len(lines) == 5  # initial sample + 4 accepted steps
        for line in lines:
            json.loads(line)
        manifest = json.loads((out / "MANIFEST.json").read_text())
        assert manifest["status"] == "running"


@pytest.fixture(scope="module")
def trace_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("trace") / "run"
    cfg = config_from_dict(
        {
            "scene": {"kind": "analytic_sphere", "n": 2, "r0": 1.0},
            "stop": {"t_end": 0.2},
            "scheme": {"cfl": 0.05},
        }
    )
    runner.run(cfg, out)
    return out


class TestPlotData:
    def test_columns_match_closed_form(self, trace_dir):
        path = runner.emit_plotdata(trace_dir, ["t", "vol"])
        data = np.loadtxt(path)
        r2 = 1.0 - 4.0 * data[:, 0]
        assert np.allclose(data[:, 1], 4 * math.pi * r2, rtol=1e-12)

    def test_st_integral_monotone(self, trace_dir):
        path = runner.emit_plotdata(trace_dir, ["t", "st_integral_4"])
        data = np.loadtxt(path)
        assert (np.diff(data[:, 1]) >= 0).all()

    def test_empty_list_rejected(self, trace_dir):
        with pytest.raises(ValidationError):
            runner.emit_plotdata(trace_dir, [])

    def test_unknown_quantity(self, trace_dir):
        with pytest.raises(UnknownQuantity):
            runner.emit_plotdata(trace_dir, ["t", "entropy"])


class TestCheckSuite:
    def test_identities_fast_battery(self):
        reports, code = runner.check_suite("identities", fast=True)
        assert code == 0
        names = {r.name for r in reports}
        assert any("tracefree_trace" in n for n in names)
        assert any(n.startswith("s2xs1") for n in names)

    def test_inequalities_single_scene(self):
        scene = parse_scene('{"kind": "icosphere", "subdiv": 3, "r0": 1.0}')
        reports, code = runner.check_suite("inequalities", scene)
        assert code == 0
        by_name = {r.name: r for r in reports}
        chen = by_name["icosphere:chen_total_mean_curvature"]
        assert chen.values["ratio"] == pytest.approx(4.0, rel=5e-2)

    def test_threads_env_does_not_change_results(self, monkeypatch):
        scene = parse_scene('{"kind": "analytic_sphere", "n": 3, "r0": 1.0}')
        base, _ = runner.check_suite("inequalities", scene)
        monkeypatch.setenv("MCFLOW_THREADS", "4")
        threaded, _ = runner.check_suite("inequalities", scene)
        assert [r.values for r in base] == [r.values for r in threaded]


class TestCliEntry:
    def test_run_and_plot(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "scene": {"kind": "analytic_sphere", "n": 2, "r0": 1.0},
                    "stop": {"t_end": 0.1},
                }
            )
        )
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert cli.main(["plot", "--trace", str(out), "--vars", "t,vol"]) == 0

    def test_oracle_record(self, capsys):
        code = cli.main(
            ["oracle", "--scene", '{"kind": "analytic_sphere", "n": 3, "r0": 1.0}', "--t", "0.08333333333333333"]
        )
        assert code == 0
        record = json.loads(capsys.readouterr().out)
        assert record["h2"] == pytest.approx(18.0, rel=1e-10)

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 4

    def test_check_cli(self):
        assert (
            cli.main(
                ["check", "--suite", "identities", "--scene", '{"kind": "analytic_sphere", "n": 4}']
            )
            == 0
        )

    def test_rescale_cli(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(minimal_config(snapshot_every=5)))
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert cli.main(["rescale", "--trace", str(out)]) == 0
        roundness = json.loads((out / "rescaled" / "roundness.json").read_text())
        assert roundness["series"], "expected at least one rescaled snapshot"
        last = roundness["series"][-1]
        assert last["pinch_ratio"] < 0.05  # sphere stays round
        assert (out / "rescaled" / last["file"]).exists()
