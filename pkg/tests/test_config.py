import pytest
from numpy.testing import assert_allclose

from osbpd.config import ConfigError, bundled_scenarios, load_config, parse_config
from osbpd.kernels import KernelMode
from osbpd.material import DimensionMode

from scenario_helpers import BAR_2D, bar, to_toml

BUNDLED = sorted(bundled_scenarios())


def problems(data):
    with pytest.raises(ConfigError) as info:
        parse_config(data)
    return info.value.problems


class TestParse:
    def test_valid(self):
        cfg = parse_config(BAR_2D)
        assert cfg.mode is DimensionMode.PLANE_STRESS
        assert cfg.kernel is KernelMode.LOOP_LINEARIZED
        assert cfg.delta == 3.0 and cfg.m_ratio == 3.0
        assert cfg.integrator.steps == 40
        assert cfg.tractions[0].time.kind == "sine"
        assert cfg.fixed[0].components == (0, 1)

    def test_horizon_records_m_ratio(self):
        data = bar()
        data["discretization"] = {"dx": 0.5, "horizon": 2.0}
        cfg = parse_config(data)
        assert cfg.m_ratio == 4.0

    def test_duration(self):
        data = bar()
        data["integrator"] = {"type": "explicit", "dt": 1e-4, "duration": 0.01}
        cfg = parse_config(data)
        assert cfg.integrator.steps == 100

    def test_time_step_bound_enforced(self):
        # bound = 3 / sqrt((lambda + 2 mu) / rho) = 3 / 1095.4 s
        errs = problems(bar(integrator={"type": "explicit", "dt": 1e-2, "steps": 1}))
        assert errs[0].startswith("integrator.dt:")
        assert "stability bound" in errs[0]

    def test_field_paths(self):
        data = bar(material={"young_modulus": -1.0})
        data["boundary"]["traction"][0]["area"] = 0.0
        data["output"]["probes"] = [[1.0]]
        errs = problems(data)
        assert any(e.startswith("boundary.traction[0].area:") for e in errs)
        assert any(e.startswith("output.probes[0]:") for e in errs)
        assert any(e.startswith("material") for e in errs)

    def test_missing_required(self):
        data = bar()
        del data["discretization"]
        assert any(e.startswith("discretization") for e in problems(data))

    def test_unknown_section(self):
        assert "bogus: unknown section" in problems(bar(bogus={"a": 1}))

    def test_bad_kernel(self):
        errs = problems(bar(solver={"kernel": "gpu"}))
        assert errs[0].startswith("solver.kernel:")

    def test_fracture_needs_energy(self):
        errs = problems(bar(material={"fracture_energy": 0.0}, solver={"fracture": True}))
        assert any(e.startswith("material.fracture_energy:") for e in errs)

    def test_bad_component(self):
        data = bar()
        data["boundary"]["fixed"][0]["components"] = ["z"]
        assert any(e.startswith("boundary.fixed[0].components:") for e in problems(data))

    def test_precrack_outside_box(self):
        errs = problems(bar(precrack=[{"points": [[0.0, 2.0], [20.0, 2.0]]}]))
        assert errs[0].startswith("precrack[0].points:")

    def test_negative_width(self):
        errs = problems(bar(precrack=[{"points": [[0.0, 2.0], [5.0, 2.0]], "width": -1.0}]))
        assert errs[0].startswith("precrack[0].width:")

    def test_adr(self):
        cfg = parse_config(bar(integrator={"type": "adr", "iterations": 10, "tol": 1e-8}))
        assert cfg.integrator.kind == "adr" and cfg.integrator.density_factor == 1.1

    def test_all_problems_collected(self):
        data = bar(material={"density": -1.0}, solver={"kernel": "nope"}, bogus=1)
        assert len(problems(data)) >= 3


class TestLoad:
    def test_toml_roundtrip(self, tmp_path):
        path = tmp_path / "bar.toml"
        path.write_text(to_toml(BAR_2D))
        assert load_config(path) == parse_config(BAR_2D, source=str(path))

    def test_override(self, tmp_path):
        path = tmp_path / "bar.toml"
        path.write_text(to_toml(BAR_2D))
        cfg = load_config(path, {"integrator.steps": 7, "solver.kernel": "matrix"})
        assert cfg.integrator.steps == 7 and cfg.kernel is KernelMode.MATRIX

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="file not found"):
            load_config(tmp_path / "nope.toml")

    def test_syntax_error(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("name = \n")
        with pytest.raises(ConfigError):
            load_config(path)


class TestBundled:
    def test_expected_set(self):
        expected = {f"cantilever_2d_case{k}" for k in range(1, 7)} | {
            "cantilever_3d", "branching_plate_20mpa", "branching_plate_40mpa",
            "kalthoff_winkler", "brokenshire"}
        assert expected <= set(BUNDLED)

    @pytest.mark.parametrize("name", BUNDLED)
    def test_validates(self, name):
        cfg = load_config(bundled_scenarios()[name])
        assert cfg.m_ratio == pytest.approx(3.0)

    def test_scenario_parameters(self):
        kw = load_config(bundled_scenarios()["kalthoff_winkler"])
        assert_allclose([kw.delta, kw.dx, kw.integrator.dt, kw.integrator.steps * kw.integrator.dt],
                        [1.5e-3, 0.5e-3, 20e-9, 100e-6])
        b = load_config(bundled_scenarios()["brokenshire"])
        assert b.integrator.kind == "adr" and b.integrator.iterations == 50000
        assert b.prescribed[0].value == -5e-8
        c1 = load_config(bundled_scenarios()["cantilever_2d_case1"])
        assert c1.delta == pytest.approx(2.4) and c1.integrator.dt == 2e-5
