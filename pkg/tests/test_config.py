import json

import numpy as np
import pytest

from driftkit.config import (
    BUNDLED_SCENARIOS,
    ConfigError,
    build_problem,
    load_bundled,
    load_config,
    parse_config,
    resolve_config,
    save_config,
)


def base_linear() -> dict:
    """Minimal valid linear scenario, mutated by the rejection tests."""
    return {
        "schema": 1,
        "name": "unit",
        "kind": "linear",
        "horizon": 5,
        "dt": 1.0,
        "linear": {
            "A": [[1.0]],
            "B": [[1.0]],
            "c": [-1.0],
            "state_lower": [0.0],
            "state_upper": [None],
            "control_lower": [-0.5],
            "control_upper": [0.5],
            "x0": [1.0],
        },
    }


class TestBundled:
    @pytest.mark.parametrize("name", BUNDLED_SCENARIOS)
    def test_parses_and_builds(self, name):
        cfg = load_bundled(name)
        assert cfg.name == name
        problem, meta = build_problem(cfg)
        assert problem.horizon == cfg.horizon
        if cfg.kind == "attitude":
            assert cfg.linear is None
            assert meta["linear_dynamics"] is False
        else:
            assert cfg.attitude is None
            assert meta["linear_dynamics"] is True

    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigError, match="unknown bundled"):
            load_bundled("no_such_scenario")

    def test_resolve_prefers_bundled_then_path(self, tmp_path):
        assert resolve_config("scalar_drift").name == "scalar_drift"
        p = tmp_path / "c.json"
        p.write_text(json.dumps(base_linear()))
        assert resolve_config(str(p)).name == "unit"
        with pytest.raises(ConfigError, match="neither"):
            resolve_config("missing_everywhere")


class TestRoundTrip:
    def test_save_load_identical(self, tmp_path):
        cfg = load_bundled("3rw_nominal")
        p = tmp_path / "copy.json"
        save_config(cfg, p)
        again = load_config(p)
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_dict_round_trip(self):
        cfg = parse_config(base_linear())
        assert parse_config(cfg.to_dict()) == cfg

    def test_hash_tracks_content(self):
        a = parse_config(base_linear())
        data = base_linear()
        data["seed"] = 7
        b = parse_config(data)
        assert a.config_hash() != b.config_hash()
        assert len(a.config_hash()) == 64

    def test_defaults_fill_in(self):
        cfg = parse_config(base_linear())
        assert cfg.theta == 1.1
        assert cfg.seed == 0
        assert cfg.n_starts == 1
        assert cfg.tol_feas == 1e-8
        assert cfg.certify == {}


class TestRejection:
    def test_unknown_top_key(self):
        data = base_linear()
        data["horzon"] = 5
        with pytest.raises(ConfigError, match="horzon"):
            parse_config(data)

    def test_unknown_solver_key(self):
        data = base_linear()
        data["solver"] = {"kkt_tolerance": 1e-8}
        with pytest.raises(ConfigError, match="kkt_tolerance"):
            parse_config(data)

    def test_unknown_certify_key(self):
        data = base_linear()
        data["certify"] = {"climbs": 3}
        with pytest.raises(ConfigError, match="climbs"):
            parse_config(data)

    def test_unknown_section_key(self):
        data = base_linear()
        data["linear"]["A_matrix"] = [[1.0]]
        with pytest.raises(ConfigError, match="A_matrix"):
            parse_config(data)

    def test_schema_version_pinned(self):
        data = base_linear()
        data["schema"] = 2
        with pytest.raises(ConfigError, match="schema"):
            parse_config(data)

    def test_missing_required(self):
        for key in ("name", "kind", "horizon"):
            data = base_linear()
            del data[key]
            with pytest.raises(ConfigError, match=key):
                parse_config(data)

    def test_bad_kind(self):
        data = base_linear()
        data["kind"] = "rocket"
        with pytest.raises(ConfigError, match="rocket"):
            parse_config(data)

    def test_kind_section_must_exist(self):
        data = base_linear()
        del data["linear"]
        with pytest.raises(ConfigError, match="requires"):
            parse_config(data)

    def test_foreign_section_rejected(self):
        data = base_linear()
        data["attitude"] = {"wheel_inertia": 0.043}
        with pytest.raises(ConfigError, match="must not carry"):
            parse_config(data)

    @pytest.mark.parametrize("key,value,frag", [
        ("horizon", 0, "horizon"),
        ("dt", 0.0, "dt"),
        ("theta", 1.0, "theta"),
        ("big_m", -5.0, "big_m"),
        ("n_starts", 0, "n_starts"),
        ("tol_feas", 0.0, "tol_feas"),
    ])
    def test_scalar_bounds(self, key, value, frag):
        data = base_linear()
        data[key] = value
        with pytest.raises(ConfigError, match=frag):
            parse_config(data)

    def test_certify_types(self):
        data = base_linear()
        data["certify"] = {"enabled": "yes"}
        with pytest.raises(ConfigError, match="enabled"):
            parse_config(data)
        data["certify"] = {"max_climbs": -1}
        with pytest.raises(ConfigError, match="max_climbs"):
            parse_config(data)

    def test_invalid_json_file(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(p)

    def test_deep_inconsistency_becomes_config_error(self):
        # the start state violates its own stage set
        data = base_linear()
        data["linear"]["x0"] = [-1.0]
        with pytest.raises(ConfigError, match="invalid scenario"):
            parse_config(data)

    def test_shape_errors_surface(self):
        data = base_linear()
        data["linear"]["A"] = [[1.0, 0.0]]
        with pytest.raises(ConfigError, match="square"):
            parse_config(data)
        data = base_linear()
        data["linear"]["B"] = [[1.0], [0.0]]
        with pytest.raises(ConfigError, match="row per state"):
            parse_config(data)


class TestBuildLinear:
    def test_dynamics_match_matrices(self):
        cfg = load_bundled("double_integrator")
        problem, meta = build_problem(cfg)
        A, B, c = meta["A"], meta["B"], meta["c"]
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.standard_normal(problem.n_x)
            u = rng.standard_normal(problem.n_u)
            np.testing.assert_allclose(problem.step(x, u), A @ x + B @ u + c)

    def test_null_bound_means_unbounded(self):
        cfg = load_bundled("double_integrator")
        problem, _ = build_problem(cfg)
        # only the first state is boxed, so each stage carries two rows
        assert problem.constraints[0].margins(np.zeros(2)).size == 2

    def test_one_norm_cap_parsed(self):
        data = base_linear()
        data["linear"]["B"] = [[1.0, -1.0]]
        data["linear"]["control_lower"] = [-0.5, -0.5]
        data["linear"]["control_upper"] = [0.5, 0.5]
        data["linear"]["control_one_norm_cap"] = {"indices": [0, 1],
                                                  "cap": 0.75}
        cfg = parse_config(data)
        problem, _ = build_problem(cfg)
        assert problem.control_set.one_norm_cap == ((0, 1), 0.75)
        assert not problem.control_set.contains(np.array([0.5, 0.5]))
        assert problem.control_set.contains(np.array([0.5, 0.25]))

    def test_state_names_flow_through(self):
        cfg = load_bundled("double_integrator")
        problem, _ = build_problem(cfg)
        assert problem.state_names == ("p", "v")


class TestBuildAttitude:
    def test_wheel_axes_normalized(self):
        cfg = load_bundled("2rw_coordinated")
        _, meta = build_problem(cfg)
        W = meta["params"].wheel_axes
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0,
                                   atol=1e-12)

    def test_config_immutable(self):
        cfg = load_bundled("scalar_drift")
        with pytest.raises(AttributeError):
            cfg.seed = 3
