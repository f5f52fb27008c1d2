import json

import numpy as np
import pytest

from driftkit.cli import (
    FIGURE_ALIASES,
    first_violations,
    main,
    read_trajectory_csv,
    write_trajectory_csv,
)
from driftkit.config import build_problem, load_bundled, parse_config
from driftkit.core import simulate


@pytest.fixture(scope="module")
def scalar_setup():
    cfg = load_bundled("scalar_drift")
    problem, _ = build_problem(cfg)
    return cfg, problem


class TestFirstViolations:
    def test_reports_earliest_time_per_group(self, scalar_setup):
        cfg, problem = scalar_setup
        traj = simulate(problem, np.zeros((cfg.horizon, 1)))
        # x walks 1, 0, -1, ... so the x group first dips at stage 2
        fv = first_violations(problem, traj, cfg.dt, cfg.tol_feas)
        assert fv == {"x": 2.0}

    def test_never_violated_is_none(self, scalar_setup):
        cfg, _ = scalar_setup
        # widen the control set so u = 1 cancels the drift outright
        data = cfg.to_dict()
        data["linear"]["control_upper"] = [1.5]
        problem, _ = build_problem(parse_config(data))
        controls = np.ones((cfg.horizon, 1))
        fv = first_violations(problem, simulate(problem, controls),
                              cfg.dt, cfg.tol_feas)
        assert fv == {"x": None}

    def test_groups_strip_bound_side(self):
        cfg = load_bundled("double_integrator")
        problem, _ = build_problem(cfg)
        traj = simulate(problem, np.zeros((cfg.horizon, 1)))
        fv = first_violations(problem, traj, cfg.dt, cfg.tol_feas)
        assert set(fv) == {"p"}


class TestCsvRoundTrip:
    def test_states_controls_eps_recovered(self, tmp_path, scalar_setup):
        cfg, problem = scalar_setup
        rng = np.random.default_rng(5)
        controls = rng.uniform(-0.5, 0.5, (cfg.horizon, 1))
        traj = simulate(problem, controls)
        eps = rng.uniform(0.0, 1.0, cfg.horizon + 1)
        path = tmp_path / "t.csv"
        write_trajectory_csv(path, problem, traj, cfg.dt, eps)
        back = read_trajectory_csv(path)
        # 17 significant digits survive the text round trip bit for bit
        np.testing.assert_array_equal(back["states"], traj.states)
        np.testing.assert_array_equal(back["controls"], traj.controls)
        np.testing.assert_array_equal(back["eps"], eps)
        np.testing.assert_array_equal(back["t"],
                                      np.arange(cfg.horizon + 1) * cfg.dt)

    def test_missing_eps_reads_as_none(self, tmp_path, scalar_setup):
        cfg, problem = scalar_setup
        traj = simulate(problem, np.zeros((cfg.horizon, 1)))
        path = tmp_path / "t.csv"
        write_trajectory_csv(path, problem, traj, cfg.dt, eps=None)
        assert read_trajectory_csv(path)["eps"] is None

    def test_margin_columns_present(self, tmp_path, scalar_setup):
        cfg, problem = scalar_setup
        traj = simulate(problem, np.zeros((cfg.horizon, 1)))
        path = tmp_path / "t.csv"
        write_trajectory_csv(path, problem, traj, cfg.dt, eps=None)
        header = read_trajectory_csv(path)["header"]
        assert any(h.startswith("margin:") for h in header)


class TestCommands:
    def test_solve_scalar_drift(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["solve", "scalar_drift", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "kappa=2" in text
        record = json.loads((out / "record.json").read_text())
        assert record["kappa"] == 2
        assert record["scenario"] == "scalar_drift"
        assert record["config_hash"] == \
            load_bundled("scalar_drift").config_hash()
        assert record["first_violation"]["x"] == 3.0
        assert (out / "trajectory.csv").exists()
        assert (out / "states.svg").exists()

    def test_solve_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "scalar_drift", "--out", str(a)]) == 0
        assert main(["solve", "scalar_drift", "--out", str(b)]) == 0
        for name in ("trajectory.csv", "record.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_oracle_scalar_drift(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["oracle", "scalar_drift", "--out", str(out)]) == 0
        assert "kappa_star=2" in capsys.readouterr().out
        payload = json.loads((out / "oracle.json").read_text())
        assert payload["kappa_star"] == 2
        assert payload["method"] == "lp-sweep"
        assert payload["exact"] is True

    def test_simulate_hold_control(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["simulate", "scalar_drift", "--out", str(out)]) == 0
        record = json.loads((out / "record.json").read_text())
        assert record["kappa"] == 1
        assert record["status"] == "simulated"
        assert record["objective"] is None

    def test_check_subcommand(self, capsys):
        # one linear and one attitude scenario cover both witness draws
        code = main(["check", "scalar_drift", "2rw_coordinated"])
        text = capsys.readouterr().out
        assert code == 0, text
        assert "FAIL" not in text
        assert "config-roundtrip: pass" in text
        assert "gradients: pass" in text
        assert "momentum: pass" in text
        assert "witness: pass" in text

    def test_unknown_scenario_is_config_error(self, tmp_path, capsys):
        assert main(["solve", "nowhere.json"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_seed_override_lands_in_record(self, tmp_path):
        out = tmp_path / "run"
        assert main(["solve", "scalar_drift", "--seed", "9",
                     "--out", str(out)]) == 0
        record = json.loads((out / "record.json").read_text())
        assert record["seed"] == 9
        assert record["config_hash"] != \
            load_bundled("scalar_drift").config_hash()

    def test_theta_override_changes_objective_weights(self, tmp_path):
        out = tmp_path / "run"
        assert main(["solve", "scalar_drift", "--theta", "2.0",
                     "--out", str(out)]) == 0
        record = json.loads((out / "record.json").read_text())
        assert record["theta"] == 2.0
        assert record["kappa"] == 2


def test_figure_aliases_cover_studies():
    assert FIGURE_ALIASES == {
        "fig1": "3rw_nominal",
        "fig2": "3rw_saturated",
        "fig3": "2rw_coordinated",
        "fig4": "2rw_restricted",
    }
