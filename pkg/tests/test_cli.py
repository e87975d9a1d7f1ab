import json
import math

import pytest

from riskctmc.main import main
from riskctmc.utils import read_csv

from conftest import AVAR_HALF_VALUE


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    for name in ("RISKCTMC_LOG_LEVEL", "RISKCTMC_LOG_FILE", "RISKCTMC_SCHEME", "RISKCTMC_STEPS", "RISKCTMC_SEED"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _model(tmp_path, name="model.json", **overrides):
    doc = {
        "states": ["1", "2"],
        "horizon": 1.0,
        "generator": [[-1.0, 1.0], [1.0, -1.0]],
        "running_cost": [0.0, 0.0],
        "terminal_cost": [0.0, 1.0],
        "risk": {"kind": "expectation"},
    }
    doc.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestValidate:
    def test_valid(self, configs_dir, capsys):
        assert main(["validate", "--model", str(configs_dir / "two_piece.json")]) == 0
        assert "Generator is valid" in capsys.readouterr().out

    def test_violations(self, workdir, capsys):
        path = _model(workdir, generator=[[-1.0, 2.0], [1.0, -1.0]])
        assert main(["validate", "--model", path]) == 1
        assert "row must sum to 0" in capsys.readouterr().out

    def test_piecewise_avar_model(self, workdir, capsys):
        pieces = [
            {"until": 0.5, "matrix": [[-1.0, 1.0], [1.0, -1.0]]},
            {"until": 1.0, "matrix": [[-2.0, 2.0], [0.5, -0.5]]},
        ]
        path = _model(
            workdir,
            generator=pieces,
            running_cost={"times": [0.0, 1.0], "values": [[0.0, 1.0], [1.0, 1.0]]},
            risk={"kind": "avar", "alpha": 0.5},
        )
        assert main(["validate", "--model", path]) == 0
        assert "Generator is valid" in capsys.readouterr().out

    def test_missing_model(self, workdir):
        assert main(["validate", "--model", str(workdir / "nope.json")]) == 2

    def test_schema_error(self, workdir):
        assert main(["validate", "--model", _model(workdir, risk={"kind": "avar"})]) == 2

    def test_model_is_required(self):
        with pytest.raises(SystemExit):
            main(["solve"])


class TestSolve:
    def test_avar_values(self, configs_dir, workdir):
        assert main(["solve", "--model", str(configs_dir / "two_state_avar.json"), "--out", "v.csv"]) == 0
        rows = read_csv(workdir / "v.csv")
        assert list(rows[0]) == ["t", "state", "value"]
        assert len(rows) == 2 * 1001
        first = rows[0]
        assert (first["t"], first["state"]) == ("0", "1")
        assert float(first["value"]) == pytest.approx(AVAR_HALF_VALUE, abs=1e-6)
        assert float(rows[1]["value"]) == pytest.approx(1.0, abs=1e-9)

    def test_default_output_and_steps(self, configs_dir, workdir):
        assert main(["solve", "--model", str(configs_dir / "two_state.json"), "--steps", "10", "--scheme", "euler"]) == 0
        assert len(read_csv(workdir / "values.csv")) == 22

    def test_delta_bound_is_reported(self, configs_dir, capsys):
        code = main(["solve", "--model", str(configs_dir / "two_piece.json"), "--steps", "20", "--lipschitz", "2"])
        assert code == 0
        assert "Delta bound" in capsys.readouterr().out

    def test_unsupported_mapping(self, workdir):
        path = _model(workdir, risk={"kind": "semideviation", "kappa": 0.5, "p": 2})
        assert main(["solve", "--model", path]) == 3

    def test_bad_step_count(self, configs_dir):
        assert main(["solve", "--model", str(configs_dir / "two_state.json"), "--steps", "-5"]) == 3

    @pytest.mark.parametrize("flags", [["--steps", "0"], ["--lipschitz", "0", "--steps", "10"], ["--p-order", "0"]])
    def test_zero_is_not_treated_as_unset(self, configs_dir, workdir, flags):
        assert main(["solve", "--model", str(configs_dir / "two_state.json")] + flags) == 3
        assert not (workdir / "values.csv").exists()

    def test_invalid_generator_is_a_domain_error(self, workdir):
        path = _model(workdir, generator=[[-1.0, 2.0], [1.0, -1.0]])
        assert main(["solve", "--model", path]) == 4

    def test_output_is_deterministic(self, configs_dir, workdir):
        model = str(configs_dir / "four_state.json")
        main(["solve", "--model", model, "--steps", "50", "--out", "a.csv"])
        main(["solve", "--model", model, "--steps", "50", "--out", "b.csv"])
        assert (workdir / "a.csv").read_text() == (workdir / "b.csv").read_text()


class TestDpAndConverge:
    def test_dp_with_worst_case(self, workdir):
        path = _model(workdir, risk={"kind": "worst_case"})
        assert main(["dp", "--model", path, "--steps", "4"]) == 0
        rows = read_csv(workdir / "dp.csv")
        assert len(rows) == 10
        assert float(rows[0]["value"]) == pytest.approx(1.0)

    def test_converge(self, configs_dir, workdir):
        code = main(["converge", "--model", str(configs_dir / "two_state_avar.json"), "--ladder", "5,10,20"])
        assert code == 0
        rows = read_csv(workdir / "convergence.csv")
        assert [row["N"] for row in rows] == ["5", "10", "20"]
        assert math.isnan(float(rows[0]["empirical_order"]))
        errors = [float(row["sup_error"]) for row in rows]
        assert errors[0] > errors[1] > errors[2]

    def test_converge_needs_a_multigenerator(self, workdir):
        path = _model(workdir, risk={"kind": "worst_case"})
        assert main(["converge", "--model", path, "--ladder", "5,10"]) == 3

    def test_ladder_must_increase(self, configs_dir):
        assert main(["converge", "--model", str(configs_dir / "two_state.json"), "--ladder", "10,5"]) == 3

    def test_empty_ladder(self, configs_dir):
        assert main(["converge", "--model", str(configs_dir / "two_state.json"), "--ladder", ""]) == 3

    def test_ladder_must_be_integers(self, configs_dir):
        with pytest.raises(SystemExit):
            main(["converge", "--model", str(configs_dir / "two_state.json"), "--ladder", "a,b"])


class TestSimulate:
    def test_seeded_runs_repeat(self, configs_dir, workdir):
        args = ["simulate", "--model", str(configs_dir / "two_piece.json"), "--samples", "200", "--seed", "5"]
        assert main(args + ["--out", "a.csv"]) == 0
        assert main(args + ["--out", "b.csv"]) == 0
        assert (workdir / "a.csv").read_text() == (workdir / "b.csv").read_text()
        rows = read_csv(workdir / "a.csv")
        assert len(rows) == 200
        assert list(rows[0]) == ["path", "total_cost", "running_mean"]

    def test_state_by_label(self, configs_dir, workdir):
        args = ["simulate", "--model", str(configs_dir / "two_piece.json"), "--samples", "10", "--state", "down"]
        assert main(args) == 0
        assert len(read_csv(workdir / "paths.csv")) == 10

    def test_frozen_chain_cost(self, workdir):
        path = _model(workdir, generator=[[0.0, 0.0], [0.0, 0.0]], running_cost=[2.0, 0.0], terminal_cost=[0.5, 0.0])
        assert main(["simulate", "--model", path, "--samples", "3", "--state", "1"]) == 0
        assert [float(row["total_cost"]) for row in read_csv(workdir / "paths.csv")] == [2.5, 2.5, 2.5]

    def test_unknown_state(self, configs_dir):
        assert main(["simulate", "--model", str(configs_dir / "two_state.json"), "--state", "9"]) == 4

    def test_zero_samples(self, configs_dir):
        assert main(["simulate", "--model", str(configs_dir / "two_state.json"), "--samples", "0"]) == 3


class TestCheck:
    def test_passing_model(self, configs_dir, workdir):
        code = main([
            "check", "--model", str(configs_dir / "two_state_avar.json"),
            "--samples", "50", "--eps", "1e-2,1e-3", "--fd-out", "fd.csv",
        ])
        assert code == 0
        suites = read_csv(workdir / "checks.csv")
        assert [row["suite"] for row in suites] == [
            "coherence", "state_consistency", "primal_dual", "multigenerator", "semi_derivative",
        ]
        assert {row["status"] for row in suites} == {"passed"}
        fd = read_csv(workdir / "fd.csv")
        assert list(fd[0]) == ["state", "epsilon", "quotient", "target", "abs_error"]
        assert len(fd) == 4

    def test_zero_samples(self, configs_dir, workdir):
        assert main(["check", "--model", str(configs_dir / "two_state.json"), "--samples", "0"]) == 3
        assert not (workdir / "checks.csv").exists()

    def test_bad_eps(self, configs_dir):
        assert main(["check", "--model", str(configs_dir / "two_state.json"), "--eps", "0.1,-1"]) == 3


class TestConfigFile:
    def test_config_file_sets_defaults(self, configs_dir, workdir):
        (workdir / "riskctmc.json").write_text(json.dumps({"solver": {"steps": 4}}))
        code = main(["solve", "--model", str(configs_dir / "two_state.json"), "--config", "riskctmc.json"])
        assert code == 0
        assert len(read_csv(workdir / "values.csv")) == 10

    def test_environment_overrides(self, configs_dir, workdir, monkeypatch):
        monkeypatch.setenv("RISKCTMC_STEPS", "8")
        assert main(["dp", "--model", str(configs_dir / "two_state.json")]) == 0
        assert len(read_csv(workdir / "dp.csv")) == 18
