"""Tests for run configuration loading, overrides and error payloads."""

import json
import logging
from pathlib import Path

import pytest

from src.config import Settings
from src.core.exceptions import AuditFailure, ConfigValidationError, InfluenceRejectedError
from src.core.logging import QUIET_LOGGERS, RunContextFilter, bind_run, clear_run, current_run, run_context, setup_logging
from src.schemas.config import apply_overrides, load_run_config, parse_run_config
from src.simulation.integrator import Scheme


def base_config(**changes):
    data = {
        "name": "pair",
        "model": {"n_agents": 2, "dim": 1, "c": 1.0},
        "influence": {"kind": "rational", "params": [1.0, 1.0]},
        "scenario": {"kind": "constant", "positions": [[0.0], [1.0]]},
        "integrator": {"scheme": "heun", "dt": 0.01, "T": 1.0},
    }
    for section, update in changes.items():
        data[section] = {**data.get(section, {}), **update} if isinstance(update, dict) else update
    return data


CONFIGS = Path(__file__).resolve().parents[2] / "configs"

TOML = """
name = "toml-pair"

[model]
n_agents = 2
c = 2.0

[influence]
kind = "gaussian"
params = [1.0, 2.0]

[scenario]
kind = "random"
seed = 3

[integrator]
T = 5.0
"""


class TestRunConfig:
    def test_defaults(self):
        config = parse_run_config(base_config())
        assert config.integrator.scheme is Scheme.HEUN
        assert config.outputs.trajectory == "trajectory.csv"
        assert config.outputs.delays is None
        assert config.analysis.certificate_range == "radius"
        assert config.analysis.strict_audits

    def test_nonpositive_c(self):
        with pytest.raises(ConfigValidationError) as exc:
            parse_run_config(base_config(model={"c": 0.0}))
        assert exc.value.details["field"] == "model.c"

    def test_single_agent(self):
        with pytest.raises(ConfigValidationError) as exc:
            parse_run_config(base_config(model={"n_agents": 1}))
        assert exc.value.details["field"] == "model.n_agents"

    def test_unknown_kernel(self):
        with pytest.raises(ConfigValidationError) as exc:
            parse_run_config(base_config(influence={"kind": "cosine"}))
        assert exc.value.details["field"].startswith("influence.kind")

    def test_positions_shape(self):
        with pytest.raises(ConfigValidationError):
            parse_run_config(base_config(scenario={"positions": [[0.0], [1.0], [2.0]]}))

    def test_kind_needs_fields(self):
        with pytest.raises(ConfigValidationError) as exc:
            parse_run_config(base_config(scenario={"kind": "random", "positions": None}))
        assert exc.value.details["field"] == "scenario"

    def test_missing_datum_file(self, tmp_path):
        with pytest.raises(ConfigValidationError):
            parse_run_config(base_config(scenario={
                "kind": "file", "positions": None, "datum_path": str(tmp_path / "nope.csv")
            }))

    def test_symmetric_pair_shape(self):
        with pytest.raises(ConfigValidationError):
            parse_run_config(base_config(
                model={"n_agents": 3},
                scenario={"kind": "symmetric_pair", "positions": None, "x0": 1.0}
            ))

    def test_hash_is_stable(self):
        a = parse_run_config(base_config())
        b = parse_run_config(json.loads(json.dumps(base_config())))
        c = parse_run_config(base_config(integrator={"dt": 0.02}))
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()
        assert len(a.config_hash()) == 64

    def test_output_path(self):
        config = parse_run_config(base_config(outputs={"out_dir": "somewhere"}))
        assert config.output_path("x.csv") == Path("somewhere") / "x.csv"
        assert config.outputs.trajectory == "trajectory.csv"


class TestLoading:
    def test_toml(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(TOML)
        config = load_run_config(path)
        assert config.name == "toml-pair"
        assert config.model.dim == 1
        assert config.integrator.dt is None
        assert config.scenario.seed == 3

    def test_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(base_config()))
        assert load_run_config(path).name == "pair"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigValidationError) as exc:
            load_run_config(tmp_path / "absent.toml")
        assert exc.value.details["field"] == "config"

    def test_unparsable(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[model\nc = ")
        with pytest.raises(ConfigValidationError):
            load_run_config(path)

    def test_shipped_configs_load(self):
        for name in ("five_agents_1d", "random_2d", "symmetric_pair"):
            config = load_run_config(CONFIGS / f"{name}.toml")
            assert config.model.n_agents >= 2


class TestOverrides:
    def test_overrides_apply(self):
        config = parse_run_config(base_config())
        updated = apply_overrides(config, dt=0.005, T=2.0, scheme="euler", out_dir="elsewhere")
        assert updated.integrator.dt == 0.005
        assert updated.integrator.T == 2.0
        assert updated.integrator.scheme is Scheme.EULER
        assert updated.outputs.out_dir == "elsewhere"
        assert config.integrator.dt == 0.01

    def test_no_overrides_keep_hash(self):
        config = parse_run_config(base_config())
        assert apply_overrides(config).config_hash() == config.config_hash()

    def test_seed_override(self):
        config = parse_run_config(base_config(scenario={"kind": "random", "positions": None, "seed": 1}))
        assert apply_overrides(config, seed=9).scenario.seed == 9

    def test_invalid_override(self):
        config = parse_run_config(base_config())
        with pytest.raises(ConfigValidationError):
            apply_overrides(config, dt=-1.0)


class TestErrorsAndSettings:
    def test_error_payloads(self):
        err = AuditFailure("speed exceeded", check="speed_limit", details={"t": 0.5})
        payload = err.to_dict()
        assert payload["error"] == "AUDIT_FAILURE"
        assert payload["details"] == {"t": 0.5, "check": "speed_limit"}
        rejected = InfluenceRejectedError("too fast", r=1.0, details={"check": "speed_limit"})
        assert rejected.details == {"check": "speed_limit", "r": 1.0}

    def test_settings_from_environment(self, monkeypatch):
        monkeypatch.setenv("DELAY_METHOD", "bisect")
        monkeypatch.setenv("AUDIT_SLACK", "1e-6")
        fresh = Settings()
        assert fresh.delay_method == "bisect"
        assert fresh.audit_slack == 1e-6

    def test_run_context_labels_records(self):
        bind_run("pair", "0123456789abcdef")
        try:
            assert current_run() == "pair@01234567"
            record = logging.LogRecord("x", logging.INFO, __file__, 1, "msg", None, None)
            context = RunContextFilter()
            context.run = current_run()
            assert context.filter(record)
            assert record.run == "pair@01234567"
        finally:
            clear_run()
        assert current_run() == "-"

    def test_run_context_restores_previous_label(self):
        with run_context("outer", "aaaaaaaaaaaa"):
            with pytest.raises(RuntimeError):
                with run_context("inner"):
                    assert current_run() == "inner"
                    raise RuntimeError("boom")
            assert current_run() == "outer@aaaaaaaa"
        assert current_run() == "-"

    def test_setup_logging_quiets_asyncio(self):
        setup_logging("DEBUG")
        assert QUIET_LOGGERS == ("asyncio",)
        assert logging.getLogger("asyncio").level == logging.WARNING
        assert logging.getLogger().level == logging.DEBUG
