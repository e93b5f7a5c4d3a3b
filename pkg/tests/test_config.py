from pathlib import Path

import pytest

from adaptconf.config import (
    ScenarioConfig,
    control_hash,
    load_control_config,
    load_scenario,
    scenario_from_dict,
)
from adaptconf.controller import ControllerConfig
from adaptconf.errors import ConfigError
from adaptconf.netsim import BurstLoss, ImpairmentProfile, UniformLoss
from adaptconf.session.detectors import FreezeDetectorConfig, SynthPipelineModel
from adaptconf.telemetry import EstimatorConfig

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
MINIMAL = {"duration": 60, "uplink": {"segments": [{"start": 0, "cap": 1000}]}}


def test_minimal_config_gets_defaults():
    sc = scenario_from_dict(MINIMAL)
    assert sc.warm_up == 10.0 and sc.topology == "p2p" and sc.seed == 0
    assert sc.estimator == EstimatorConfig()
    assert sc.controller == ControllerConfig()
    assert sc.synth == SynthPipelineModel() and sc.freeze == FreezeDetectorConfig()
    assert sc.downlink_profile is sc.uplink and sc.sfu_profile is sc.uplink
    d = sc.as_dict()
    assert d["controller"]["tau_low"] == 300.0 and d["freeze"]["t_freeze"] == 0.5
    assert d["uplink"]["segments"][0]["loss"] == {"kind": "uniform", "p": 0.0}


def test_evaluation_window():
    sc = scenario_from_dict({**MINIMAL, "duration": 3600, "warm_up": 10})
    assert sc.evaluation_window == 3590


def test_thresholds_out_of_order_rejected():
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict({**MINIMAL, "controller": {"tau_low": 900.0}})
    assert "tau" in str(exc.value)


@pytest.mark.parametrize("patch,field", [
    ({"warm_up": 100}, "duration"),
    ({"topology": "mesh"}, "topology"),
    ({"seed": -1}, "seed"),
    ({"bogus": 1}, "bogus"),
    ({"controller": {"speed": 3}}, "controller.speed"),
    ({"schema_version": 99}, "schema_version"),
])
def test_invalid_fields_are_named(patch, field):
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict({**MINIMAL, **patch})
    assert exc.value.field == field


def test_missing_required():
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict({"duration": 10})
    assert exc.value.field == "uplink"
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict({"duration": 10, "uplink": {"segments": [{"start": 0}]}})
    assert exc.value.field == "uplink.segments[0].cap"


def test_loss_tables():
    sc = scenario_from_dict({**MINIMAL, "uplink": {"segments": [
        {"start": 0, "cap": 100, "loss": {"kind": "burst", "p_good_to_bad": 0.01, "p_bad_to_good": 0.5}},
        {"start": 5, "cap": 100, "loss": {"p": 0.05}},
    ]}})
    assert sc.uplink.segments[0].loss == BurstLoss(0.01, 0.5)
    assert sc.uplink.segments[1].loss == UniformLoss(0.05)
    with pytest.raises(ConfigError):
        scenario_from_dict({**MINIMAL, "uplink": {"segments": [{"start": 0, "cap": 1, "loss": {"kind": "x"}}]}})


def test_estimator_lambda_key_and_delta_t_inheritance():
    sc = scenario_from_dict({**MINIMAL, "estimator": {"lambda": 2.0, "delta_t": 0.5}})
    assert sc.estimator.lam == 2.0
    assert sc.controller.delta_t == 0.5 and sc.controller.n_stable == 10


def test_profile_seed_defaults_to_scenario_seed():
    sc = scenario_from_dict({**MINIMAL, "seed": 42})
    assert sc.uplink.seed == 42
    moved = sc.with_seed(45)
    assert moved.seed == 45 and moved.uplink.seed == 45


def test_shipped_scenarios_load():
    longrun = load_scenario(SCENARIOS / "longrun.toml")
    assert longrun.duration == 7200 and longrun.uplink.drop_times() == [3600.0]
    assert longrun.peer_controller_config.audio_rate == 12.0
    sfu = load_scenario(SCENARIOS / "sfu_burst.toml")
    assert sfu.topology == "sfu" and isinstance(sfu.sfu_profile.segments[0].loss, BurstLoss)
    load_scenario(SCENARIOS / "step.toml")


def test_control_hash_tracks_control_settings_only():
    sc = scenario_from_dict(MINIMAL)
    assert sc.control_hash() == control_hash(EstimatorConfig(), ControllerConfig())
    assert len(sc.control_hash()) == 12
    other = scenario_from_dict({**MINIMAL, "duration": 90, "seed": 3})
    assert other.control_hash() == sc.control_hash()
    tuned = scenario_from_dict({**MINIMAL, "controller": {"tau_high": 900.0}})
    assert tuned.control_hash() != sc.control_hash()


def test_load_control_config_from_scenario(tmp_path):
    est, ctrl = load_control_config(SCENARIOS / "longrun.toml")
    assert ctrl.video_rate_normal == 1470.0 and ctrl.delta_t == est.delta_t
    p = tmp_path / "ctl.toml"
    p.write_text("[controller]\ntau_low = 200.0\n")
    est, ctrl = load_control_config(p)
    assert ctrl.tau_low == 200.0 and est == EstimatorConfig()


def test_invalid_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("duration = \n")
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_delta_t_mismatch_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig(duration=20.0, uplink=ImpairmentProfile.constant(100.0),
                       controller=ControllerConfig(delta_t=0.5))
