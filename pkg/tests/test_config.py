import pytest

from adept.chain import GateLocation, ParamType
from adept.config import ConfigError, load_config, parse_config
from adept.sim import analytic_zeta

GOOD = """
[chain]
n_qubits = 7

[error_model]
cz_split = 0.5
p_readout = 0.02   # per-round readout flips

[error_model.sq_data:2]
p_base = 0.05
crosstalk = 5:0.25

[param.sq_data:4.freq]
sensitivity = 0.004
optimum = 1.5
initial = 2.5

[param.readout:3.extra]
type = bias
sensitivity = 0.01
optimum = 0

[tracker]
F = 0.2
N = 1000

[drift.3]
amplitude = 4
period = 50
"""


def test_parse_good():
    cfg = parse_config(GOOD)
    layout = cfg.layout()
    assert layout.n_qubits == 7
    model = cfg.model(layout)
    assert model.cz_split == 0.5
    assert model.p_base[GateLocation.parse("sq_data:2")] == 0.05
    assert model.p_base[GateLocation.parse("readout:1")] == 0.02
    assert model.crosstalk[GateLocation.parse("sq_data:2")] == {5: 0.25}
    reg = cfg.registry(layout)
    p = reg.get(GateLocation.parse("sq_data:4"), "freq")
    assert (p.optimum, p.value, p.sensitivity) == (1.5, 2.5, 0.004)
    assert reg.get(GateLocation.parse("readout:3"), "extra").type is ParamType.BIAS
    assert cfg.get("tracker", "F") == 0.2 and cfg.get("tracker", "N") == 1000
    assert cfg.drifts[3] == {"amplitude": 4.0, "period": 50.0}
    assert analytic_zeta(layout, reg, model, 8).shape == (3,)


@pytest.mark.parametrize("text,match", [
    ("[tracker]\nbogus = 1\n", "unknown key"),
    ("[trackers]\nF = 1\n", "unknown section"),
    ("[chain]\nn_qubits = nine\n", "n_qubits"),
    ("[param.sq_data:4]\nsensitivity = 1\n", "param"),
    ("[drift.x]\namplitude = 1\n", "drift"),
    ("[error_model.sq_data:4]\np_bse = 0.1\n", "unknown key"),
    ("[detect]\ninclude_terminal_round = maybe\n", "boolean"),
    ("not an ini", "section headers"),
])
def test_rejects(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_unknown_location():
    cfg = parse_config("[error_model.sq_data:40]\np_base = 0.1\n")
    with pytest.raises(ConfigError, match="does not exist"):
        cfg.model(cfg.layout())


def test_new_param_needs_type():
    cfg = parse_config("[param.sq_data:4.new]\nsensitivity = 1\n")
    with pytest.raises(ConfigError, match="needs a type"):
        cfg.registry(cfg.layout())


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
    assert load_config(None).sections == {}


def test_as_dict_roundtrip_keys():
    d = parse_config(GOOD).as_dict()
    assert "error_model.sq_data:2" in d and "param.sq_data:4.freq" in d and "drift.3" in d
