import io

import numpy as np
import pytest

from adept.chain import GateLocation, build_chain, default_registry, gate_locations
from adept.patterns import (Grouping, Pattern, analytic_probe, crosstalk_patterns, discover_patterns,
                            probe_offset, propagation_map, standard_patterns, validate_independence,
                            write_patterns_csv)
from adept.sim import uniform_model

L = GateLocation.parse


def test_propagation_rules(chain9):
    prop = propagation_map(chain9)
    assert prop[L("sq_data:4")] == {3, 5}
    assert prop[L("sq_data:0")] == {1}
    assert prop[L("cz:3:4")] == {3, 5}
    assert prop[L("sq_measure:3:1")] == {3}
    assert prop[L("readout:7")] == {7}


def test_standard_patterns_n9(chain9):
    p1, p2, p3 = standard_patterns(chain9)
    assert len(p1) == 4
    assert [sorted(g.metric_qubits) for g in p2] == [[1], [3, 5], [7]]
    assert [sorted(g.metric_qubits) for g in p3] == [[1, 3], [5, 7]]
    assert p2.groupings[1].tunable_locations == {L("sq_data:4"), L("cz:3:4"), L("cz:5:4")}


@pytest.mark.parametrize("n", [3, 5, 7, 9, 11, 25, 101])
def test_standard_patterns_cover_and_are_independent(n):
    layout = build_chain(n)
    pats = standard_patterns(layout)
    prop = propagation_map(layout)
    assert len(pats) == 3
    covered = [loc for p in pats for g in p for loc in g.tunable_locations]
    assert sorted(covered) == sorted(gate_locations(layout))
    for p in pats:
        assert validate_independence(p, prop)


def test_validate_reports_leak(chain9):
    prop = propagation_map(chain9)
    bad = Pattern((Grouping(frozenset({L("sq_data:4")}), frozenset({3})),))
    rep = validate_independence(bad, prop)
    assert not rep and rep.qubit == 5 and rep.location == L("sq_data:4")


def test_validate_reports_shared_metric(chain9):
    prop = propagation_map(chain9)
    g1 = Grouping(frozenset({L("sq_data:2")}), frozenset({1, 3}))
    g2 = Grouping(frozenset({L("sq_data:4")}), frozenset({3, 5}))
    rep = validate_independence(Pattern((g1, g2)), prop)
    assert not rep and rep.qubit == 3


@pytest.mark.parametrize("radius,names", [(0, ["1", "2", "3"]), (1, ["1", "2", "3"]),
                                          (2, ["1a", "1b", "2a", "2b", "3a", "3b"])])
def test_crosstalk_split_n9(chain9, radius, names):
    pats = crosstalk_patterns(chain9, radius)
    assert [p.name for p in pats] == names
    prop = propagation_map(chain9)
    for p in pats:
        assert validate_independence(p, prop)
        gs = list(p)
        for i in range(len(gs)):
            for j in range(i + 1, len(gs)):
                assert min(abs(a - b) for a in gs[i].qubits for b in gs[j].qubits) > radius


def test_probe_offset():
    from adept.chain import ParamType
    assert probe_offset(ParamType.BIAS, 0.01, 0.04) == pytest.approx(2.0)
    assert probe_offset(ParamType.ANGLE, 1.0, 1.0) == pytest.approx(np.pi)
    assert probe_offset(ParamType.BIAS, 0.0, 0.04) is None


@pytest.mark.parametrize("n", [5, 9, 25])
def test_discovery_reproduces_circuit_rules(n):
    layout = build_chain(n)
    reg = default_registry(layout)
    found = discover_patterns(layout, reg, analytic_probe(layout, reg, uniform_model(layout)), 1e-3)
    assert found.propagation == propagation_map(layout)
    assert not found.unobservable
    prop = propagation_map(layout)
    for p in found.patterns:
        assert validate_independence(p, prop)


def test_discovery_sees_crosstalk(chain9):
    reg = default_registry(chain9)
    model = uniform_model(chain9, crosstalk={L("sq_data:4"): {7: 1.0}})
    found = discover_patterns(chain9, reg, analytic_probe(chain9, reg, model), 1e-3)
    assert found.propagation[L("sq_data:4")] == {3, 5, 7}


def test_discovery_measure_crosstalk_splits_patterns(chain9):
    reg = default_registry(chain9)
    model = uniform_model(chain9, crosstalk={L("sq_measure:3:0"): {5: 0.02 / 0.05}})
    found = discover_patterns(chain9, reg, analytic_probe(chain9, reg, model, delta_p=0.05), 0.01)
    assert found.propagation[L("sq_measure:3:0")] == {3, 5}
    g3 = next(g for p in found.patterns for g in p if L("sq_measure:3:0") in g.tunable_locations)
    assert g3.metric_qubits == {3, 5}
    prop = found.propagation
    for p in found.patterns:
        assert validate_independence(p, prop)


def test_discovery_rejects_global_parameter(chain9):
    reg = default_registry(chain9)
    model = uniform_model(chain9, crosstalk={L("sq_data:4"): {1: 1.0, 7: 1.0}})
    with pytest.raises(ValueError, match="every measure qubit"):
        discover_patterns(chain9, reg, analytic_probe(chain9, reg, model), 1e-3)


def test_discovery_with_nothing_observable(chain9):
    reg = default_registry(chain9)
    found = discover_patterns(chain9, reg, lambda loc, name: np.zeros(4), 1e-3)
    assert len(found.patterns) == 1 and len(found.patterns[0]) == 0
    assert len(found.unobservable) == 25


def test_csv(chain9):
    buf = io.StringIO()
    write_patterns_csv(standard_patterns(chain9), buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "pattern_id,group_id,location_id,metric_qubits"
    assert len(rows) == 1 + 25
    assert "2,1,cz:3:4,3 5" in rows


def test_grouping_requires_content():
    with pytest.raises(ValueError):
        Grouping(frozenset(), frozenset({1}))
    with pytest.raises(ValueError):
        Grouping(frozenset({L("sq_data:0")}), frozenset())
