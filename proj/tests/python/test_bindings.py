import json

import pytest

import spnatomic as spn


def test_scenarios_load_and_validate():
    assert spn.scenario_names() == ["m1", "switch2", "hospital2"]
    for name in spn.scenario_names():
        net = spn.load(scenario=name)
        assert spn.validate(net) == []
        assert len(net.config_hash) == 16


def test_switch_shape():
    net = spn.load(scenario="switch2")
    assert (net.num_servers, net.num_types, net.num_classes) == (2, 4, 4)


def test_json_round_trip_keeps_the_hash():
    net = spn.load(scenario="hospital2")
    again = spn.from_json(net.to_json())
    assert again.config_hash == net.config_hash


def test_invalid_network_reports_the_constraint():
    doc = json.loads(spn.load(scenario="m1").to_json())
    doc["material"] = [[2]]
    names = [c for c, _ in spn.validate(spn.from_json(json.dumps(doc)))]
    assert "material-column" in names or any(n.startswith("material") for n in names)


def test_errors_map_to_python_exceptions():
    with pytest.raises(OSError):
        spn.load(config="/nonexistent/run.json")
    with pytest.raises(ValueError):
        spn.from_json("{not json")
    with pytest.raises(ValueError):
        spn.load()


def test_solve_agrees_across_formulations():
    sol = spn.solve(spn.load(scenario="switch2"))
    assert sol["num_states"] == 136
    assert sol["gain"] == pytest.approx(-1.394853, abs=1e-6)
    assert abs(sol["atomic_gain"] - sol["gain"]) < 1e-6
    assert max(abs(a - b) for a, b in zip(sol["passing_last_h"], sol["h"])) < 1e-6


def test_verify_certificate_passes():
    text = spn.verify(spn.load(scenario="m1"), seed=2)
    assert text.startswith("certificate spn-verify\n")
    assert "\nseed 2\n" in text
    assert text.endswith("result PASSED\n")


def test_evaluate_uses_common_seeds():
    net = spn.load(scenario="switch2")
    csv = spn.evaluate(net, ["max-weight", "max-weight", "random"], M=2, T=200, seed=4, exact=True)
    lines = csv.splitlines()
    assert lines[0].endswith("seed=4")
    assert lines[2] == lines[3]
    mw, rnd = lines[2].split(","), lines[4].split(",")
    assert float(mw[7]) > float(rnd[7])


def test_train_is_reproducible(tmp_path):
    net = spn.load(scenario="switch2")
    cfg = json.dumps({"iterations": 1, "trajectories": 2, "horizon": 64, "hidden": [8], "minibatch": 64})
    a = spn.train(net, cfg, seed=3)
    b = spn.train(net, cfg, seed=3, workers=2)
    assert a["reports_csv"] == b["reports_csv"]
    assert a["checkpoint"] == b["checkpoint"]
    assert "iteration=1" in a["manifest"]
    path = tmp_path / "ck.bin"
    path.write_bytes(a["checkpoint"])
    csv = spn.evaluate(net, ["checkpoint:" + str(path)], M=1, T=50)
    assert csv.splitlines()[2].startswith("checkpoint:")
    with pytest.raises(ValueError):
        spn.evaluate(spn.load(scenario="m1"), ["checkpoint:" + str(path)], M=1, T=50)
