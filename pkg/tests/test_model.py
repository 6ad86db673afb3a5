import json

import numpy as np
import pytest

from cyclicscm import expr as ex
from cyclicscm.errors import ModelParseError, ModelSchemaError
from cyclicscm.model import (ExprMechanism, LinearRow, NoiseSpec, ScmModel, dumps_model,
                             load_model, loads_model, save_model, syntactic_parents,
                             validate_model)

from _models import random_linear, random_tanh, toy, toy_expr

TOY_FILE = {
    "variables": ["C", "I"],
    "mechanisms": [
        {"type": "linear", "coefficients": [0.0, 0.5], "offset": 1.0, "noise_coefficient": 1.0},
        {"type": "expr", "formula": "0.4*C + 0.5 + e_I"},
    ],
    "noise": {"means": [0.0, 0.0], "variances": [0.04, 0.04]},
}


def test_toy_model_is_valid():
    assert validate_model(toy()).violations == ()
    assert validate_model(toy_expr()).ok


def test_mechanism_count_mismatch():
    m = ScmModel(("a", "b"), (LinearRow((0.0, 0.0)),), NoiseSpec((0, 0), (1, 1)))
    report = validate_model(m)
    assert any("mechanism count mismatch" in v for v in report.violations)


def test_unresolved_symbol():
    node = ex.Binary("add", ex.VarRef(0, "a"), ex.VarRef(7, "Z"))
    m = ScmModel(("a", "b"), (ExprMechanism(node), LinearRow((0.0, 0.0))),
                 NoiseSpec((0, 0), (1, 1)))
    assert any("unresolved symbol 'Z'" in v for v in validate_model(m).violations)


@pytest.mark.parametrize("model, fragment", [
    (ScmModel(("a", "a"), (LinearRow((0, 0)),) * 2, NoiseSpec((0, 0), (1, 1))), "duplicate"),
    (ScmModel(("a", ""), (LinearRow((0, 0)),) * 2, NoiseSpec((0, 0), (1, 1))), "empty"),
    (ScmModel(("a", "b"), (LinearRow((0, 0)),) * 2, NoiseSpec((0, 0), (1, -1))), "variance"),
    (ScmModel(("a", "b"), (LinearRow((0,)),) * 2, NoiseSpec((0, 0), (1, 1))), "length"),
    (ScmModel(("a", "b"), (LinearRow((0, 0)),) * 2, NoiseSpec((0,), (1,))), "noise dimension"),
    (ScmModel(("a",), ("bogus",), NoiseSpec((0,), (1,))), "unknown mechanism"),
])
def test_violations_are_reported_not_raised(model, fragment):
    report = validate_model(model)
    assert not report.ok
    assert any(fragment in v for v in report.violations)


def test_sigma_proxy_is_max_variance():
    assert NoiseSpec((0, 0, 0), (0.1, 0.3, 0.2)).sigma_proxy() == 0.3


def test_toy_parents():
    for m in (toy(), toy_expr()):
        pa = syntactic_parents(m)
        assert pa.names(m, 0) == {"I", "e_C"}
        assert pa.names(m, 1) == {"C", "e_I"}


def test_constant_and_self_loop_parents():
    m = ScmModel(("x1", "x2"),
                 (LinearRow((0.0, 0.0), 3.0, 0.0), LinearRow((0.0, 0.5), 0.0, 1.0)),
                 NoiseSpec((0, 0), (1, 1)))
    pa = syntactic_parents(m)
    assert pa.endogenous[0] == frozenset() and pa.exogenous[0] == frozenset()
    assert pa.endogenous[1] == {1} and pa.exogenous[1] == {1}


def test_linear_parents_match_nonzero_pattern():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = random_linear(rng, 5)
        A, _, _ = m.linear_form()
        pa = syntactic_parents(m)
        for i in range(5):
            assert pa.endogenous[i] == set(np.flatnonzero(A[i]))
            assert pa.exogenous[i] == {i}


def test_load_toy_file(tmp_path):
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(TOY_FILE))
    m = load_model(path)
    assert m.endogenous_names == ("C", "I")
    row = m.mechanisms[0]
    assert row.coefficients == (0.0, 0.5) and row.offset == 1.0
    # the expression row evaluates to the linear row it spells out
    x = np.array([0.3, -1.2])
    e = np.array([0.1, 0.2])
    assert m.evaluate(x, e)[1] == pytest.approx(0.4 * 0.3 + 0.5 + 0.2)


def test_linear_toy_file_matrix(tmp_path):
    save_model(toy(), tmp_path / "toy.json")
    A, b, _ = load_model(tmp_path / "toy.json").linear_form()
    np.testing.assert_array_equal(A, [[0.0, 0.5], [0.4, 0.0]])
    np.testing.assert_array_equal(b, [1.0, 0.5])


def test_empty_file_is_parse_error(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    with pytest.raises(ModelParseError) as info:
        load_model(path)
    assert (info.value.line, info.value.column) == (1, 1)


def test_parse_error_reports_line_and_column():
    with pytest.raises(ModelParseError) as info:
        loads_model('{\n  "variables": ["a",]\n}')
    assert info.value.line == 2


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("noise"), "noise"),
    (lambda d: d["noise"].update(variances=[0.04]), "noise.variances"),
    (lambda d: d["mechanisms"][0].update(coefficients=[0.0, "x"]), "mechanisms[0].coefficients[1]"),
    (lambda d: d["mechanisms"][1].update(formula="0.4*Q"), "mechanisms[1].formula"),
    (lambda d: d["mechanisms"][1].update(type="cubic"), "mechanisms[1].type"),
    (lambda d: d.update(variables=["C", "C"]), "variables"),
    (lambda d: d["noise"].update(variances=[0.04, -1.0]), "noise.variances"),
])
def test_schema_errors_name_the_field(mutate, field):
    data = json.loads(json.dumps(TOY_FILE))
    mutate(data)
    with pytest.raises(ModelSchemaError) as info:
        loads_model(json.dumps(data))
    assert info.value.field == field


def _random_mixed(rng):
    n = int(rng.integers(1, 6))
    lin = random_linear(rng, n)
    tan = random_tanh(rng, n)
    mechs = tuple(lin.mechanisms[i] if rng.random() < 0.5 else tan.mechanisms[i]
                  for i in range(n))
    return ScmModel(lin.endogenous_names, mechs, lin.noise)


def test_round_trip_random_models(tmp_path):
    rng = np.random.default_rng(2024)
    path = tmp_path / "m.json"
    for _ in range(100):
        m = _random_mixed(rng)
        save_model(m, path)
        assert load_model(path) == m


def test_round_trip_preserves_awkward_floats():
    m = ScmModel(("a",), (LinearRow((0.1 + 0.2,), 1e-300, -5e-324),),
                 NoiseSpec((np.nextafter(1.0, 2.0),), (2.0 / 3.0,)))
    assert loads_model(dumps_model(m)) == m


def test_validate_is_deterministic():
    m = ScmModel(("a", "a"), (LinearRow((0,)),), NoiseSpec((0,), (-1,)))
    assert validate_model(m) == validate_model(m)
