import numpy as np
import pytest

from aafib.errors import PomdpParseError
from aafib.parser import load_pomdp, parse_pomdp, read_source, save_pomdp, serialize_pomdp
from aafib.problems import TIGER_POMDP, generate_grid_nav, random_pomdp
from conftest import make_model

HEADER = """\
discount: 0.9
values: reward
states: 3
actions: 2
observations: 2
"""


def assert_same_model(a, b, tol=1e-9):
    assert (a.num_states, a.num_actions, a.num_observations) == (b.num_states, b.num_actions, b.num_observations)
    assert a.discount == b.discount
    np.testing.assert_allclose(a.transition, b.transition, atol=tol, rtol=0)
    np.testing.assert_allclose(a.observation, b.observation, atol=tol, rtol=0)
    np.testing.assert_allclose(a.reward, b.reward, atol=tol, rtol=0)
    if a.start_belief is None:
        assert b.start_belief is None
    else:
        np.testing.assert_allclose(a.start_belief, b.start_belief, atol=tol, rtol=0)


def test_tiger_arrays(tiger_model):
    m = tiger_model
    assert (m.num_states, m.num_actions, m.num_observations) == (2, 3, 2)
    assert m.discount == 0.95
    assert m.state_names == ('tiger-left', 'tiger-right')
    assert m.action_names == ('listen', 'open-left', 'open-right')
    np.testing.assert_allclose(m.reward[:, 0], [-1.0, -1.0])
    np.testing.assert_allclose(m.reward[:, 1], [-100.0, 10.0])
    np.testing.assert_allclose(m.reward[:, 2], [10.0, -100.0])
    np.testing.assert_array_equal(m.transition[0], np.eye(2))
    np.testing.assert_allclose(m.transition[1:], 0.5)
    np.testing.assert_allclose(m.observation[0], [[0.85, 0.15], [0.15, 0.85]])
    np.testing.assert_allclose(m.start_belief, [0.5, 0.5])


def test_uniform_matrix_keyword():
    text = HEADER + "T: 0 uniform\nT: 1 identity\nO: * uniform\n"
    model = parse_pomdp(text)
    np.testing.assert_allclose(model.transition[0], np.full((3, 3), 1 / 3))
    np.testing.assert_array_equal(model.transition[1], np.eye(3))


def test_scalar_and_row_forms_with_override():
    text = HEADER + """
T: * identity
T: 0 : 1 0.0 0.5 0.5
T: 0 : 2 : 2 0.25
T: 0 : 2 : 0 0.75
O: * uniform
O: 1 : 2 1.0 0.0
"""
    model = parse_pomdp(text)
    np.testing.assert_allclose(model.transition[0, 1], [0.0, 0.5, 0.5])
    np.testing.assert_allclose(model.transition[0, 2], [0.75, 0.0, 0.25])
    np.testing.assert_allclose(model.observation[1, 2], [1.0, 0.0])
    np.testing.assert_allclose(model.observation[0, 2], [0.5, 0.5])


def test_reward_reduces_by_expectation():
    text = """\
discount: 0.5
values: reward
states: a b
actions: go
observations: x y
T: go
0.25 0.75
0.25 0.75
O: go
1.0 0.0
0.5 0.5
R: go : * : a : * 4
R: go : * : b : x 8
R: go : * : b : y -8
"""
    model = parse_pomdp(text)
    # 0.25 * 4 + 0.75 * (0.5 * 8 + 0.5 * -8)
    np.testing.assert_allclose(model.reward[:, 0], [1.0, 1.0])


def test_reward_row_and_matrix_forms():
    text = HEADER + """
T: * identity
O: * uniform
R: 0 : 1 : 1 2.0 4.0
R: 1 : 2
1 1
2 2
3 3
"""
    model = parse_pomdp(text)
    assert model.reward[1, 0] == pytest.approx(3.0)
    assert model.reward[2, 1] == pytest.approx(3.0)
    assert model.reward[0, 0] == 0.0


def test_cost_values_negate_rewards():
    body = "T: * identity\nO: * uniform\nR: * : 1 : * : * 2.5\nR: 1 : 0 : * : * -4\n"
    as_reward = parse_pomdp(HEADER + body)
    as_cost = parse_pomdp(HEADER.replace("values: reward", "values: cost") + body)
    np.testing.assert_array_equal(as_cost.reward, -as_reward.reward)


def test_comments_and_whitespace():
    text = """
# leading comment
discount:0.9   # trailing
values:   reward
states:2
actions: 1
observations: 1
T:0
1 0
  0 1
O: 0 uniform   # observation
R:0:*:*:* 1
"""
    model = parse_pomdp(text)
    np.testing.assert_array_equal(model.transition[0], np.eye(2))
    np.testing.assert_allclose(model.reward, [[1.0], [1.0]])


def test_start_forms():
    base = HEADER + "T: * identity\nO: * uniform\n"
    assert parse_pomdp(base).start_belief is None
    np.testing.assert_allclose(parse_pomdp(base + "start: uniform\n").start_belief, [1 / 3] * 3)
    np.testing.assert_allclose(parse_pomdp(base + "start: 0.2 0.3 0.5\n").start_belief, [0.2, 0.3, 0.5])
    np.testing.assert_allclose(parse_pomdp(base + "start: 2\n").start_belief, [0, 0, 1])
    np.testing.assert_allclose(parse_pomdp(base + "start include: 0 2\n").start_belief, [0.5, 0, 0.5])
    np.testing.assert_allclose(parse_pomdp(base + "start exclude: 1\n").start_belief, [0.5, 0, 0.5])


def test_named_start_state():
    text = TIGER_POMDP.replace("start: uniform", "start: tiger-right")
    np.testing.assert_allclose(parse_pomdp(text).start_belief, [0.0, 1.0])


def test_single_state_named_start():
    text = ("discount: 0.9\nvalues: reward\nstates: only\nactions: 1\nobservations: 1\n"
            "start: only\nT: * identity\nO: * uniform\n")
    model = parse_pomdp(text)
    np.testing.assert_array_equal(model.start_belief, [1.0])
    assert model.state_names == ('only',)

    numeric = parse_pomdp(text.replace("start: only", "start: 1.0"))
    np.testing.assert_array_equal(numeric.start_belief, [1.0])


def test_nearly_normalized_rows_are_renormalized():
    text = HEADER + "T: * identity\nT: 0 : 0 0.3333333 0.3333333 0.3333333\nO: * uniform\n"
    row = parse_pomdp(text).transition[0, 0]
    assert row.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(row, 1 / 3)


def test_read_source_first_pass():
    source = read_source(TIGER_POMDP)
    assert source.preamble.discount == 0.95
    assert source.preamble.spaces['actions'].names == ('listen', 'open-left', 'open-right')
    kinds = [stmt.kind for stmt in source.body]
    assert kinds.count('T') == 3 and kinds.count('O') == 3 and kinds.count('R') == 5
    assert source.preamble.start.mode == 'uniform'


MALFORMED = [
    ("missing discount", HEADER.replace("discount: 0.9\n", "") + "T: * identity\n", "discount", None),
    ("unknown key", HEADER + "Q: 0 : 1 0.5\n", "unknown key 'Q'", 6),
    ("undeclared name", TIGER_POMDP.replace("R: listen : *", "R: shout : *"), "undeclared action 'shout'", 29),
    ("malformed number", HEADER + "T: * identity\nO: * uniform\nR: 0 : 0 : 0 : 0 1.2.3\n", "malformed number", 8),
    ("row sum", HEADER + "T: * identity\nT: 1 : 2 0.5 0.2 0.2\nO: * uniform\n", "sums to", 7),
    ("negative entry", HEADER + "T: * identity\nO: * uniform\nO: 0 : 1 1.2 -0.2\n", "negative", 8),
    ("index out of range", HEADER + "T: * identity\nO: * uniform\nR: 0 : 3 : * : * 1\n", "out of range", 8),
    ("too few values", HEADER + "T: 0\n1 0 0\n0 1 0\nO: * uniform\n", "expects 9 value(s)", 9),
    ("bad discount", HEADER.replace("0.9", "1.5") + "T: * identity\nO: * uniform\n", "discount out of (0,1)", 1),
    ("bad values keyword", HEADER.replace("values: reward", "values: utility"), "values must be", 2),
]


@pytest.mark.parametrize("label, text, message, line", MALFORMED, ids=[m[0] for m in MALFORMED])
def test_malformed_files_give_located_errors(label, text, message, line):
    with pytest.raises(PomdpParseError) as info:
        parse_pomdp(text)
    assert message in str(info.value)
    if line is not None:
        assert info.value.line == line


def test_unspecified_rows_are_rejected():
    with pytest.raises(PomdpParseError, match="never specified") as info:
        parse_pomdp(HEADER + "T: 0 identity\nO: * uniform\n")
    # reported at the last line of the file
    assert info.value.line == 7
    assert str(info.value).startswith("line 7:")


def test_tiger_round_trip(tiger_model):
    reparsed = parse_pomdp(serialize_pomdp(tiger_model))
    assert_same_model(tiger_model, reparsed)
    assert reparsed.action_names == tiger_model.action_names
    assert_same_model(reparsed, parse_pomdp(serialize_pomdp(reparsed)))


def test_uniform_rows_round_trip():
    model = parse_pomdp(HEADER + "T: * uniform\nO: * uniform\nR: * : * : * : * 0.1\n")
    assert_same_model(model, parse_pomdp(serialize_pomdp(model)))


def test_single_state_round_trip(one_state_model):
    reparsed = parse_pomdp(serialize_pomdp(one_state_model))
    assert reparsed.num_states == 1
    assert_same_model(one_state_model, reparsed)


def test_random_models_round_trip():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        S, A, O = rng.integers(1, 6, size=3)
        model = random_pomdp(rng, int(S), int(A), int(O), discount=float(rng.uniform(0.5, 0.99)))
        once = parse_pomdp(serialize_pomdp(model))
        assert_same_model(model, once)
        assert_same_model(once, parse_pomdp(serialize_pomdp(once)))


def test_grid_nav_round_trip_through_files(tmp_path):
    model = generate_grid_nav(4, 3, 0.1, 0.2, seed=5)
    path = save_pomdp(tmp_path / "grid.pomdp", model)
    reparsed = load_pomdp(path)
    assert_same_model(model, reparsed)
    assert reparsed.state_names == model.state_names


def test_load_missing_file_names_path(tmp_path):
    missing = tmp_path / "nowhere.pomdp"
    with pytest.raises(FileNotFoundError, match="nowhere.pomdp"):
        load_pomdp(missing)


def test_serialize_unnamed_model_uses_counts():
    model = make_model(np.ones((1, 1, 1)), np.ones((1, 1, 1)), [[2.0]], 0.5)
    text = serialize_pomdp(model)
    assert "states: 1" in text
    assert "start:" not in text
