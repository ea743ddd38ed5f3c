import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ordfri import lp
from ordfri.lp import EQ, GE, LE, Block, LpBuilder, LpProblem, Status, assemble, solve

BACKENDS = ["highs", "simplex"]


def vertex_oracle(c, rows, box):
    """min c.x over {rows} with box bounds, by enumerating every basic point."""
    n = len(c)
    planes = [(np.asarray(r, float), rhs) for r, _, rhs in rows]
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        planes += [(e, box[k][0]), (e, box[k][1])]
    best = None
    for combo in itertools.combinations(range(len(planes)), n):
        M = np.array([planes[i][0] for i in combo])
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, np.array([planes[i][1] for i in combo]))
        ok = all(lo - 1e-9 <= v <= hi + 1e-9 for v, (lo, hi) in zip(x, box))
        for r, s, rhs in rows:
            a = float(np.dot(r, x))
            ok &= {LE: a <= rhs + 1e-9, GE: a >= rhs - 1e-9, EQ: abs(a - rhs) <= 1e-9}[s]
        if ok:
            v = float(np.dot(c, x))
            best = v if best is None else min(best, v)
    return best


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_bound(backend):
    sol = solve(LpProblem.from_rows([1.0], [([1.0], GE, 1.0)], [(None, None)]), backend=backend)
    assert sol.status is Status.OPTIMAL
    assert sol.point[0] == pytest.approx(1.0)
    assert sol.objective_value == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_contradiction_is_infeasible(backend):
    prob = LpProblem.from_rows([1.0], [([1.0], GE, 1.0), ([1.0], LE, 0.0)], [(None, None)])
    assert solve(prob, backend=backend).status is Status.INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_triangle(backend):
    prob = LpProblem.from_rows([-1.0, -1.0], [([1.0, 1.0], LE, 1.0)])
    sol = solve(prob, backend=backend)
    assert sol.objective_value == pytest.approx(-1.0, abs=1e-9)
    assert prob.max_violation(sol.point) <= 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded(backend):
    prob = LpProblem.from_rows([-1.0, 0.0], [([1.0, -1.0], LE, 1.0)])
    assert solve(prob, backend=backend).status is Status.UNBOUNDED


@pytest.mark.parametrize("backend", BACKENDS)
def test_equality_and_free_variables(backend):
    # free variables: y is pushed down until x - y <= 5 binds
    prob = LpProblem.from_rows([1.0, 2.0], [([1.0, 1.0], EQ, 3.0), ([1.0, -1.0], LE, 5.0)],
                               [(None, None), (None, None)])
    sol = solve(prob, backend=backend)
    assert sol.ok
    assert sol.point == pytest.approx([4.0, -1.0])
    assert sol.objective_value == pytest.approx(2.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_upper_only_bound(backend):
    prob = LpProblem.from_rows([1.0], [], [(None, -2.5)])
    assert solve(prob, backend=backend).status is Status.UNBOUNDED
    prob = LpProblem.from_rows([-1.0], [], [(None, -2.5)])
    assert solve(prob, backend=backend).objective_value == pytest.approx(2.5)


def random_lp(draw):
    n = draw(st.integers(1, 4))
    k = draw(st.integers(0, 6))
    coef = st.integers(-5, 5).map(float)
    c = [draw(coef) for _ in range(n)]
    rows = []
    for _ in range(k):
        r = [draw(coef) for _ in range(n)]
        rows.append((r, draw(st.sampled_from([LE, GE, LE])), draw(st.integers(-6, 6).map(float))))
    box = [(-3.0, 4.0)] * n
    return c, rows, box


@given(st.data(), st.sampled_from(BACKENDS))
def test_matches_vertex_enumeration(data, backend):
    c, rows, box = random_lp(data.draw)
    expect = vertex_oracle(c, rows, box)
    sol = solve(LpProblem.from_rows(c, rows, box), backend=backend)
    if expect is None:
        assert sol.status is Status.INFEASIBLE
    else:
        assert sol.status is Status.OPTIMAL
        assert sol.objective_value == pytest.approx(expect, abs=1e-6)


@given(st.data())
def test_backends_agree_and_are_repeatable(data):
    c, rows, box = random_lp(data.draw)
    prob = LpProblem.from_rows(c, rows, box)
    a, b = solve(prob, backend="simplex"), solve(prob, backend="simplex")
    assert a.status is b.status and a.objective_value == b.objective_value
    h = solve(prob, backend="highs")
    assert h.status is a.status
    if a.ok:
        assert h.objective_value == pytest.approx(a.objective_value, abs=1e-7)


@given(st.data())
def test_loosening_slack_row_keeps_optimum(data):
    c, rows, box = random_lp(data.draw)
    prob = LpProblem.from_rows(c, rows, box)
    sol = solve(prob)
    if not sol.ok:
        return
    for k, (r, s, rhs) in enumerate(rows):
        act = float(np.dot(r, sol.point))
        if s == LE and act < rhs - 1e-6:
            moved = list(rows)
            moved[k] = (r, s, rhs + 1.0)
            again = solve(LpProblem.from_rows(c, moved, box))
            assert again.objective_value == pytest.approx(sol.objective_value, abs=1e-7)


def test_problem_validation():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], np.ones((1, 3)), (LE,), [1.0], [(0, 1)] * 2)
    with pytest.raises(ValueError):
        LpProblem([1.0], np.ones((1, 1)), ("<",), [1.0], [(0, 1)])
    with pytest.raises(ValueError):
        LpProblem([1.0], np.ones((1, 1)), (LE,), [np.inf], [(0, 1)])
    with pytest.raises(ValueError):
        LpProblem([1.0], np.ones((1, 1)), (LE,), [1.0], [(2, 1)])


def test_assemble_counts_columns():
    prob, index = assemble([Block("w", 2), Block("b", 1)])
    assert prob.n_vars == 3 and prob.n_rows == 0
    assert index["b"] == slice(2, 3)


def test_explicit_layout_column_count(toy_1d):
    from ordfri.ordreg import Variant, ordinal_builder

    builder, _ = ordinal_builder(toy_1d, Variant.EXPLICIT)
    # n=1, l=2, m=4: w, w_abs, b and one slack per sample
    assert builder.n_vars == 1 + 1 + 1 + 4


def test_duplicate_block_rejected():
    with pytest.raises(ValueError):
        LpBuilder([Block("w", 1), Block("w", 2)])


def test_builder_row_mismatch():
    builder = LpBuilder([Block("w", 2), Block("b", 1)])
    with pytest.raises(ValueError):
        builder.add_rows({"w": np.ones((1, 3))}, LE, 0.0)
    with pytest.raises(ValueError):
        builder.add_rows({"w": np.ones((2, 2)), "b": np.ones((1, 1))}, LE, 0.0)


def test_counter_and_dump(tmp_path, monkeypatch):
    monkeypatch.setenv("FRI_LP_DUMP", "1")
    monkeypatch.setenv("FRI_LP_DUMP_DIR", str(tmp_path))
    before = lp.solve_count()
    solve(LpProblem.from_rows([1.0, 1.0], [([1.0, 2.0], GE, 1.0)]))
    assert lp.solve_count() == before + 1
    (dump,) = tmp_path.glob("*.mps")
    text = dump.read_text()
    assert text.startswith("NAME") and "ROWS" in text and text.rstrip().endswith("ENDATA")
    assert " G  R0000000" in text


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve(LpProblem.from_rows([1.0], []), backend="nope")
