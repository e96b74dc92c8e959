"""Tests for the hierarchy module."""

import numpy as np
import pytest

from hfrec.errors import IndexOutOfRange
from hfrec.hierarchy import (
    AggregationConstraint,
    ChildOutOfRange,
    CycleDetected,
    DuplicateParentConstraint,
    HierarchyDag,
    HierarchyError,
    MissingLeafValue,
    SelfLoop,
    aggregate_from_leaves,
    aggregate_leaf_panel,
    balanced_tree,
    constraint_matrix,
    load_hierarchy,
    reconciliation_residuals,
    save_hierarchy,
    summation_matrix,
    validate,
)


def three_node():
    return HierarchyDag(n_nodes=3, constraints=(AggregationConstraint(0, (1, 2)),))


def test_seven_node_tree_is_valid():
    dag = balanced_tree()
    assert dag.n_nodes == 7
    assert dag.n_constraints == 3
    validate(dag)
    assert dag.leaves() == (3, 4, 5, 6)


def test_two_cycle_rejected():
    dag = HierarchyDag(2, (AggregationConstraint(0, (1,)), AggregationConstraint(1, (0,))))
    with pytest.raises(CycleDetected):
        validate(dag)


def test_self_loop_rejected():
    with pytest.raises(SelfLoop):
        validate(HierarchyDag(1, (AggregationConstraint(0, (0,)),)))


def test_child_out_of_range_rejected():
    with pytest.raises(ChildOutOfRange):
        validate(HierarchyDag(2, (AggregationConstraint(0, (5,)),)))
    with pytest.raises(ChildOutOfRange):
        validate(HierarchyDag(2, (AggregationConstraint(7, (1,)),)))


def test_duplicate_parent_rejected():
    dag = HierarchyDag(3, (AggregationConstraint(0, (1,)), AggregationConstraint(0, (2,))))
    with pytest.raises(DuplicateParentConstraint):
        validate(dag)


def test_repeated_child_rejected():
    with pytest.raises(HierarchyError):
        validate(HierarchyDag(3, (AggregationConstraint(0, (1, 1)),)))


def test_random_cyclic_graphs_rejected():
    """Any random constraint graph containing a directed cycle must fail."""
    rng = np.random.default_rng(42)
    for _ in range(200):
        n = int(rng.integers(3, 9))
        children = {}
        # random downward edges, then a cycle through a random node subset
        for parent in range(n - 1):
            if rng.random() < 0.5:
                kids = rng.choice(np.arange(parent + 1, n), size=rng.integers(1, 3), replace=False)
                children.setdefault(parent, set()).update(int(k) for k in kids)
        cycle = rng.permutation(n)[: int(rng.integers(2, n + 1))]
        for a, b in zip(cycle, np.roll(cycle, -1)):
            if int(a) != int(b):
                children.setdefault(int(a), set()).add(int(b))
        constraints = tuple(
            AggregationConstraint(p, tuple(sorted(kids))) for p, kids in children.items()
        )
        with pytest.raises(CycleDetected):
            validate(HierarchyDag(n, constraints))


def test_aggregate_figure_values():
    dag = balanced_tree()
    values = aggregate_from_leaves(dag, {3: 1.0, 4: 2.0, 5: 3.0, 6: 4.0})
    assert values[1] == 3.0
    assert values[2] == 7.0
    assert values[0] == 10.0


def test_aggregate_zero_leaves():
    dag = balanced_tree()
    values = aggregate_from_leaves(dag, {leaf: 0.0 for leaf in dag.leaves()})
    assert all(v == 0.0 for v in values.values())


def test_aggregate_missing_leaf():
    with pytest.raises(MissingLeafValue):
        aggregate_from_leaves(balanced_tree(), {3: 1.0})


def test_aggregate_matches_summation_matrix():
    """Matrix-product oracle: S @ leaf vector reproduces the recursion."""
    dag = balanced_tree()
    S = summation_matrix(dag)
    rng = np.random.default_rng(0)
    for _ in range(25):
        leaf_vec = rng.normal(size=len(dag.leaves()))
        got = aggregate_from_leaves(dag, dict(zip(dag.leaves(), leaf_vec)))
        want = S @ leaf_vec
        for i in range(dag.n_nodes):
            assert got[i] == pytest.approx(want[i], rel=1e-12)


def test_aggregate_panel_matches_scalar():
    dag = balanced_tree(branching=3, levels=2)
    rng = np.random.default_rng(1)
    panel = rng.normal(size=(len(dag.leaves()), 5))
    agg = aggregate_leaf_panel(dag, panel)
    for t in range(5):
        scalar = aggregate_from_leaves(dag, dict(zip(dag.leaves(), panel[:, t])))
        assert np.allclose(agg[:, t], [scalar[i] for i in range(dag.n_nodes)], rtol=1e-12)


def test_residuals_single_step():
    dag = three_node()
    forecasts = np.array([[5.0], [2.0], [2.0]])
    r = reconciliation_residuals(dag, forecasts, 0, 1)
    assert r.shape == (1, 1)
    assert r[0, 0] == 1.0


def test_residuals_zero_for_coherent():
    dag = balanced_tree()
    rng = np.random.default_rng(2)
    leaf_panel = rng.normal(size=(4, 8))
    forecasts = aggregate_leaf_panel(dag, leaf_panel)
    r = reconciliation_residuals(dag, forecasts, 0, 8)
    assert np.abs(r).max() <= 1e-12 * max(1.0, np.abs(forecasts).max())


def test_residuals_match_naive_loop():
    dag = balanced_tree()
    rng = np.random.default_rng(3)
    forecasts = rng.normal(size=(7, 10))
    r = reconciliation_residuals(dag, forecasts, 2, 9)
    for ci, c in enumerate(dag.constraints):
        for k, t in enumerate(range(2, 9)):
            expected = forecasts[c.parent, t] - sum(forecasts[j, t] for j in c.children)
            assert r[ci, k] == pytest.approx(expected, rel=1e-12)


def test_residuals_match_summation_matrix_on_flat_hierarchy():
    # for a depth-1 hierarchy the constraint residual is (all-node forecast
    # minus S @ leaf forecasts) at the parent row, with a sign flip
    dag = HierarchyDag(4, (AggregationConstraint(0, (1, 2, 3)),))
    S = summation_matrix(dag)
    rng = np.random.default_rng(4)
    forecasts = rng.normal(size=(4, 6))
    r = reconciliation_residuals(dag, forecasts, 0, 6)
    oracle = forecasts[0] - (S @ forecasts[1:, :])[0]
    assert np.allclose(r[0], oracle, rtol=1e-12)


def test_residuals_window_bounds():
    dag = three_node()
    with pytest.raises(IndexOutOfRange):
        reconciliation_residuals(dag, np.zeros((3, 5)), 2, 9)


def test_summation_matrix_three_node():
    S = summation_matrix(three_node())
    assert np.array_equal(S, np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))


def test_summation_matrix_figure_tree():
    S = summation_matrix(balanced_tree())
    assert S.shape == (7, 4)
    assert np.array_equal(S[0], np.ones(4))
    assert np.array_equal(S[3:], np.eye(4))


def test_summation_matrix_single_node():
    S = summation_matrix(HierarchyDag(1, ()))
    assert np.array_equal(S, np.eye(1))


def test_summation_matrix_dag_path_counts():
    # node 0 sums nodes 1 and 2, both of which contain leaf 3
    dag = HierarchyDag(
        4,
        (
            AggregationConstraint(0, (1, 2)),
            AggregationConstraint(1, (3,)),
            AggregationConstraint(2, (3,)),
        ),
    )
    S = summation_matrix(dag)
    assert S[0, 0] == 2.0  # two constraint paths from the root to leaf 3


def test_constraint_matrix_signs():
    R = constraint_matrix(balanced_tree())
    assert R.shape == (3, 7)
    assert R[0, 0] == 1.0 and R[0, 1] == -1.0 and R[0, 2] == -1.0


def test_json_round_trip(tmp_path):
    dag = balanced_tree(branching=3, levels=1)
    path = tmp_path / "h.json"
    save_hierarchy(dag, path)
    assert load_hierarchy(path) == dag
