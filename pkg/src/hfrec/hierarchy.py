"""Aggregation hierarchies over indexed time series.

A hierarchy is a DAG of sum constraints: each constraint says one parent
node equals the sum of its children. Nodes are dense integer ids 0..n-1.
Leaves are nodes that are not the parent of any constraint; every other
node is, directly or through intermediate constraints, a weighted sum of
leaves (weights = number of distinct constraint paths).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import IndexOutOfRange


class HierarchyError(ValueError):
    """The aggregation structure violates an invariant."""


class SelfLoop(HierarchyError):
    """A constraint lists its parent among its own children."""


class ChildOutOfRange(HierarchyError):
    """A constraint references a node id outside [0, n_nodes)."""


class DuplicateParentConstraint(HierarchyError):
    """Two constraints share the same parent node."""


class CycleDetected(HierarchyError):
    """Following parent -> child edges returns to a node."""


class MissingLeafValue(HierarchyError):
    """A leaf node has no value in the input map."""


@dataclass(frozen=True)
class AggregationConstraint:
    """One sum constraint: parent = sum of children."""

    parent: int
    children: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(int(c) for c in self.children))
        object.__setattr__(self, "parent", int(self.parent))


@dataclass(frozen=True)
class HierarchyDag:
    """Nodes 0..n_nodes-1 plus sum constraints forming an acyclic graph."""

    n_nodes: int
    constraints: tuple[AggregationConstraint, ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "constraints",
            tuple(
                c if isinstance(c, AggregationConstraint) else AggregationConstraint(*c)
                for c in self.constraints
            ),
        )

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def leaves(self) -> tuple[int, ...]:
        """Node ids with no constraint of their own, in increasing order."""
        parents = {c.parent for c in self.constraints}
        return tuple(i for i in range(self.n_nodes) if i not in parents)

    def constraints_touching(self, node: int) -> list[tuple[int, float]]:
        """(constraint index, sign) pairs for every constraint involving node.

        Sign is +1 where the node is the parent, -1 where it is a child
        (repeated -1 per appearance for DAGs that list a child twice
        through different constraints).
        """
        out = []
        for ci, c in enumerate(self.constraints):
            if c.parent == node:
                out.append((ci, 1.0))
            for ch in c.children:
                if ch == node:
                    out.append((ci, -1.0))
        return out

    def to_json_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "constraints": [
                {"parent": c.parent, "children": list(c.children)}
                for c in self.constraints
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "HierarchyDag":
        return cls(
            n_nodes=int(d["n_nodes"]),
            constraints=tuple(
                AggregationConstraint(int(c["parent"]), tuple(c["children"]))
                for c in d["constraints"]
            ),
        )


def save_hierarchy(dag: HierarchyDag, path) -> None:
    with open(path, "w") as f:
        json.dump(dag.to_json_dict(), f, indent=2)
        f.write("\n")


def load_hierarchy(path) -> HierarchyDag:
    with open(path) as f:
        dag = HierarchyDag.from_json_dict(json.load(f))
    validate(dag)
    return dag


def balanced_tree(branching: int = 2, levels: int = 2) -> HierarchyDag:
    """Complete tree hierarchy; (2, 2) gives the 7-node two-level example.

    Node 0 is the root; children of node i are assigned breadth-first.
    """
    if branching < 1 or levels < 0:
        raise HierarchyError("branching must be >= 1 and levels >= 0")
    n_internal = sum(branching**k for k in range(levels))
    n_nodes = sum(branching**k for k in range(levels + 1))
    constraints = []
    nxt = 1
    for parent in range(n_internal):
        children = tuple(range(nxt, nxt + branching))
        constraints.append(AggregationConstraint(parent, children))
        nxt += branching
    return HierarchyDag(n_nodes=n_nodes, constraints=tuple(constraints))


def validate(dag: HierarchyDag) -> None:
    """Raise a HierarchyError subclass if any structural invariant fails."""
    n = dag.n_nodes
    if n < 1:
        raise HierarchyError("hierarchy must have at least one node")
    seen_parents = set()
    for c in dag.constraints:
        if not (0 <= c.parent < n):
            raise ChildOutOfRange(f"parent {c.parent} outside [0, {n})")
        if len(c.children) < 1:
            raise HierarchyError(f"constraint for parent {c.parent} has no children")
        for ch in c.children:
            if not (0 <= ch < n):
                raise ChildOutOfRange(f"child {ch} outside [0, {n})")
        if c.parent in c.children:
            raise SelfLoop(f"node {c.parent} is its own child")
        if len(set(c.children)) != len(c.children):
            raise HierarchyError(f"constraint for parent {c.parent} repeats a child")
        if c.parent in seen_parents:
            raise DuplicateParentConstraint(f"two constraints for parent {c.parent}")
        seen_parents.add(c.parent)
    _topological_order(dag)  # raises CycleDetected


def _topological_order(dag: HierarchyDag) -> list[int]:
    """All node ids ordered so parents precede their children (Kahn)."""
    n = dag.n_nodes
    children_of = {c.parent: c.children for c in dag.constraints}
    indeg = [0] * n
    for c in dag.constraints:
        for ch in c.children:
            indeg[ch] += 1
    queue = [i for i in range(n) if indeg[i] == 0]
    order = []
    while queue:
        v = queue.pop()
        order.append(v)
        for ch in children_of.get(v, ()):
            indeg[ch] -= 1
            if indeg[ch] == 0:
                queue.append(ch)
    if len(order) != n:
        raise CycleDetected("constraint graph contains a directed cycle")
    return order


def aggregate_from_leaves(
    dag: HierarchyDag, leaf_values: Mapping[int, float]
) -> dict[int, float]:
    """Propagate leaf values up the hierarchy; returns a value per node.

    Non-leaf entries in the input are ignored; every leaf must be present.
    """
    validate(dag)
    leaves = dag.leaves()
    for leaf in leaves:
        if leaf not in leaf_values:
            raise MissingLeafValue(f"no value for leaf node {leaf}")
    values: dict[int, float] = {leaf: float(leaf_values[leaf]) for leaf in leaves}
    children_of = {c.parent: c.children for c in dag.constraints}
    for node in reversed(_topological_order(dag)):
        if node in children_of:
            values[node] = float(sum(values[ch] for ch in children_of[node]))
    return {i: values[i] for i in range(dag.n_nodes)}


def aggregate_leaf_panel(dag: HierarchyDag, leaf_panel: np.ndarray) -> np.ndarray:
    """Vectorized aggregation: (n_leaves, T) leaf series -> (n_nodes, T).

    Row order of the input follows dag.leaves() (increasing node id).
    """
    validate(dag)
    leaves = dag.leaves()
    leaf_panel = np.asarray(leaf_panel, dtype=float)
    if leaf_panel.ndim != 2 or leaf_panel.shape[0] != len(leaves):
        raise IndexOutOfRange(
            f"leaf panel must be ({len(leaves)}, T), got {leaf_panel.shape}"
        )
    out = np.zeros((dag.n_nodes, leaf_panel.shape[1]))
    for row, leaf in enumerate(leaves):
        out[leaf] = leaf_panel[row]
    children_of = {c.parent: c.children for c in dag.constraints}
    for node in reversed(_topological_order(dag)):
        if node in children_of:
            out[node] = sum(out[ch] for ch in children_of[node])
    return out


def reconciliation_residuals(
    dag: HierarchyDag, forecasts: np.ndarray, t_from: int, t_to: int
) -> np.ndarray:
    """Constraint residuals parent - sum(children) over [t_from, t_to).

    forecasts is (n_nodes, T); returns (n_constraints, t_to - t_from).
    """
    forecasts = np.asarray(forecasts)
    if forecasts.ndim != 2 or forecasts.shape[0] != dag.n_nodes:
        raise IndexOutOfRange(
            f"forecasts must be ({dag.n_nodes}, T), got {forecasts.shape}"
        )
    T = forecasts.shape[1]
    if not (0 <= t_from <= t_to <= T):
        raise IndexOutOfRange(f"window [{t_from}, {t_to}) outside [0, {T}]")
    window = forecasts[:, t_from:t_to]
    out = np.empty((dag.n_constraints, t_to - t_from), dtype=window.dtype)
    for ci, c in enumerate(dag.constraints):
        out[ci] = window[c.parent] - window[list(c.children)].sum(axis=0)
    return out


def constraint_matrix(dag: HierarchyDag) -> np.ndarray:
    """(n_constraints, n_nodes) matrix R with residuals = R @ forecasts."""
    R = np.zeros((dag.n_constraints, dag.n_nodes))
    for ci, c in enumerate(dag.constraints):
        R[ci, c.parent] += 1.0
        for ch in c.children:
            R[ci, ch] -= 1.0
    return R


def summation_matrix(dag: HierarchyDag) -> np.ndarray:
    """(n_nodes, n_leaves) matrix expressing each node as a sum of leaves.

    Column order follows dag.leaves(). Leaf rows are unit vectors; for a
    DAG with shared children an entry counts the distinct constraint paths.
    """
    validate(dag)
    leaves = dag.leaves()
    col_of = {leaf: j for j, leaf in enumerate(leaves)}
    S = np.zeros((dag.n_nodes, len(leaves)))
    for leaf, j in col_of.items():
        S[leaf, j] = 1.0
    children_of = {c.parent: c.children for c in dag.constraints}
    for node in reversed(_topological_order(dag)):
        if node in children_of:
            S[node] = sum(S[ch] for ch in children_of[node])
    return S
