"""Computational tree: task quantities propagated from leaves through shared
intermediate maps to the robot node."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import pinv_sym
from .manifolds import ChartPoint, Euclidean, Manifold
from .policy import PINV_RTOL, PolicyOutput
from .tasks import ComposedMap, TaskMap, TaskSpec


@dataclass
class TreeNodeData:
    """``P, A, B, F, xi`` of one node, sized by the node manifold's dimension."""

    P: np.ndarray
    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    xi: np.ndarray

    @classmethod
    def zeros(cls, m: int) -> "TreeNodeData":
        return cls(np.zeros((m, m)), np.zeros((m, m)), np.zeros((m, m)), np.zeros(m), np.zeros((m, m, m)))

    def __add__(self, other: "TreeNodeData") -> "TreeNodeData":
        return TreeNodeData(
            self.P + other.P, self.A + other.A, self.B + other.B, self.F + other.F, self.xi + other.xi
        )


@dataclass
class TreeNode:
    """Intermediate node reached from its parent through ``map``; children are
    further nodes or leaf tasks whose maps start on ``map.codomain``."""

    map: TaskMap
    children: list = field(default_factory=list)


class EmbeddingMap(TaskMap):
    """Chart embedding of a manifold into its ambient Euclidean space."""

    def __init__(self, manifold: Manifold):
        super().__init__(manifold, Euclidean(manifold.embedding_dimension))

    def value(self, p):
        return ChartPoint(0, self.domain.embed(p.chart, p.coords)[0])

    def jacobian(self, p):
        return self.domain.embed(p.chart, p.coords)[1]

    def jacobian_dot(self, p, v):
        return self.domain.embed(p.chart, p.coords)[2] @ np.asarray(v, dtype=float)

    def evaluate(self, p, v):
        y, J, H = self.domain.embed(p.chart, p.coords)
        return ChartPoint(0, y), J, H @ np.asarray(v, dtype=float)


def tree_leaf_init(task: TaskSpec, p: ChartPoint, v) -> TreeNodeData:
    v = np.asarray(v, dtype=float)
    m = v.shape[0]
    y, J, Jd = task.map.evaluate(p, v)
    ydot = J @ v
    w = np.atleast_2d(task.weight(y, ydot))
    if not np.any(w):
        return TreeNodeData.zeros(m)
    JtW = J.T @ w
    P = JtW @ J
    A = JtW @ Jd
    F = JtW @ (task.metric.inverse(y) @ (task.force(y, ydot) - task.potential.gradient(y)))
    G = task.metric.christoffel(y)
    xi = np.einsum("qe,eab,as,br->qsr", JtW, G, J, J)
    return TreeNodeData(P, A, P.copy(), F, xi)


def tree_intermediate_combine(children, f: TaskMap, p: ChartPoint, v, jacobians=None) -> TreeNodeData:
    """Pull summed child quantities back through the edge map ``f``.

    ``jacobians`` may carry a precomputed ``(Jf, Jf_dot)`` at ``(p, v)``.
    """
    if jacobians is None:
        _, J, Jd = f.evaluate(p, v)
    else:
        J, Jd = jacobians
    n = J.shape[0]
    s = sum(children, TreeNodeData.zeros(n)) if children else TreeNodeData.zeros(n)
    if s.P.shape[0] != n:
        raise ValueError("child dimension does not match the edge map codomain")
    P = J.T @ s.P @ J
    B = J.T @ s.B @ J
    A = J.T @ (s.A @ J + s.B @ Jd)
    F = J.T @ s.F
    xi = np.einsum("qk,sh,qsr,rl->khl", J, J, s.xi, J)
    return TreeNodeData(P, A, B, F, xi)


def tree_root_combine(children, p: ChartPoint, v, rtol: float = PINV_RTOL) -> PolicyOutput:
    v = np.asarray(v, dtype=float)
    m = v.shape[0]
    s = sum(children, TreeNodeData.zeros(m))
    if not np.any(s.P):
        return PolicyOutput(np.zeros(m), np.inf, 0, 0, [], True)
    xi = np.einsum("khl,h->kl", s.xi, v)
    Pinv, cond, rank = pinv_sym(0.5 * (s.P + s.P.T), rtol)
    a = Pinv @ (s.F - (s.A + xi) @ v)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite policy acceleration")
    return PolicyOutput(a, float(cond), len(children), int(rank))


def _node_data(child, p, v) -> TreeNodeData:
    if isinstance(child, TaskSpec):
        return tree_leaf_init(child, p, v)
    y, J, Jd = child.map.evaluate(p, v)
    ydot = J @ v
    data = [_node_data(c, y, ydot) for c in child.children]
    return tree_intermediate_combine(data, child.map, p, v, jacobians=(J, Jd))


def evaluate_tree(children, p: ChartPoint, v, rtol: float = PINV_RTOL) -> PolicyOutput:
    """Root combination over ``children`` (nodes or leaf tasks on the robot)."""
    v = np.asarray(v, dtype=float)
    return tree_root_combine([_node_data(c, p, v) for c in children], p, v, rtol)


def flatten(children) -> list:
    """Equivalent flat task list with composite maps."""
    out = []
    for c in children:
        if isinstance(c, TaskSpec):
            out.append(c)
            continue
        for leaf in flatten(c.children):
            out.append(replace(leaf, map=ComposedMap(leaf.map, c.map)))
    return out


def embedding_tree(tasks, manifold: Manifold) -> list:
    """Root children for ``tasks``: tasks with an ambient leaf hang below one
    shared embedding node, the rest attach to the robot node directly."""
    ambient = [t.ambient_leaf for t in tasks if t.ambient_leaf is not None]
    direct = [t for t in tasks if t.ambient_leaf is None]
    if not ambient:
        return direct
    return [TreeNode(EmbeddingMap(manifold), ambient)] + direct
