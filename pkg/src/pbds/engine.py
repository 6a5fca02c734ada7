"""Policy front end dispatching between the flat, tree and GDS evaluators."""

from __future__ import annotations

import numpy as np

from ._compiled import CollisionError, compile_policy
from .gds import gds_combine
from .manifolds import ChartPoint, Manifold
from .policy import PINV_RTOL, PolicyOutput, combine
from .tree import embedding_tree, evaluate_tree

ENGINES = ("pbds", "pbds_tree", "gds")


def constraint_distances(tasks, p: ChartPoint) -> list:
    """Current values of all positive-distance (constraint) task maps."""
    out = []
    for t in tasks:
        if t.kernel is not None and t.kernel[0] == "obstacle":
            out.append(float(t.map.value(p).coords[0]))
    return out


class Policy:
    """Acceleration policy of a task set on a robot manifold.

    Parameters
    ----------
    tasks : list of TaskSpec
    manifold : Manifold
        Robot configuration manifold; every task's domain.
    engine : {"pbds", "pbds_tree", "gds"}
    compiled : bool
        Use the compiled kernels when every task is a built-in family.
    """

    def __init__(self, tasks, manifold: Manifold, engine: str = "pbds", compiled: bool = True,
                 rtol: float = PINV_RTOL):
        if engine not in ENGINES:
            raise ValueError(f"unknown engine {engine!r}")
        self.tasks = list(tasks)
        self.manifold = manifold
        self.engine = engine
        self.rtol = rtol
        self.tree = embedding_tree(self.tasks, manifold) if engine == "pbds_tree" else None
        self.compiled = None
        if compiled and engine != "pbds_tree":
            self.compiled = compile_policy(self.tasks, manifold, engine, rtol)

    def evaluate(self, p: ChartPoint, v) -> PolicyOutput:
        """Generic (uncompiled) evaluation with diagnostics."""
        v = np.asarray(v, dtype=float)
        for d in constraint_distances(self.tasks, p):
            if d <= 0.0:
                raise CollisionError(f"constraint distance {d:.3e} <= 0")
        if self.engine == "pbds":
            return combine(self.tasks, p, v, self.rtol)
        if self.engine == "gds":
            return gds_combine(self.tasks, p, v, self.rtol)
        return evaluate_tree(self.tree, p, v, self.rtol)

    def acceleration(self, p: ChartPoint, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.compiled is not None:
            return self.compiled.acceleration(p.chart, p.coords, v)
        return self.evaluate(p, v).acceleration

    __call__ = acceleration

    def lyapunov(self, p: ChartPoint, v) -> float:
        if self.compiled is not None:
            return float(self.compiled.lyapunov(p.chart, p.coords, np.asarray(v, dtype=float)))
        from .simulator import lyapunov_value

        return lyapunov_value(self.tasks, p, v)
