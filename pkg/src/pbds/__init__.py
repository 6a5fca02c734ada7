"""Chart-consistent fusion of Riemannian task behaviors on manifolds."""

from .manifolds import (
    ChartError,
    ChartPoint,
    ChartScheme,
    Circle,
    Euclidean,
    PositiveReals,
    Product,
    Sphere,
    Sphere2,
    TangentState,
    manifold_from_descriptor,
)
from .policy import PolicyOutput, TaskAcceleration, combine, least_squares_oracle, task_quantities
from .tasks import (
    BarrierParams,
    TaskSpec,
    check_assumptions,
    make_attractor_task,
    make_constraint_task,
    make_damping_task,
    make_obstacle_task,
    toggle_by_distance,
)

__version__ = "0.1.0"

__all__ = [
    "BarrierParams",
    "ChartError",
    "ChartPoint",
    "ChartScheme",
    "Circle",
    "Euclidean",
    "PolicyOutput",
    "PositiveReals",
    "Product",
    "Sphere",
    "Sphere2",
    "TangentState",
    "TaskAcceleration",
    "TaskSpec",
    "check_assumptions",
    "combine",
    "least_squares_oracle",
    "make_attractor_task",
    "make_constraint_task",
    "make_damping_task",
    "make_obstacle_task",
    "manifold_from_descriptor",
    "task_quantities",
    "toggle_by_distance",
]
