"""Manifolds as chart atlases with a canonical Euclidean embedding."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from ._kernels import inversion, stereo_chart, stereo_embedding

ON_MANIFOLD_TOL = 1e-9


class ChartError(ValueError):
    """Raised for points outside a chart domain or off the manifold."""


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """A manifold point as ``(chart id, chart coordinates)``."""

    chart: int
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float).reshape(-1))


@dataclass(frozen=True, eq=False)
class TangentState:
    """A point together with a velocity expressed in the same chart."""

    point: ChartPoint
    velocity: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.velocity, dtype=float).reshape(-1)
        if v.shape != self.point.coords.shape:
            raise ValueError("velocity length must equal the manifold dimension")
        object.__setattr__(self, "velocity", v)


@dataclass(frozen=True)
class ChartScheme:
    """Rule for choosing the chart a trajectory is represented in.

    ``kind`` is ``"fixed"`` (always ``chart``) or ``"hemisphere"`` (sign of the
    last embedded coordinate, with a hysteresis band around the equator).
    """

    kind: str = "hemisphere"
    chart: int = 0
    hysteresis: float = 0.01

    @classmethod
    def fixed(cls, chart: int) -> "ChartScheme":
        return cls("fixed", int(chart))

    @classmethod
    def hemisphere(cls, hysteresis: float = 0.01) -> "ChartScheme":
        return cls("hemisphere", 0, hysteresis)

    @classmethod
    def parse(cls, text: str) -> "ChartScheme":
        text = text.strip().lower()
        if text in ("south", "fixed_south", "fixed(0)"):
            return cls.fixed(0)
        if text in ("north", "fixed_north", "fixed(1)"):
            return cls.fixed(1)
        if text == "hemisphere":
            return cls.hemisphere()
        if text.startswith("fixed(") and text.endswith(")"):
            return cls.fixed(int(text[6:-1]))
        raise ValueError(f"unknown chart scheme {text!r}")

    def __str__(self):
        return "hemisphere" if self.kind == "hemisphere" else f"fixed({self.chart})"


class Manifold:
    """Base class; subclasses provide charts, transitions and an embedding."""

    kind: str = ""
    dimension: int
    embedding_dimension: int
    chart_count: int = 1

    # -- chart-level hooks used by the numerical code ------------------------
    def embed(self, chart: int, x: np.ndarray):
        """Embedding of chart coordinates with Jacobian and Hessian ``(y, J, H)``."""
        raise NotImplementedError

    def _from_embedding(self, e: np.ndarray, chart: int) -> np.ndarray:
        raise NotImplementedError

    def _in_chart(self, e: np.ndarray, chart: int) -> bool:
        return True

    def _transition(self, x: np.ndarray, source: int, target: int):
        """Coordinates, Jacobian and Hessian of the transition map."""
        n = x.shape[0]
        return x.copy(), np.eye(n), np.zeros((n, n, n))

    # -- public operations ---------------------------------------------------
    def validate(self, p: ChartPoint) -> None:
        if not 0 <= p.chart < self.chart_count:
            raise ChartError(f"chart id {p.chart} out of range for {self}")
        if p.coords.shape != (self.dimension,):
            raise ChartError(
                f"expected {self.dimension} coordinates, got {p.coords.shape[0]}"
            )
        if not np.all(np.isfinite(p.coords)):
            raise ChartError("chart coordinates must be finite")

    def point(self, coords, chart: int = 0) -> ChartPoint:
        p = ChartPoint(chart, coords)
        self.validate(p)
        return p

    def chart_to_embedding(self, p: ChartPoint) -> np.ndarray:
        self.validate(p)
        return self.embed(p.chart, p.coords)[0]

    def project(self, e) -> np.ndarray:
        """Snap an ambient vector within tolerance back onto the manifold."""
        e = np.asarray(e, dtype=float).reshape(-1)
        if e.shape != (self.embedding_dimension,):
            raise ChartError(
                f"expected {self.embedding_dimension} embedded coordinates"
            )
        return e.copy()

    def select_chart(self, e, scheme: ChartScheme | str = "hemisphere") -> int:
        return 0

    def embedding_to_chart(self, e, preferred: int | str = "auto") -> ChartPoint:
        e = self.project(e)
        if preferred == "auto":
            chart = self.select_chart(e, ChartScheme.hemisphere())
        else:
            chart = int(preferred)
            if not 0 <= chart < self.chart_count:
                raise ChartError(f"chart id {chart} out of range")
            if not self._in_chart(e, chart):
                raise ChartError(f"point {e} is excluded from chart {chart}")
        return ChartPoint(chart, self._from_embedding(e, chart))

    def transition_map(self, p: ChartPoint, target: int):
        """``(coords, J, H)`` of the transition from ``p.chart`` to ``target``."""
        self.validate(p)
        if target == p.chart:
            n = self.dimension
            return p.coords.copy(), np.eye(n), np.zeros((n, n, n))
        return self._transition(p.coords, p.chart, int(target))

    def chart_transition(self, p: ChartPoint, target: int) -> ChartPoint:
        return ChartPoint(int(target), self.transition_map(p, target)[0])

    def transition_jacobian(self, p: ChartPoint, target: int) -> np.ndarray:
        return self.transition_map(p, target)[1]

    def transition_tangent(self, s: TangentState, target: int) -> TangentState:
        z, J, _ = self.transition_map(s.point, target)
        return TangentState(ChartPoint(int(target), z), J @ s.velocity)

    def to_descriptor(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_descriptor()})"


class Euclidean(Manifold):
    """R^n with the identity chart."""

    kind = "euclidean"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = self.embedding_dimension = int(dim)

    def embed(self, chart, x):
        n = self.dimension
        return np.array(x, dtype=float), np.eye(n), np.zeros((n, n, n))

    def _from_embedding(self, e, chart):
        return e.copy()

    def to_descriptor(self):
        return {"kind": "euclidean", "dim": self.dimension}


class PositiveReals(Euclidean):
    """The open half-line (0, inf) with the identity chart."""

    kind = "positive_reals"

    def __init__(self):
        super().__init__(1)

    def validate(self, p):
        super().validate(p)
        if p.coords[0] <= 0.0:
            raise ChartError("positive reals require a strictly positive coordinate")

    def project(self, e):
        e = super().project(e)
        if e[0] <= 0.0:
            raise ChartError("positive reals require a strictly positive coordinate")
        return e

    def to_descriptor(self):
        return {"kind": "positive_reals"}


class Sphere(Manifold):
    """Unit n-sphere with two stereographic charts.

    Chart 0 projects from the south pole (it excludes the south pole and its
    origin is the north pole); chart 1 projects from the north pole.
    """

    chart_count = 2

    def __init__(self, n: int = 2):
        if n not in (1, 2):
            raise ValueError("only S^1 and S^2 are provided")
        self.dimension = n
        self.embedding_dimension = n + 1
        self.kind = "circle" if n == 1 else "sphere2"

    @staticmethod
    def _sign(chart):
        return 1.0 if chart == 0 else -1.0

    def embed(self, chart, x):
        return stereo_embedding(np.asarray(x, dtype=float), self._sign(chart))

    def project(self, e):
        e = super().project(e)
        r = np.linalg.norm(e)
        if abs(r - 1.0) > ON_MANIFOLD_TOL:
            raise ChartError(f"point is off the unit sphere (|e| = {r!r})")
        return e / r

    def _in_chart(self, e, chart):
        return 1.0 + self._sign(chart) * e[-1] > 0.0

    def _from_embedding(self, e, chart):
        return stereo_chart(e, self._sign(chart))

    def _transition(self, x, source, target):
        if not np.any(x):
            raise ChartError("chart origin maps to the excluded pole of the other chart")
        return inversion(np.asarray(x, dtype=float))

    def select_chart(self, e, scheme: ChartScheme | str = "hemisphere"):
        if isinstance(scheme, str):
            scheme = ChartScheme.parse(scheme)
        if scheme.kind == "fixed":
            return scheme.chart
        return 0 if e[-1] >= 0.0 else 1

    def to_descriptor(self):
        return {"kind": self.kind}


def Circle() -> Sphere:
    return Sphere(1)


def Sphere2() -> Sphere:
    return Sphere(2)


@dataclass
class Product(Manifold):
    """Cartesian product; chart ids are the factor chart ids in mixed radix
    (first factor least significant)."""

    factors: list = field(default_factory=list)

    def __post_init__(self):
        if not self.factors:
            raise ValueError("product needs at least one factor")
        self.kind = "product"
        self.dimension = sum(f.dimension for f in self.factors)
        self.embedding_dimension = sum(f.embedding_dimension for f in self.factors)
        self.chart_count = prod(f.chart_count for f in self.factors)
        self._dims = np.cumsum([0] + [f.dimension for f in self.factors])
        self._edims = np.cumsum([0] + [f.embedding_dimension for f in self.factors])

    __repr__ = Manifold.__repr__

    def encode_chart(self, charts) -> int:
        cid, base = 0, 1
        for c, f in zip(charts, self.factors):
            cid += int(c) * base
            base *= f.chart_count
        return cid

    def decode_chart(self, chart: int) -> list:
        out = []
        for f in self.factors:
            out.append(chart % f.chart_count)
            chart //= f.chart_count
        return out

    def split_coords(self, x) -> list:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dimension:
            raise ValueError("length mismatch with product dimension")
        return [x[self._dims[i]:self._dims[i + 1]] for i in range(len(self.factors))]

    def split_embedded(self, e) -> list:
        e = np.asarray(e, dtype=float).reshape(-1)
        if e.shape[0] != self.embedding_dimension:
            raise ValueError("length mismatch with product embedding dimension")
        return [e[self._edims[i]:self._edims[i + 1]] for i in range(len(self.factors))]

    def compose(self, points) -> ChartPoint:
        """Build a product point from one ``ChartPoint`` per factor."""
        if len(points) != len(self.factors):
            raise ValueError("one point per factor required")
        for f, p in zip(self.factors, points):
            f.validate(p)
        return ChartPoint(
            self.encode_chart([p.chart for p in points]),
            np.concatenate([p.coords for p in points]),
        )

    def split(self, p: ChartPoint) -> list:
        return [ChartPoint(c, x) for c, x in zip(self.decode_chart(p.chart), self.split_coords(p.coords))]

    def compose_tangent(self, states) -> TangentState:
        point = self.compose([s.point for s in states])
        return TangentState(point, np.concatenate([s.velocity for s in states]))

    def split_tangent(self, s: TangentState) -> list:
        return [
            TangentState(p, v)
            for p, v in zip(self.split(s.point), self.split_coords(s.velocity))
        ]

    def validate(self, p):
        super().validate(p)
        for f, q in zip(self.factors, self.split(p)):
            f.validate(q)

    def embed(self, chart, x):
        d, n = self.embedding_dimension, self.dimension
        y = np.zeros(d)
        J = np.zeros((d, n))
        H = np.zeros((d, n, n))
        for i, (f, c, xi) in enumerate(zip(self.factors, self.decode_chart(chart), self.split_coords(x))):
            e0, e1 = self._edims[i], self._edims[i + 1]
            c0, c1 = self._dims[i], self._dims[i + 1]
            yi, Ji, Hi = f.embed(c, xi)
            y[e0:e1] = yi
            J[e0:e1, c0:c1] = Ji
            H[e0:e1, c0:c1, c0:c1] = Hi
        return y, J, H

    def project(self, e):
        return np.concatenate([f.project(ei) for f, ei in zip(self.factors, self.split_embedded(e))])

    def _in_chart(self, e, chart):
        return all(
            f._in_chart(ei, c)
            for f, ei, c in zip(self.factors, self.split_embedded(e), self.decode_chart(chart))
        )

    def _from_embedding(self, e, chart):
        return np.concatenate([
            f._from_embedding(ei, c)
            for f, ei, c in zip(self.factors, self.split_embedded(e), self.decode_chart(chart))
        ])

    def select_chart(self, e, scheme="hemisphere"):
        return self.encode_chart([
            f.select_chart(ei, scheme) for f, ei in zip(self.factors, self.split_embedded(e))
        ])

    def _transition(self, x, source, target):
        n = self.dimension
        z = np.zeros(n)
        J = np.zeros((n, n))
        H = np.zeros((n, n, n))
        pairs = zip(self.decode_chart(source), self.decode_chart(target))
        for i, (f, (s, t), xi) in enumerate(zip(self.factors, pairs, self.split_coords(x))):
            c0, c1 = self._dims[i], self._dims[i + 1]
            zi, Ji, Hi = f.transition_map(ChartPoint(s, xi), t)
            z[c0:c1] = zi
            J[c0:c1, c0:c1] = Ji
            H[c0:c1, c0:c1, c0:c1] = Hi
        return z, J, H

    def to_descriptor(self):
        return {"kind": "product", "factors": [f.to_descriptor() for f in self.factors]}


def manifold_from_descriptor(desc: dict) -> Manifold:
    """Build a manifold from its JSON descriptor."""
    kind = str(desc.get("kind", "")).lower()
    if kind == "euclidean":
        return Euclidean(int(desc.get("dim", 1)))
    if kind in ("positive_reals", "positivereals", "r+"):
        return PositiveReals()
    if kind in ("circle", "sphere1", "s1"):
        return Sphere(1)
    if kind in ("sphere2", "sphere", "s2"):
        return Sphere(2)
    if kind == "product":
        return Product([manifold_from_descriptor(f) for f in desc["factors"]])
    raise ValueError(f"unknown manifold kind {desc.get('kind')!r}")
