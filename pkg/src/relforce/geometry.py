"""Pointwise geometry of a pseudo-Riemannian metric on a single chart.

Everything here is evaluated at one point of the tangent bundle: the metric
matrix and its inverse, first derivatives of the components, Christoffel
symbols of the Levi-Civita connection, kinetic energy ``T = 1/2 g_ij v^i v^j``
and the momentum covector ``p_j = g_jk v^k``.

Signs are never corrected: for an indefinite metric ``T`` can be negative or
zero, and null states (``T == 0``) are legitimate inputs everywhere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from . import expr as ex

__all__ = [
    "VELOCITY_SUFFIX", "Chart", "TangentState", "MetricField", "MetricEval",
    "SingularMetricError", "eval_metric", "christoffel", "kinetic_energy",
    "momentum", "dotted_pairing", "euclidean_metric", "minkowski_metric",
    "polar_metric",
]

VELOCITY_SUFFIX = "_dot"

SINGULAR_RTOL = 1e-12

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class SingularMetricError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    """Coordinate names of the single chart; velocities get ``_dot`` appended."""

    coordinate_names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.coordinate_names)
        object.__setattr__(self, "coordinate_names", names)
        if not names:
            raise ValueError("a chart needs at least one coordinate")
        every = names + self.velocity_names
        if len(set(every)) != len(every):
            raise ValueError(f"coordinate/velocity names collide: {every}")
        for name in names:
            if not _IDENT.fullmatch(name):
                raise ValueError(f"coordinate name {name!r} is not an identifier")
            if name.endswith(VELOCITY_SUFFIX):
                raise ValueError(f"coordinate name {name!r} ends with the velocity suffix")
            if name in ex.FUNCTIONS:
                raise ValueError(f"coordinate name {name!r} shadows a function")

    @classmethod
    def numbered(cls, n: int, prefix: str = "q") -> "Chart":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))

    @property
    def dimension(self) -> int:
        return len(self.coordinate_names)

    @property
    def velocity_names(self) -> tuple[str, ...]:
        return tuple(name + VELOCITY_SUFFIX for name in self.coordinate_names)

    @property
    def state_names(self) -> tuple[str, ...]:
        return self.coordinate_names + self.velocity_names

    def index(self, name: str) -> int:
        return self.coordinate_names.index(name)


@dataclass(frozen=True, eq=False)
class TangentState:
    """A point ``(q, qdot)`` of TM; ``qdot`` plays the tautological field."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        qdot = np.array(self.qdot, dtype=float)
        if q.ndim != 1 or q.shape != qdot.shape:
            raise ValueError(f"q and qdot must be 1-D of equal length, got {q.shape}, {qdot.shape}")
        q.flags.writeable = False
        qdot.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @property
    def dimension(self) -> int:
        return self.q.shape[0]

    def env(self, chart: Chart) -> dict[str, float]:
        return dict(zip(chart.state_names, map(float, np.concatenate([self.q, self.qdot]))))

    def __eq__(self, other):
        if not isinstance(other, TangentState):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.qdot, other.qdot)

    def __repr__(self):
        return f"TangentState(q={self.q.tolist()}, qdot={self.qdot.tolist()})"


Component = Union[ex.Expr, Callable[[np.ndarray], float]]


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric metric ``g_jk(q)``; only the upper triangle ``j <= k`` is stored.

    Components are either expressions over the chart's coordinate names or
    plain callables ``f(q) -> float``. Expression metrics get exact symbolic
    derivatives; callable metrics fall back to central differences.
    """

    chart: Chart
    components: Mapping[tuple[int, int], Component]
    name: str = ""
    _compiled: Callable | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        n = self.chart.dimension
        table: dict[tuple[int, int], Component] = {}
        for (j, k), comp in self.components.items():
            if not (0 <= j < n and 0 <= k < n):
                raise ValueError(f"metric index ({j}, {k}) outside dimension {n}")
            key = (min(j, k), max(j, k))
            if key in table:
                raise ValueError(f"metric component {key} given twice")
            if isinstance(comp, (int, float)):
                comp = ex.Const(float(comp))
            table[key] = comp
        for j in range(n):
            for k in range(j, n):
                table.setdefault((j, k), ex.ZERO)
        object.__setattr__(self, "components", table)
        if self.is_symbolic:
            object.__setattr__(self, "_compiled", self._compile())

    @classmethod
    def from_strings(cls, chart: Chart, table: Mapping[tuple[int, int], str], name: str = "") -> "MetricField":
        return cls(chart, {key: ex.simplify(ex.parse_expr(src)) for key, src in table.items()}, name)

    @classmethod
    def diagonal(cls, chart: Chart, entries: Sequence[Union[str, float]], name: str = "") -> "MetricField":
        table = {}
        for i, entry in enumerate(entries):
            table[(i, i)] = ex.simplify(ex.parse_expr(entry)) if isinstance(entry, str) else ex.Const(float(entry))
        return cls(chart, table, name)

    @property
    def dimension(self) -> int:
        return self.chart.dimension

    @property
    def is_symbolic(self) -> bool:
        return self._compiled is not None or all(not callable(c) for c in self.components.values())

    @property
    def is_constant(self) -> bool:
        return self.is_symbolic and all(ex.is_constant(c) for c in self.components.values())

    def component(self, j: int, k: int) -> Component:
        return self.components[(min(j, k), max(j, k))]

    def derivative_exprs(self) -> dict[tuple[int, int, int], ex.Expr]:
        """``(i, j, k) -> d g_jk / d q^i`` for ``j <= k``, simplified."""
        names = self.chart.coordinate_names
        return {
            (i, j, k): ex.differentiate(c, names[i])
            for (j, k), c in self.components.items()
            for i in range(self.dimension)
        }

    def _compile(self):
        keys = sorted(self.components)
        dexprs = self.derivative_exprs()
        dkeys = sorted(k for k, d in dexprs.items() if d != ex.ZERO)
        fn = ex.compile_exprs(
            [self.components[k] for k in keys] + [dexprs[k] for k in dkeys],
            self.chart.coordinate_names,
        )
        return keys, dkeys, fn

    def describe(self) -> str:
        n = self.dimension
        parts = []
        for (j, k), c in sorted(self.components.items()):
            if isinstance(c, ex.Const) and c.value == 0.0:
                continue
            text = ex.to_string(c) if not callable(c) else getattr(c, "__name__", "<fn>")
            a, b = self.chart.coordinate_names[j], self.chart.coordinate_names[k]
            parts.append(f"g[{a},{b}]={text}")
        label = self.name or f"metric{n}d"
        return f"{label}({', '.join(parts)})"


@dataclass(frozen=True, eq=False)
class MetricEval:
    """Metric quantities at one point. ``dg[i, j, k] = d_i g_jk``."""

    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    det_g: float


def _fd_step(x: float) -> float:
    return 1e-6 * max(1.0, abs(x))


def _callable_matrix(m: MetricField, q: np.ndarray) -> np.ndarray:
    n = m.dimension
    g = np.empty((n, n))
    for (j, k), c in m.components.items():
        v = c(q) if callable(c) else ex.evaluate(c, dict(zip(m.chart.coordinate_names, q)))
        g[j, k] = g[k, j] = v
    return g


def _check_singular(g: np.ndarray) -> float:
    det = float(np.linalg.det(g))
    scale = float(np.prod(np.max(np.abs(g), axis=1)))
    if scale == 0.0 or abs(det) < SINGULAR_RTOL * scale:
        raise SingularMetricError(f"metric is degenerate (det={det:.3e}, scale={scale:.3e})")
    return det


def eval_metric(m: MetricField, q: Sequence[float]) -> MetricEval:
    q = np.asarray(q, dtype=float)
    n = m.dimension
    if q.shape != (n,):
        raise ValueError(f"expected {n} coordinates, got shape {q.shape}")
    dg = np.zeros((n, n, n))
    if m.is_symbolic:
        keys, dkeys, fn = m._compiled
        values = fn(*q.tolist())
        g = np.empty((n, n))
        for (j, k), v in zip(keys, values):
            g[j, k] = g[k, j] = v
        for (i, j, k), v in zip(dkeys, values[len(keys):]):
            dg[i, j, k] = dg[i, k, j] = v
    else:
        g = _callable_matrix(m, q)
        for i in range(n):
            h = _fd_step(q[i])
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            dg[i] = (_callable_matrix(m, qp) - _callable_matrix(m, qm)) / (2.0 * h)
    det = _check_singular(g)
    g_inv = np.linalg.inv(g)
    return MetricEval(g=g, g_inv=g_inv, dg=dg, det_g=det)


def christoffel(me: MetricEval) -> np.ndarray:
    """``gamma[l, i, j]`` of the Levi-Civita connection.

    gamma^l_ij = 1/2 g^lk (d_i g_jk + d_j g_ik - d_k g_ij)
    """
    dg = me.dg
    # lowered[k, i, j] = d_i g_jk + d_j g_ik - d_k g_ij
    lowered = np.transpose(dg, (2, 0, 1)) + np.transpose(dg, (2, 1, 0)) - dg
    n = dg.shape[0]
    gamma = 0.5 * (me.g_inv @ lowered.reshape(n, n * n)).reshape(n, n, n)
    # exact lower-index symmetry regardless of summation order
    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))


def kinetic_energy(s: TangentState, me: MetricEval) -> float:
    return 0.5 * float(s.qdot @ me.g @ s.qdot)


def momentum(s: TangentState, me: MetricEval) -> np.ndarray:
    """Covector ``p_j = g_jk qdot^k``, i.e. the Liouville form at ``s``."""
    return me.g @ s.qdot


def dotted_pairing(alpha: Sequence[float], s: TangentState) -> float:
    """``alpha_i qdot^i``: a horizontal 1-form read as a function on TM."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != s.qdot.shape:
        raise ValueError(f"covector has shape {alpha.shape}, state has {s.qdot.shape}")
    return float(alpha @ s.qdot)


# --------------------------------------------------------------------------
# builtin metrics

def euclidean_metric(n: int, chart: Chart | None = None) -> MetricField:
    chart = chart or Chart.numbered(n)
    return MetricField.diagonal(chart, [1.0] * n, name=f"euclidean{n}")


def minkowski_metric(n: int = 4, chart: Chart | None = None) -> MetricField:
    """Signature (+, -, ..., -) with the first coordinate timelike."""
    chart = chart or Chart.numbered(n)
    return MetricField.diagonal(chart, [1.0] + [-1.0] * (n - 1), name=f"minkowski{n}")


def polar_metric() -> MetricField:
    """Flat plane in polar coordinates: ``dr^2 + r^2 dtheta^2``."""
    return MetricField.diagonal(Chart(("r", "theta")), [1.0, "r^2"], name="polar")
