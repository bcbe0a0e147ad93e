"""Equations of motion from a metric and a work form, and fixed-step integration.

Resolving the Newton-Lagrange law in coordinates gives the acceleration::

    qddot^l = -(g^lk alpha_k + Gamma^l_ij qdot^i qdot^j)

The zero work form gives the geodesic field; the difference between the two
(``-g^lk alpha_k``) is the covariant value of the equation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .forces import ForceForm, eval_force, zero_force
from .geometry import (
    MetricEval, MetricField, TangentState, christoffel, eval_metric, kinetic_energy,
)

__all__ = [
    "SodeField", "Trajectory", "IntegrationError", "METHODS",
    "assemble_sode", "geodesic_field", "covariant_value", "integrate",
    "energy_along",
]

log = logging.getLogger(__name__)

METHODS = ("rk4", "verlet", "euler")


class IntegrationError(RuntimeError):
    """An evaluation failed mid-integration; carries the step and last good state."""

    def __init__(self, step: int, last_state: TangentState, cause: Exception):
        super().__init__(f"integration failed at step {step}: {cause}")
        self.step = step
        self.last_state = last_state
        self.cause = cause


@dataclass(frozen=True, eq=False)
class SodeField:
    """Second-order equation ``D`` on TM assembled from ``(metric, force)``.

    For metrics whose components are all constants the metric evaluation is
    point independent; it is computed once and the Christoffel term is
    dropped (it is identically zero).
    """

    metric: MetricField
    force: ForceForm
    _frozen_metric: MetricEval | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.metric.dimension != self.force.dimension:
            raise ValueError(
                f"metric dimension {self.metric.dimension} != force dimension {self.force.dimension}"
            )
        if self.metric.is_constant:
            n = self.metric.dimension
            object.__setattr__(self, "_frozen_metric", eval_metric(self.metric, np.zeros(n)))

    @property
    def dimension(self) -> int:
        return self.metric.dimension

    def metric_at(self, q: np.ndarray) -> MetricEval:
        if self._frozen_metric is not None:
            return self._frozen_metric
        return eval_metric(self.metric, q)

    def acceleration_arrays(self, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
        me = self.metric_at(q)
        acc = np.zeros_like(qdot, dtype=float)
        if self.force.kind != "zero":
            acc -= me.g_inv @ self.force(q, qdot)
        if self._frozen_metric is None:
            gamma = christoffel(me)
            n = qdot.shape[0]
            acc -= gamma.reshape(n, n * n) @ np.outer(qdot, qdot).ravel()
        return acc

    def acceleration(self, s: TangentState) -> np.ndarray:
        return self.acceleration_arrays(s.q, s.qdot)

    def describe(self) -> str:
        return f"M=R^{self.dimension}, T2={self.metric.describe()}, {self.force.describe()}"


def assemble_sode(m: MetricField, f: ForceForm) -> SodeField:
    return SodeField(m, f)


def geodesic_field(m: MetricField) -> SodeField:
    return SodeField(m, zero_force(m.chart))


def covariant_value(m: MetricField, f: ForceForm, s: TangentState) -> np.ndarray:
    """``-g^lk alpha_k``: the force's share of the acceleration (``D - D_G``)."""
    me = eval_metric(m, s.q)
    return -(me.g_inv @ eval_force(f, s))


# --------------------------------------------------------------------------
# integration

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled solution; row ``i`` is the state at ``t = i * h``."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    h: float
    method: str

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> TangentState:
        return TangentState(self.q[i], self.qdot[i])

    def states(self) -> Iterator[TangentState]:
        for i in range(len(self)):
            yield self.state(i)

    @property
    def final(self) -> TangentState:
        return self.state(len(self) - 1)


Stepper = Callable[[Callable, np.ndarray, np.ndarray, float], tuple[np.ndarray, np.ndarray]]


def _rk4(acc, q, v, h):
    a1 = acc(q, v)
    q2, v2 = q + 0.5 * h * v, v + 0.5 * h * a1
    a2 = acc(q2, v2)
    q3, v3 = q + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = acc(q3, v3)
    q4, v4 = q + h * v3, v + h * a3
    a4 = acc(q4, v4)
    q_new = q + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return q_new, v_new


def _verlet(acc, q, v, h):
    # velocity-dependent accelerations: the end-of-step acceleration uses a
    # predicted velocity, so this is second order but not symplectic
    a0 = acc(q, v)
    q_new = q + h * v + 0.5 * h * h * a0
    a1 = acc(q_new, v + h * a0)
    return q_new, v + 0.5 * h * (a0 + a1)


def _euler(acc, q, v, h):
    return q + h * v, v + h * acc(q, v)


_STEPPERS: dict[str, Stepper] = {"rk4": _rk4, "verlet": _verlet, "euler": _euler}


def _project(d: SodeField, q: np.ndarray, v: np.ndarray, t0: float) -> np.ndarray:
    if t0 == 0.0:
        return v
    t = 0.5 * float(v @ d.metric_at(q).g @ v)
    if t == 0.0 or (t > 0.0) != (t0 > 0.0):
        return v
    return v * np.sqrt(t0 / t)


def integrate(
    d: SodeField,
    s0: TangentState,
    h: float,
    n: int,
    method: str = "rk4",
    project: bool = False,
) -> Trajectory:
    """Advance ``(q, qdot)`` with a fixed step ``h`` for ``n`` steps.

    ``project`` rescales ``qdot`` after every step so the kinetic energy keeps
    its initial value. This is a constraint-restoration device, off by
    default, and it makes energy checks meaningless; null and sign-changing
    states are left untouched.
    """
    if not h > 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    if n < 1:
        raise ValueError(f"need at least one step, got {n}")
    try:
        step = _STEPPERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}") from None
    if s0.dimension != d.dimension:
        raise ValueError(f"state dimension {s0.dimension} != field dimension {d.dimension}")

    dim = d.dimension
    qs = np.empty((n + 1, dim))
    vs = np.empty((n + 1, dim))
    qs[0], vs[0] = s0.q, s0.qdot
    q, v = qs[0].copy(), vs[0].copy()
    t0 = kinetic_energy(s0, d.metric_at(q)) if project else 0.0
    acc = d.acceleration_arrays
    for i in range(1, n + 1):
        try:
            q, v = step(acc, q, v, h)
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
                raise FloatingPointError("state became non-finite")
            if project:
                v = _project(d, q, v, t0)
        except (ValueError, ArithmeticError) as exc:
            raise IntegrationError(i, TangentState(qs[i - 1], vs[i - 1]), exc) from exc
        qs[i], vs[i] = q, v
    t = np.arange(n + 1) * h
    log.debug("integrated %d %s steps, h=%g", n, method, h)
    return Trajectory(t=t, q=qs, qdot=vs, h=h, method=method)


def energy_along(traj: Trajectory, m: MetricField) -> np.ndarray:
    """Kinetic energy at every sample of ``traj``."""
    if m.is_constant:
        g = eval_metric(m, traj.q[0]).g
        return 0.5 * np.einsum("ni,ij,nj->n", traj.qdot, g, traj.qdot)
    return np.array([kinetic_energy(s, eval_metric(m, s.q)) for s in traj.states()])
