"""The builtin force-by-metric matrix used to witness "contact iff conservative".

Five work forms on a 3-dimensional chart ``(x, y, z)``:

* ``zero``        geodesic motion
* ``two_form``    ``i_v Phi`` for ``Phi = (1 + sin(x)/2) dy^dz + 0.3 dx^dz``
* ``nonlinear``   ``(1 + x_dot^2) i_v(dy^dz)``; contact but not velocity-linear
* ``potential``   ``dU`` for ``U = x + y^2/2``
* ``drag``        ``alpha_j = qdot^j``

and three metrics: Euclidean, Lorentzian ``diag(1, -1, -1)`` and a
non-diagonal position-dependent Riemannian metric. The first three forms are
contact and must conserve kinetic energy under every metric; the last two
are not and must not.
"""

from __future__ import annotations

from .diagnostics import RunParams
from .forces import (
    ForceForm, Potential, TwoFormField, UniformStateSampler, covector_force,
    from_potential, from_two_form, zero_force,
)
from .expr import parse_expr, simplify
from .geometry import Chart, MetricField, TangentState

__all__ = ["CHART", "CONTACT_FORCES", "matrix_forces", "matrix_metrics", "MATRIX_STATE",
           "MATRIX_PARAMS", "MATRIX_SAMPLER"]

CHART = Chart(("x", "y", "z"))
CONTACT_FORCES = ("zero", "two_form", "nonlinear")

MATRIX_STATE = TangentState([0.1, 0.2, 0.3], [1.0, 0.4, -0.3])
MATRIX_PARAMS = RunParams(h=1e-3, steps=10_000, method="rk4")
MATRIX_SAMPLER = UniformStateSampler.cube(3, 1.0)


def matrix_forces() -> dict[str, ForceForm]:
    phi = TwoFormField.from_strings(CHART, {(1, 2): "1 + 0.5*sin(x)", (0, 2): "0.3"})
    return {
        "zero": zero_force(CHART),
        "two_form": from_two_form(phi),
        "nonlinear": covector_force(CHART, ["0", "-(1 + x_dot^2)*z_dot", "(1 + x_dot^2)*y_dot"]),
        "potential": from_potential(Potential(CHART, simplify(parse_expr("x + y^2/2")))),
        "drag": covector_force(CHART, ["x_dot", "y_dot", "z_dot"]),
    }


def matrix_metrics() -> dict[str, MetricField]:
    return {
        "euclidean": MetricField.diagonal(CHART, [1.0, 1.0, 1.0], name="euclidean3"),
        "lorentzian": MetricField.diagonal(CHART, [1.0, -1.0, -1.0], name="minkowski3"),
        "warped": MetricField.from_strings(
            CHART,
            {(0, 0): "2 + sin(y)", (0, 1): "0.5", (1, 1): "1 + x^2", (2, 2): "1 + 0.5*cos(x)"},
            name="warped",
        ),
    }
