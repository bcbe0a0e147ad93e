"""Work forms on the tangent bundle and the contact (relativistic) test.

A work form is a horizontal 1-form ``alpha = alpha_j(q, qdot) dq^j`` that
enters the equations of motion through the Newton-Lagrange law. It is
*contact* when ``alpha_j qdot^j`` vanishes identically; this is the property
that makes a force relativistic, and it is decided here without reference to
any metric.

Index convention for 2-forms: ``Phi`` is stored by its coefficients
``Phi[i, j]`` for ``i < j`` (``Phi[j, i] = -Phi[i, j]``) and contracts as::

    alpha_j = qdot^i Phi[i, j]          # no 1/2 factor

so ``dq^1 ^ dq^2`` with ``qdot = (a, b)`` gives ``alpha = (-b, a)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from . import expr as ex
from .geometry import Chart, MetricEval, TangentState, dotted_pairing

__all__ = [
    "ForceForm", "TwoFormField", "Potential", "ContactResult",
    "UniformStateSampler", "zero_force", "covector_force", "from_two_form",
    "from_potential", "eval_force", "contact_residual", "is_contact",
    "symbolic_contact_proof", "endomorphism", "extract_two_form",
    "two_form_from_matrix",
]

FORCE_KINDS = ("general", "potential", "two_form", "zero")


@dataclass(frozen=True, eq=False)
class TwoFormField:
    """Antisymmetric ``Phi[i, j](q)``; keys are ``(i, j)`` with ``i < j``."""

    chart: Chart
    components: Mapping[tuple[int, int], ex.Expr]
    _fn: Callable | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        n = self.chart.dimension
        table = {}
        for (i, j), c in self.components.items():
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"2-form index ({i}, {j}) outside dimension {n}")
            if i == j:
                raise ValueError("2-form diagonal is identically zero; got an entry for it")
            if isinstance(c, (int, float)):
                c = ex.Const(float(c))
            if i > j:
                i, j, c = j, i, ex.simplify(ex.Neg(c))
            if (i, j) in table:
                raise ValueError(f"2-form component ({i}, {j}) given twice")
            extra = ex.free_variables(c) - set(self.chart.coordinate_names)
            if extra:
                raise ValueError(f"2-form components depend only on coordinates; got {sorted(extra)}")
            table[(i, j)] = c
        object.__setattr__(self, "components", table)
        keys = sorted(table)
        object.__setattr__(
            self, "_fn",
            (keys, ex.compile_exprs([table[k] for k in keys], self.chart.coordinate_names)),
        )

    @classmethod
    def from_strings(cls, chart: Chart, table: Mapping[tuple[int, int], str]) -> "TwoFormField":
        return cls(chart, {k: ex.simplify(ex.parse_expr(v)) for k, v in table.items()})

    def coefficient(self, i: int, j: int) -> ex.Expr:
        if i == j:
            return ex.ZERO
        if i < j:
            return self.components.get((i, j), ex.ZERO)
        return ex.simplify(ex.Neg(self.components.get((j, i), ex.ZERO)))

    def matrix(self, q: Sequence[float]) -> np.ndarray:
        n = self.chart.dimension
        keys, fn = self._fn
        phi = np.zeros((n, n))
        for (i, j), v in zip(keys, fn(*np.asarray(q, dtype=float).tolist())):
            phi[i, j] = v
            phi[j, i] = -v
        return phi

    def describe(self) -> str:
        names = self.chart.coordinate_names
        terms = [
            f"({ex.to_string(c)}) d{names[i]}^d{names[j]}"
            for (i, j), c in sorted(self.components.items())
            if c != ex.ZERO
        ]
        return " + ".join(terms) or "0"


@dataclass(frozen=True, eq=False)
class Potential:
    chart: Chart
    u: ex.Expr

    def __post_init__(self):
        extra = ex.free_variables(self.u) - set(self.chart.coordinate_names)
        if extra:
            raise ValueError(f"potential depends only on coordinates; got {sorted(extra)}")

    def value(self, q: Sequence[float]) -> float:
        return ex.evaluate(self.u, dict(zip(self.chart.coordinate_names, map(float, q))))


@dataclass(frozen=True, eq=False)
class ForceForm:
    """Components ``alpha_j(q, qdot)`` plus a kind tag.

    Components are expressions over the chart's state names, or a single
    callable ``f(q, qdot) -> array`` for native forces (``kind='general'``).
    ``source`` holds the :class:`Potential` or :class:`TwoFormField` the form
    was built from.
    """

    chart: Chart
    components: tuple[ex.Expr, ...] | None
    kind: str = "general"
    source: Union[Potential, TwoFormField, None] = None
    native: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    _fn: Callable | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in FORCE_KINDS:
            raise ValueError(f"unknown force kind {self.kind!r}")
        if (self.components is None) == (self.native is None):
            raise ValueError("give exactly one of expression components or a native callable")
        if self.components is not None:
            comps = tuple(self.components)
            if len(comps) != self.chart.dimension:
                raise ValueError(f"expected {self.chart.dimension} components, got {len(comps)}")
            object.__setattr__(self, "components", comps)
            object.__setattr__(self, "_fn", ex.compile_exprs(comps, self.chart.state_names))

    @property
    def dimension(self) -> int:
        return self.chart.dimension

    @property
    def is_symbolic(self) -> bool:
        return self.components is not None

    def __call__(self, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(self.dimension)
        if self.native is not None:
            return np.asarray(self.native(np.asarray(q), np.asarray(qdot)), dtype=float)
        return np.array(self._fn(*np.asarray(q, dtype=float).tolist(), *np.asarray(qdot, dtype=float).tolist()))

    def describe(self) -> str:
        if self.kind == "zero":
            return "alpha=0"
        if self.kind == "potential":
            return f"alpha=dU, U={ex.to_string(self.source.u)}"
        if self.kind == "two_form":
            return f"alpha=i_v Phi, Phi={self.source.describe()}"
        if self.components is None:
            return f"alpha=<native {getattr(self.native, '__name__', 'callable')}>"
        return "alpha=(" + ", ".join(ex.to_string(c) for c in self.components) + ")"


def zero_force(chart: Chart) -> ForceForm:
    return ForceForm(chart, (ex.ZERO,) * chart.dimension, kind="zero")


def covector_force(chart: Chart, components: Sequence[Union[str, ex.Expr]]) -> ForceForm:
    comps = [ex.simplify(ex.parse_expr(c)) if isinstance(c, str) else c for c in components]
    return ForceForm(chart, tuple(comps), kind="general")


def from_two_form(phi2: TwoFormField) -> ForceForm:
    """``alpha = i_v Phi``, componentwise ``alpha_j = qdot^i Phi[i, j]``."""
    chart = phi2.chart
    n = chart.dimension
    vel = chart.velocity_names
    comps = []
    for j in range(n):
        acc: ex.Expr = ex.ZERO
        for i in range(n):
            c = phi2.coefficient(i, j)
            if c != ex.ZERO:
                acc = ex.BinOp("+", acc, ex.BinOp("*", ex.Var(vel[i]), c))
        comps.append(ex.simplify(acc))
    kind = "zero" if all(c == ex.ZERO for c in comps) else "two_form"
    return ForceForm(chart, tuple(comps), kind=kind, source=phi2)


def from_potential(u: Potential) -> ForceForm:
    """``alpha_j = dU/dq^j`` (velocity independent)."""
    comps = tuple(ex.differentiate(u.u, name) for name in u.chart.coordinate_names)
    kind = "zero" if all(c == ex.ZERO for c in comps) else "potential"
    return ForceForm(u.chart, comps, kind=kind, source=u)


def eval_force(f: ForceForm, s: TangentState) -> np.ndarray:
    if s.dimension != f.dimension:
        raise ValueError(f"state has dimension {s.dimension}, force has {f.dimension}")
    return f(s.q, s.qdot)


def contact_residual(f: ForceForm, s: TangentState) -> float:
    """``alpha_i(s) qdot^i``; identically zero exactly for contact forms."""
    return dotted_pairing(eval_force(f, s), s)


# --------------------------------------------------------------------------
# contact test

@dataclass(frozen=True)
class UniformStateSampler:
    """Coordinates uniform in a box, velocities uniform in ``[-v, v]^n``.

    Velocities shorter than ``min_speed`` are redrawn: the contact system is
    only generated off the zero section.
    """

    low: tuple[float, ...]
    high: tuple[float, ...]
    velocity_bound: float = 1.0
    min_speed: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "low", tuple(map(float, self.low)))
        object.__setattr__(self, "high", tuple(map(float, self.high)))
        if len(self.low) != len(self.high):
            raise ValueError("box bounds differ in length")
        if any(h < l for l, h in zip(self.low, self.high)):
            raise ValueError("box upper bound below lower bound")

    @classmethod
    def cube(cls, n: int, half_width: float = 1.0, **kw) -> "UniformStateSampler":
        return cls((-half_width,) * n, (half_width,) * n, **kw)

    def draw(self, rng: np.random.Generator) -> TangentState:
        n = len(self.low)
        q = rng.uniform(self.low, self.high)
        while True:
            v = rng.uniform(-self.velocity_bound, self.velocity_bound, size=n)
            if np.linalg.norm(v) >= self.min_speed:
                return TangentState(q, v)


@dataclass(frozen=True)
class ContactResult:
    verdict: bool
    max_residual: float
    n_samples: int
    tol: float
    seed: int
    normalized: bool
    symbolic_proof: bool | None = None
    worst_state: TangentState | None = None

    def __bool__(self):
        return self.verdict


def symbolic_contact_proof(f: ForceForm) -> bool | None:
    """Try to prove ``alpha_i qdot^i == 0`` symbolically.

    Works for expression forces that are linear in the velocities: each
    ``alpha_j`` must vanish at ``qdot = 0`` and have velocity-free partials
    ``C[i, j] = d alpha_j / d qdot^i``. Then ``alpha_i qdot^i = C[i, j] qdot^i
    qdot^j`` and the form is contact iff ``C[i, j] + C[j, i]`` simplifies to
    zero for every pair. Returns ``None`` when no proof is possible (the form
    is not recognisably velocity-linear, or the cancellation is not syntactic).
    """
    if f.kind == "zero":
        return True
    if f.components is None:
        return None
    chart = f.chart
    vel = chart.velocity_names
    n = chart.dimension
    at_rest = {v: ex.ZERO for v in vel}
    try:
        coeffs = [[None] * n for _ in range(n)]
        for j, comp in enumerate(f.components):
            if ex.simplify(ex.substitute(comp, at_rest)) != ex.ZERO:
                return None
            for i in range(n):
                c = ex.differentiate(comp, vel[i])
                if ex.free_variables(c) & set(vel):
                    return None
                coeffs[i][j] = c
        for i in range(n):
            for j in range(i, n):
                if ex.simplify(ex.BinOp("+", coeffs[i][j], coeffs[j][i])) != ex.ZERO:
                    return None
    except ex.ExprError:
        return None
    return True


def is_contact(
    f: ForceForm,
    sampler: UniformStateSampler,
    n_samples: int = 1000,
    tol: float = 1e-12,
    seed: int = 0,
    normalized: bool = False,
) -> ContactResult:
    """Sampled test of ``alpha_i qdot^i == 0``. No metric is involved.

    A failing verdict is a certificate (an explicit state with non-zero
    residual); a passing one is statistical evidence, upgraded to a proof
    when :func:`symbolic_contact_proof` succeeds. With ``normalized`` the
    residual at each state is divided by ``|alpha| |qdot|``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_state = None
    for _ in range(n_samples):
        s = sampler.draw(rng)
        alpha = eval_force(f, s)
        r = abs(float(alpha @ s.qdot))
        if normalized:
            scale = float(np.linalg.norm(alpha) * np.linalg.norm(s.qdot))
            r = r / scale if scale > 0.0 else 0.0
        if r > worst or worst_state is None:
            worst, worst_state = r, s
    return ContactResult(
        verdict=worst <= tol,
        max_residual=worst,
        n_samples=n_samples,
        tol=tol,
        seed=seed,
        normalized=normalized,
        symbolic_proof=symbolic_contact_proof(f),
        worst_state=worst_state,
    )


# --------------------------------------------------------------------------
# velocity-linear forces and their endomorphism field

def endomorphism(phi2: TwoFormField, me: MetricEval, q: Sequence[float], check: bool = False) -> np.ndarray:
    """Matrix ``E[l, j] = -g^{lk} Phi[j, k]`` with ``w = E @ qdot``.

    ``w`` is the geometric representative of the force: ``g w + alpha = 0``.
    With ``check`` the skew-adjointness ``g(E v, v) == 0`` is asserted on ten
    random velocities.
    """
    phi = phi2.matrix(q)
    e = -me.g_inv @ phi.T
    if check:
        rng = np.random.default_rng()
        for v in rng.standard_normal((10, phi.shape[0])):
            w = e @ v
            val = float(w @ me.g @ v)
            scale = float(np.abs(me.g).max() * np.abs(w).max() * np.abs(v).max()) or 1.0
            if abs(val) > 1e-12 * scale:
                raise AssertionError(f"endomorphism is not skew-adjoint: g(Ev, v)={val:.3e}")
    return e


def extract_two_form(f: ForceForm, q: Sequence[float]) -> np.ndarray:
    """Read ``C[i, j] = alpha_j(q, e_i)`` off basis velocities.

    For a velocity-linear force this is the coefficient matrix with
    ``alpha_j = qdot^i C[i, j]``; it is antisymmetric iff the force is contact.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    basis = np.eye(n)
    return np.array([f(q, basis[i]) for i in range(n)])


def two_form_from_matrix(chart: Chart, phi: np.ndarray) -> TwoFormField:
    n = chart.dimension
    return TwoFormField(chart, {(i, j): ex.Const(float(phi[i, j])) for i in range(n) for j in range(i + 1, n)})
