"""Executable checks for relativistic forces, reported with measured residuals.

Each check returns a :class:`DiagnosticReport` whose verdict is always
``measured <= threshold``. The criterion check pairs the metric-free contact
test with kinetic-energy conservation along an integrated trajectory; since a
sampled contact test cannot prove a universal statement, a pass is evidence
and a fail is a certificate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dynamics import Trajectory, assemble_sode, energy_along, integrate
from .forces import (
    ForceForm, Potential, UniformStateSampler, endomorphism, extract_two_form, is_contact,
)
from .geometry import MetricField, TangentState, eval_metric

__all__ = [
    "DiagnosticReport", "RunParams", "PreconditionError", "NonlinearityError",
    "check_energy_conservation", "check_criterio", "check_metric_independence",
    "check_two_form_characterization", "check_total_energy", "relative_drift",
    "run_criterio_matrix",
]

CONTACT_TOL = 1e-12
ENERGY_TOL = 1e-7


class PreconditionError(ValueError):
    pass


class NonlinearityError(ValueError):
    pass


@dataclass(frozen=True)
class RunParams:
    h: float = 1e-3
    steps: int = 10_000
    method: str = "rk4"


@dataclass(frozen=True)
class DiagnosticReport:
    check: str
    measured: float
    threshold: float
    examined: int
    notes: str = ""
    seed: int | None = None
    details: Mapping[str, object] = field(default_factory=dict)
    parts: tuple["DiagnosticReport", ...] = ()

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.threshold)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def summary_line(self) -> str:
        return (
            f"{self.check}: {self.verdict} "
            f"(measured={self.measured:.3e}, threshold={self.threshold:.3e}, n={self.examined})"
        )

    def render(self, indent: str = "") -> str:
        lines = [indent + self.summary_line()]
        if self.seed is not None:
            lines.append(f"{indent}  seed: {self.seed}")
        for key, value in self.details.items():
            lines.append(f"{indent}  {key}: {value}")
        if self.notes:
            lines.append(f"{indent}  note: {self.notes}")
        for part in self.parts:
            lines.append(part.render(indent + "  "))
        return "\n".join(lines)


def relative_drift(values: np.ndarray) -> float:
    """``max |v_i - v_0| / max(1, |v_0|)``; the floor keeps null data finite."""
    values = np.asarray(values, dtype=float)
    v0 = values[0]
    return float(np.max(np.abs(values - v0)) / max(1.0, abs(v0)))


def check_energy_conservation(traj: Trajectory, m: MetricField, tol: float = 1e-8) -> DiagnosticReport:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    energy = energy_along(traj, m)
    return DiagnosticReport(
        check="energy_conservation",
        measured=relative_drift(energy),
        threshold=tol,
        examined=len(traj),
        details={"T0": float(energy[0]), "method": traj.method, "h": traj.h},
    )


def check_total_energy(traj: Trajectory, m: MetricField, u: Potential, tol: float = 1e-8) -> DiagnosticReport:
    """Classical ``T + U`` conservation, valid for potential forces."""
    total = energy_along(traj, m) + np.array([u.value(q) for q in traj.q])
    return DiagnosticReport(
        check="total_energy",
        measured=relative_drift(total),
        threshold=tol,
        examined=len(traj),
        details={"E0": float(total[0])},
    )


def check_criterio(
    f: ForceForm,
    m: MetricField,
    s0: TangentState,
    params: RunParams,
    sampler: UniformStateSampler,
    n_samples: int = 1000,
    seed: int = 0,
    contact_tol: float = CONTACT_TOL,
    energy_tol: float = ENERGY_TOL,
    traj: Trajectory | None = None,
) -> DiagnosticReport:
    """Both sides of "relativistic iff contact", checked independently.

    Passes when the force is contact *and* the kinetic energy is conserved;
    ``details['agree']`` records whether the two one-sided tests agree, which
    is what "contact iff conserved" predicts for every input. A precomputed ``traj``
    from ``s0`` under ``(m, f)`` skips the integration.
    """
    contact = is_contact(f, sampler, n_samples=n_samples, tol=contact_tol, seed=seed, normalized=True)
    contact_report = DiagnosticReport(
        check="contact",
        measured=contact.max_residual,
        threshold=contact_tol,
        examined=n_samples,
        seed=seed,
        details={"symbolic_proof": contact.symbolic_proof, "normalized": True},
    )
    if traj is None:
        traj = integrate(assemble_sode(m, f), s0, params.h, params.steps, params.method)
    energy_report = check_energy_conservation(traj, m, energy_tol)
    agree = contact_report.passed == energy_report.passed
    ratio = max(contact_report.measured / contact_tol, energy_report.measured / energy_tol)
    notes = "contact verdict agrees with energy verdict" if agree else (
        "DISAGREEMENT between contact and energy verdicts"
    )
    return DiagnosticReport(
        check="criterio",
        measured=ratio,
        threshold=1.0,
        examined=n_samples + len(traj),
        notes=notes + "; sampled contact test: fail is a certificate, pass is evidence",
        seed=seed,
        details={
            "agree": agree,
            "contact_residual": contact_report.measured,
            "energy_drift": energy_report.measured,
        },
        parts=(contact_report, energy_report),
    )


def check_metric_independence(
    f: ForceForm,
    metrics: Sequence[MetricField],
    s0: TangentState,
    params: RunParams,
    sampler: UniformStateSampler,
    tol: float = 1e-8,
    n_samples: int = 1000,
    seed: int = 0,
    contact_tol: float = CONTACT_TOL,
) -> DiagnosticReport:
    """A contact force conserves each metric's own kinetic energy."""
    if len(metrics) < 2:
        raise PreconditionError("metric independence needs at least two metrics")
    contact = is_contact(f, sampler, n_samples=n_samples, tol=contact_tol, seed=seed, normalized=True)
    if not contact:
        raise PreconditionError(
            f"force is not contact (normalized residual {contact.max_residual:.3e}); "
            "metric independence only applies to contact forms"
        )
    parts = []
    for m in metrics:
        traj = integrate(assemble_sode(m, f), s0, params.h, params.steps, params.method)
        rep = check_energy_conservation(traj, m, tol)
        parts.append(DiagnosticReport(
            check=f"energy_conservation[{m.name or m.describe()}]",
            measured=rep.measured, threshold=tol, examined=rep.examined, details=rep.details,
        ))
    return DiagnosticReport(
        check="metric_independence",
        measured=max(p.measured for p in parts),
        threshold=tol,
        examined=sum(p.examined for p in parts),
        seed=seed,
        details={"metrics": len(metrics), "contact_residual": contact.max_residual},
        parts=tuple(parts),
    )


def _probe_linearity(f: ForceForm, q: np.ndarray, rng: np.random.Generator, rtol: float = 1e-9) -> None:
    v = rng.uniform(-1.0, 1.0, size=q.shape[0])
    base = f(q, v)
    for a in (0.0, 2.0, -0.5):
        got = f(q, a * v)
        want = a * base
        if np.max(np.abs(got - want)) > rtol * (1.0 + np.max(np.abs(want))):
            raise NonlinearityError(
                f"force is not linear in the velocities at q={q.tolist()} (scale {a})"
            )


def check_two_form_characterization(
    f: ForceForm,
    m: MetricField,
    q_points: Sequence[Sequence[float]],
    tol: float = 1e-12,
    seed: int = 0,
) -> DiagnosticReport:
    """Velocity-linear forces are relativistic iff they come from a 2-form.

    At each point the coefficient matrix ``C[i, j] = alpha_j(q, e_i)`` is read
    off basis velocities. ``measured`` is the largest relative size of its
    symmetric part, ``|sym C| / |C|`` (Frobenius); a 2-form gives zero.
    """
    if len(q_points) == 0:
        raise ValueError("need at least one sample point")
    rng = np.random.default_rng(seed)
    worst = 0.0
    recon = 0.0
    skew = 0.0
    for q in q_points:
        q = np.asarray(q, dtype=float)
        _probe_linearity(f, q, rng)
        c = extract_two_form(f, q)
        norm = float(np.linalg.norm(c))
        sym = 0.5 * (c + c.T)
        if norm > 0.0:
            worst = max(worst, float(np.linalg.norm(sym)) / norm)
        if f.kind == "two_form":
            recon = max(recon, float(np.max(np.abs(c - f.source.matrix(q)))))
            me = eval_metric(m, q)
            e = endomorphism(f.source, me, q)
            u, v = rng.standard_normal((2, q.shape[0]))
            skew = max(skew, abs(float((e @ u) @ me.g @ v + u @ me.g @ (e @ v))))
    details: dict[str, object] = {"points": len(q_points)}
    if f.kind == "two_form":
        details["reconstruction_error"] = recon
        details["skew_adjoint_residual"] = skew
    return DiagnosticReport(
        check="two_form_characterization",
        measured=worst,
        threshold=tol,
        examined=len(q_points),
        seed=seed,
        details=details,
    )


def run_criterio_matrix(
    forces: Mapping[str, ForceForm],
    metrics: Mapping[str, MetricField],
    s0: TangentState,
    params: RunParams,
    sampler: UniformStateSampler,
    n_samples: int = 1000,
    seed: int = 0,
    jobs: int = 1,
) -> dict[tuple[str, str], DiagnosticReport]:
    """The criterion check over every (force, metric) cell, in a stable order."""
    cells = [(fn, mn) for fn in forces for mn in metrics]

    def one(cell):
        fn, mn = cell
        return check_criterio(forces[fn], metrics[mn], s0, params, sampler, n_samples=n_samples, seed=seed)

    if jobs <= 1:
        results = [one(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, cells))
    return dict(zip(cells, results))
