"""Command line: ``relforce run|check|scenarios|batch``.

Exit codes: 0 when every requested check matched its expectation (expected
failures included), 1 on any mismatch, 2 on usage, IO or parse errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .diagnostics import (
    DiagnosticReport, NonlinearityError, PreconditionError, check_criterio,
    check_energy_conservation, check_metric_independence,
    check_two_form_characterization, check_total_energy,
)
from .dynamics import IntegrationError, Trajectory, assemble_sode, energy_along, integrate
from .expr import ExprError
from .forces import is_contact
from .scenario import (
    Scenario, ScenarioError, builtin_names, load_builtin, load_scenario,
)

__all__ = [
    "trajectory_columns", "CheckOutcome", "run_checks", "run", "write_trajectory",
    "read_trajectory", "list_scenarios", "batch", "format_table", "main",
]

log = logging.getLogger("relforce")

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2


def trajectory_columns(names: Sequence[str]) -> list[str]:
    """Fixed column order: t, q..., qdot..., T, theta_dot, alpha_dot."""
    return ["t", *names, *(f"{n}_dot" for n in names), "T", "theta_dot", "alpha_dot"]


# --------------------------------------------------------------------------
# trajectory files

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory(path: Path, traj: Trajectory, scenario: Scenario) -> None:
    energy = energy_along(traj, scenario.metric)
    header = trajectory_columns(scenario.chart.coordinate_names)
    force = scenario.force
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(traj)):
            q, v = traj.q[i], traj.qdot[i]
            alpha_dot = float(force(q, v) @ v)
            row = [traj.t[i], *q, *v, energy[i], 2.0 * energy[i], alpha_dot]
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_trajectory(path) -> tuple[list[str], np.ndarray]:
    """Header and data block of a trajectory file, exactly as written."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    return header, np.array(rows).reshape(-1, len(header))


# --------------------------------------------------------------------------
# checks

@dataclass(frozen=True)
class CheckOutcome:
    scenario: str
    check: str
    expected: str
    report: DiagnosticReport | None
    error: str | None = None

    @property
    def verdict(self) -> str:
        if self.report is None:
            return "error"
        return self.report.verdict

    @property
    def matched(self) -> bool:
        if self.report is None:
            return False
        if self.check == "criterio" and not self.report.details.get("agree", True):
            return False
        return self.verdict == self.expected

    def row(self) -> list[str]:
        if self.report is None:
            measured = threshold = "-"
        else:
            measured, threshold = f"{self.report.measured:.6e}", f"{self.report.threshold:.1e}"
        return [self.scenario, self.check, measured, threshold, self.verdict, self.expected,
                "ok" if self.matched else "MISMATCH"]


def _one_check(sc: Scenario, name: str, traj: Trajectory) -> DiagnosticReport:
    tol = sc.tolerances
    if name == "energy_conservation":
        return check_energy_conservation(traj, sc.metric, tol["energy_conservation"])
    if name == "total_energy":
        return check_total_energy(traj, sc.metric, sc.potential, tol["total_energy"])
    if name == "contact":
        res = is_contact(sc.force, sc.sampler, sc.n_samples, tol["contact"], seed=sc.seed, normalized=True)
        return DiagnosticReport(
            check="contact", measured=res.max_residual, threshold=res.tol,
            examined=res.n_samples, seed=res.seed,
            details={"symbolic_proof": res.symbolic_proof, "normalized": True},
        )
    if name == "criterio":
        return check_criterio(
            sc.force, sc.metric, sc.initial, sc.params, sc.sampler,
            n_samples=sc.n_samples, seed=sc.seed, contact_tol=tol["contact"],
            energy_tol=tol["criterio_energy"], traj=traj,
        )
    if name == "metric_independence":
        return check_metric_independence(
            sc.force, [sc.metric, *sc.extra_metrics], sc.initial, sc.params, sc.sampler,
            tol=tol["metric_independence"], n_samples=sc.n_samples, seed=sc.seed,
            contact_tol=tol["contact"],
        )
    if name == "two_form_characterization":
        rng = np.random.default_rng(sc.seed)
        points = [sc.sampler.draw(rng).q for _ in range(sc.n_samples)]
        return check_two_form_characterization(
            sc.force, sc.metric, points, tol["two_form_characterization"], seed=sc.seed,
        )
    raise ValueError(f"unknown check {name!r}")


def run_checks(sc: Scenario, traj: Trajectory) -> list[CheckOutcome]:
    outcomes = []
    for name, expected in sc.checks:
        try:
            report = _one_check(sc, name, traj)
            outcomes.append(CheckOutcome(sc.name, name, expected, report))
        except (PreconditionError, NonlinearityError, IntegrationError, ExprError) as exc:
            outcomes.append(CheckOutcome(sc.name, name, expected, None, error=str(exc)))
    return outcomes


def _render_report(sc: Scenario, outcomes: list[CheckOutcome]) -> str:
    lines = [
        f"scenario: {sc.name}",
        f"source: {sc.source}",
        f"system: {sc.summary()}",
        f"integrator: {sc.params.method}, h={sc.params.h!r}, steps={sc.params.steps}",
        f"sampling seed: {sc.seed}",
        "",
    ]
    for o in outcomes:
        status = "ok" if o.matched else "MISMATCH"
        lines.append(f"[{status}] expected {o.expected}")
        if o.report is not None:
            lines.append(o.report.render("  "))
        else:
            lines.append(f"  {o.check}: error: {o.error}")
    return "\n".join(lines) + "\n"


def _render_summary(sc: Scenario, outcomes: list[CheckOutcome], code: int) -> str:
    lines = [f"scenario={sc.name}", f"seed={sc.seed}"]
    for o in outcomes:
        p = f"check.{o.check}"
        if o.report is not None:
            lines += [f"{p}.measured={_fmt(o.report.measured)}", f"{p}.threshold={_fmt(o.report.threshold)}"]
        else:
            lines.append(f"{p}.error={o.error}")
        lines += [f"{p}.verdict={o.verdict}", f"{p}.expected={o.expected}",
                  f"{p}.status={'ok' if o.matched else 'mismatch'}"]
    lines.append(f"exit_code={code}")
    return "\n".join(lines) + "\n"


def evaluate_scenario(sc: Scenario) -> tuple[Trajectory, list[CheckOutcome]]:
    traj = integrate(assemble_sode(sc.metric, sc.force), sc.initial, sc.params.h,
                     sc.params.steps, sc.params.method)
    return traj, run_checks(sc, traj)


def run(sc: Scenario, out_dir: Path | None, write_files: bool = True) -> tuple[int, list[CheckOutcome], str]:
    """Integrate, check and (optionally) write artifacts under ``out_dir/<name>``."""
    traj, outcomes = evaluate_scenario(sc)
    code = EXIT_OK if all(o.matched for o in outcomes) else EXIT_MISMATCH
    report = _render_report(sc, outcomes)
    if write_files and out_dir is not None:
        target = Path(out_dir) / sc.name
        target.mkdir(parents=True, exist_ok=True)
        if "trajectory" in sc.outputs:
            write_trajectory(target / "trajectory.csv", traj, sc)
        if "report" in sc.outputs:
            (target / "report.txt").write_text(report)
        if "summary" in sc.outputs:
            (target / "summary.txt").write_text(_render_summary(sc, outcomes, code))
    return code, outcomes, report


# --------------------------------------------------------------------------
# registry and batch

def list_scenarios(verbose: bool = False) -> str:
    lines = []
    for name in builtin_names():
        if verbose:
            sc = load_builtin(name)
            lines.append(f"{name}: {sc.summary()}")
        else:
            lines.append(name)
    return "\n".join(lines) + "\n"


def _resolve(ref: str, seed: int | None = None) -> Scenario:
    path = Path(ref)
    sc = load_scenario(path) if path.exists() else load_builtin(ref.removeprefix("builtin:"))
    if seed is not None:
        sc = replace(sc, seed=seed)
    return sc


def _batch_one(args: tuple[str, str | None]) -> list[list[str]]:
    ref, out = args
    try:
        sc = _resolve(ref)
    except (ScenarioError, KeyError, OSError) as exc:
        log.error("%s: %s", ref, exc)
        return [[ref, "load", "-", "-", "error", "pass", "MISMATCH"]]
    try:
        _, outcomes, _ = run(sc, Path(out) if out else None)
    except (IntegrationError, OSError) as exc:
        log.error("%s: %s", ref, exc)
        return [[sc.name, "run", "-", "-", "error", "pass", "MISMATCH"]]
    return [o.row() for o in outcomes]


BATCH_HEADER = ["scenario", "check", "measured", "threshold", "verdict", "expected", "status"]


def batch(specs: Sequence[str], jobs: int = 1, out_dir: str | None = None) -> tuple[int, list[list[str]]]:
    """Run every scenario, isolating failures; rows come back in input order."""
    work = [(s, out_dir) for s in specs]
    if jobs <= 1 or len(work) <= 1:
        chunks = [_batch_one(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_batch_one, work))
    rows = [r for chunk in chunks for r in chunk]
    code = EXIT_OK if all(r[-1] == "ok" for r in rows) else EXIT_MISMATCH
    return code, rows


def format_table(rows: list[list[str]]) -> str:
    table = [BATCH_HEADER, *rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(BATCH_HEADER))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table) + "\n"


# --------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relforce", description="Relativistic-force mechanics on a metric.")
    p.add_argument("-v", "--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate a scenario and write trajectory + report")
    r.add_argument("file", help="scenario file or builtin name")
    r.add_argument("--out", default="out", help="output directory (default ./out)")
    r.add_argument("--seed", type=int, default=None, help="override the sampling seed")

    c = sub.add_parser("check", help="run diagnostics only; nothing is written")
    c.add_argument("file")
    c.add_argument("--seed", type=int, default=None)

    s = sub.add_parser("scenarios", help="list builtin scenarios")
    s.add_argument("--verbose", action="store_true", help="also print each (M, T2, alpha)")

    b = sub.add_parser("batch", help="run several scenarios and print a summary table")
    b.add_argument("files", nargs="*")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", default=None, help="also write per-scenario artifacts here")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")

    if args.command == "scenarios":
        sys.stdout.write(list_scenarios(args.verbose))
        return EXIT_OK
    if args.command == "batch":
        code, rows = batch(args.files, jobs=args.jobs, out_dir=args.out)
        sys.stdout.write(format_table(rows))
        return code

    try:
        sc = _resolve(args.file, args.seed)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (KeyError, OSError) as exc:
        print(f"relforce: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        if args.command == "check":
            code, _, report = run(sc, None, write_files=False)
        else:
            code, _, report = run(sc, Path(args.out))
    except IntegrationError as exc:
        print(f"relforce: {exc}; last good state {exc.last_state}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"relforce: cannot write output: {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(report)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
