"""Scenario files: a sectioned, line-oriented text format (v1).

A scenario declares a mechanical system (chart, metric, work form), initial
data, integrator settings, sampling settings and the checks to run. See
``docs/scenario-format.md`` for the grammar. Loading never stops at the
first problem: every error is collected with its line number and raised
together as :class:`ScenarioError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from . import expr as ex
from .diagnostics import RunParams
from .forces import (
    ForceForm, Potential, TwoFormField, UniformStateSampler, covector_force,
    from_potential, from_two_form, zero_force,
)
from .geometry import Chart, MetricField, SingularMetricError, TangentState, eval_metric

__all__ = [
    "FORMAT_VERSION", "CHECKS", "DEFAULT_TOLERANCES", "Scenario",
    "ScenarioError", "load_scenario", "parse_scenario", "builtin_names",
    "builtin_path", "load_builtin",
]

FORMAT_VERSION = 1

CHECKS = (
    "contact", "criterio", "energy_conservation", "metric_independence",
    "total_energy", "two_form_characterization",
)

DEFAULT_TOLERANCES = {
    "contact": 1e-12,
    "criterio_energy": 1e-7,
    "energy_conservation": 1e-8,
    "metric_independence": 1e-8,
    "total_energy": 1e-8,
    "two_form_characterization": 1e-12,
}

REQUIRED_SECTIONS = ("chart", "metric", "initial")
KNOWN_SECTIONS = (
    "chart", "constants", "metric", "force", "initial", "integrator",
    "sampling", "checks", "tolerances", "outputs",
)
OUTPUTS = ("trajectory", "report", "summary")
BUILTIN_CONSTANTS = {"pi": math.pi}


class ScenarioError(ValueError):
    """All validation problems of one file, each as ``(line, message)``."""

    def __init__(self, errors: list[tuple[int, str]], source: str = "<scenario>"):
        self.errors = sorted(errors)
        self.source = source
        body = "\n".join(f"  {source}:{line}: {msg}" for line, msg in self.errors)
        super().__init__(f"{len(self.errors)} error(s) in {source}:\n{body}")


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    chart: Chart
    metric: MetricField
    force: ForceForm
    initial: TangentState
    params: RunParams
    sampler: UniformStateSampler
    n_samples: int
    seed: int
    checks: tuple[tuple[str, str], ...]
    description: str = ""
    potential: Potential | None = None
    extra_metrics: tuple[MetricField, ...] = ()
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    outputs: tuple[str, ...] = OUTPUTS
    source: str = "<scenario>"

    def summary(self) -> str:
        """One-line ``(M, T2, alpha)`` description."""
        return (
            f"M=R^{self.chart.dimension}({','.join(self.chart.coordinate_names)}), "
            f"T2={self.metric.describe()}, {self.force.describe()}"
        )


@dataclass
class _Line:
    number: int
    key: str
    value: str | None


class _Collector:
    def __init__(self):
        self.errors: list[tuple[int, str]] = []

    def add(self, line: int, message: str) -> None:
        self.errors.append((line, message))


def _split_sections(text: str, errs: _Collector):
    sections: dict[str, list[_Line]] = {}
    header_line: dict[str, int] = {}
    top: list[_Line] = []
    current: list[_Line] | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errs.add(number, f"malformed section header {raw.strip()!r}")
                current = None
                continue
            name = line[1:-1].strip()
            base = name.split(":", 1)[0]
            if base not in KNOWN_SECTIONS:
                errs.add(number, f"unknown section [{name}]")
                current = None
                continue
            if ":" in name and base != "metric":
                errs.add(number, f"only [metric:<label>] sections may carry a label, got [{name}]")
                current = None
                continue
            if name in sections:
                errs.add(number, f"section [{name}] appears twice (first at line {header_line[name]})")
                current = None
                continue
            sections[name] = current = []
            header_line[name] = number
            continue
        if "=" in line:
            key, value = line.split("=", 1)
            entry = _Line(number, " ".join(key.split()), value.strip())
        else:
            entry = _Line(number, " ".join(line.split()), None)
        if not entry.key:
            errs.add(number, "missing key before '='")
            continue
        if current is None:
            if sections:
                continue  # inside a rejected section; already reported
            top.append(entry)
        else:
            current.append(entry)
    return top, sections, header_line


def _expr(src: str, line: int, allowed: Iterable[str], what: str, consts, errs: _Collector):
    try:
        e = ex.parse_expr(src)
    except ex.ExprError as exc:
        errs.add(line, f"{what}: {exc}")
        return None
    allowed = set(allowed)
    for name in sorted(ex.free_variables(e)):
        if name not in allowed and name not in consts:
            errs.add(line, f"{what}: unbound identifier {name!r}")
            e = None
    if e is None:
        return None
    return ex.simplify(ex.substitute(e, {k: ex.Const(v) for k, v in consts.items()}))


def _number(src: str, line: int, what: str, consts, errs: _Collector) -> float | None:
    e = _expr(src, line, (), what, consts, errs)
    if e is None:
        return None
    try:
        return ex.evaluate(e, {})
    except ex.ExprError as exc:
        errs.add(line, f"{what}: {exc}")
        return None


def _vector(src: str, line: int, n: int | None, what: str, consts, errs: _Collector):
    parts = [p.strip() for p in src.split(",")]
    values = [_number(p, line, what, consts, errs) for p in parts]
    if any(v is None for v in values):
        return None
    if n is not None and len(values) != n:
        errs.add(line, f"{what}: expected {n} values, got {len(values)} (dimension mismatch)")
        return None
    return values


def _int(src: str, line: int, what: str, errs: _Collector, minimum: int = 0) -> int | None:
    try:
        v = int(src)
    except ValueError:
        errs.add(line, f"{what}: expected an integer, got {src!r}")
        return None
    if v < minimum:
        errs.add(line, f"{what}: must be at least {minimum}, got {v}")
        return None
    return v


def _index_pair(key: str, chart: Chart, line: int, what: str, errs: _Collector):
    names = key.split()
    if len(names) != 2:
        errs.add(line, f"{what}: key must be two coordinate names, got {key!r}")
        return None
    try:
        return chart.index(names[0]), chart.index(names[1])
    except ValueError:
        bad = [n for n in names if n not in chart.coordinate_names]
        errs.add(line, f"{what}: unknown coordinate {bad[0]!r}")
        return None


def _parse_metric(entries, chart, label, consts, errs):
    table = {}
    lines = {}
    for e in entries:
        if e.value is None:
            errs.add(e.number, f"metric{label}: entry {e.key!r} has no value")
            continue
        pair = _index_pair(e.key, chart, e.number, f"metric{label}", errs)
        if pair is None:
            continue
        key = (min(pair), max(pair))
        if key in table:
            errs.add(e.number, f"metric{label}: component {e.key!r} given twice (also line {lines[key]})")
            continue
        comp = _expr(e.value, e.number, chart.coordinate_names, f"metric{label} {e.key}", consts, errs)
        if comp is not None:
            table[key] = comp
            lines[key] = e.number
    return table


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    errs = _Collector()
    top, sections, header_line = _split_sections(text, errs)

    meta = {}
    for e in top:
        if e.key not in ("format_version", "name", "description"):
            errs.add(e.number, f"unknown top-level key {e.key!r}")
        elif e.value is None:
            errs.add(e.number, f"{e.key} needs a value")
        else:
            meta[e.key] = (e.number, e.value)
    if "format_version" in meta:
        line, value = meta["format_version"]
        if value != str(FORMAT_VERSION):
            errs.add(line, f"unsupported format_version {value!r}; this reader understands {FORMAT_VERSION}")
    name = meta.get("name", (0, Path(source).stem))[1]
    description = meta.get("description", (0, ""))[1]

    missing = [s for s in REQUIRED_SECTIONS if s not in sections]
    if missing:
        errs.add(0, "missing required section(s): " + ", ".join(f"[{s}]" for s in missing))

    # chart
    chart = None
    for e in sections.get("chart", []):
        if e.key != "coordinates" or e.value is None:
            errs.add(e.number, f"[chart] only takes 'coordinates = a, b, ...', got {e.key!r}")
            continue
        names = tuple(n.strip() for n in e.value.split(","))
        bad = [n for n in names if not n.isidentifier() or n in ex.FUNCTIONS or n in BUILTIN_CONSTANTS]
        if bad:
            errs.add(e.number, f"invalid coordinate name(s) {bad}")
            continue
        try:
            chart = Chart(names)
        except ValueError as exc:
            errs.add(e.number, str(exc))
    if chart is None and "chart" in sections:
        errs.add(header_line["chart"], "[chart] must declare 'coordinates'")
    n = chart.dimension if chart else None
    state_names = chart.state_names if chart else ()

    # constants
    consts = dict(BUILTIN_CONSTANTS)
    for e in sections.get("constants", []):
        if e.value is None or not e.key.isidentifier():
            errs.add(e.number, f"constants take 'name = value', got {e.key!r}")
            continue
        if e.key in state_names or e.key in ex.FUNCTIONS:
            errs.add(e.number, f"constant {e.key!r} shadows a coordinate, velocity or function")
            continue
        v = _number(e.value, e.number, f"constant {e.key}", consts, errs)
        if v is not None:
            consts[e.key] = v

    # metrics
    metric = None
    extra_metrics = []
    if chart is not None:
        for sec_name in sorted(s for s in sections if s.split(":", 1)[0] == "metric"):
            label = sec_name.split(":", 1)[1] if ":" in sec_name else ""
            shown = f"[{label}]" if label else ""
            before = len(errs.errors)
            table = _parse_metric(sections[sec_name], chart, shown, consts, errs)
            if len(errs.errors) > before:
                # a bad entry is already reported; checking the rest would only echo it
                continue
            if not table:
                errs.add(header_line[sec_name], f"[{sec_name}] declares no components")
                continue
            m = MetricField(chart, table, name=label or name)
            if label:
                extra_metrics.append(m)
            else:
                metric = m

    # force
    force = zero_force(chart) if chart else None
    potential = None
    fentries = sections.get("force", [])
    kind_entries = [e for e in fentries if e.key == "kind"]
    kind = kind_entries[0].value if kind_entries else "none"
    body = [e for e in fentries if e.key != "kind"]
    if kind not in ("none", "covector", "potential", "two_form"):
        errs.add(kind_entries[0].number, f"unknown force kind {kind!r} (none, covector, potential, two_form)")
    elif chart is not None:
        if kind == "none" and body:
            errs.add(body[0].number, "force kind 'none' takes no entries")
        elif kind == "potential":
            us = [e for e in body if e.key == "U" and e.value is not None]
            for e in body:
                if e.key != "U" or e.value is None:
                    errs.add(e.number, f"potential force takes 'U = expr', got {e.key!r}")
            if len(us) != 1:
                errs.add(header_line["force"], "potential force needs exactly one 'U = expr'")
            else:
                u = _expr(us[0].value, us[0].number, chart.coordinate_names, "potential U", consts, errs)
                if u is not None:
                    try:
                        potential = Potential(chart, u)
                        force = from_potential(potential)
                    except ex.ExprError as exc:
                        errs.add(us[0].number, f"potential U: {exc}")
        elif kind == "covector":
            comps: dict[int, ex.Expr] = {}
            for e in body:
                if e.value is None or e.key not in chart.coordinate_names:
                    errs.add(e.number, f"covector entries are 'coordinate = expr', got {e.key!r}")
                    continue
                c = _expr(e.value, e.number, state_names, f"force component {e.key}", consts, errs)
                if c is not None:
                    comps[chart.index(e.key)] = c
            force = covector_force(chart, [comps.get(i, ex.ZERO) for i in range(n)])
        elif kind == "two_form":
            table = {}
            for e in body:
                if e.value is None:
                    errs.add(e.number, f"two_form entry {e.key!r} has no value")
                    continue
                pair = _index_pair(e.key, chart, e.number, "two_form", errs)
                if pair is None:
                    continue
                if pair[0] == pair[1]:
                    errs.add(e.number, "two_form diagonal entries are identically zero")
                    continue
                c = _expr(e.value, e.number, chart.coordinate_names, f"two_form {e.key}", consts, errs)
                if c is not None:
                    if pair in table or pair[::-1] in table:
                        errs.add(e.number, f"two_form component {e.key!r} given twice")
                        continue
                    table[pair] = c
            force = from_two_form(TwoFormField(chart, table))

    # initial data
    q0 = qdot0 = None
    seen = set()
    for e in sections.get("initial", []):
        if e.key in ("q", "qdot") and e.value is not None:
            seen.add(e.key)
            v = _vector(e.value, e.number, n, f"initial {e.key}", consts, errs)
            if e.key == "q":
                q0 = v
            else:
                qdot0 = v
        else:
            errs.add(e.number, f"[initial] takes 'q = ...' and 'qdot = ...', got {e.key!r}")
    if "initial" in sections and seen != {"q", "qdot"}:
        errs.add(header_line["initial"], "[initial] needs both 'q' and 'qdot'")

    # integrator
    method, h, steps = "rk4", 1e-3, 1000
    for e in sections.get("integrator", []):
        if e.value is None:
            errs.add(e.number, f"integrator entry {e.key!r} has no value")
        elif e.key == "method":
            if e.value not in ("rk4", "verlet", "euler"):
                errs.add(e.number, f"unknown method {e.value!r} (rk4, verlet, euler)")
            method = e.value
        elif e.key == "h":
            v = _number(e.value, e.number, "integrator h", consts, errs)
            if v is not None and not v > 0:
                errs.add(e.number, f"integrator h must be positive, got {v}")
            h = v if v is not None else h
        elif e.key == "steps":
            steps = _int(e.value, e.number, "integrator steps", errs, minimum=1) or steps
        else:
            errs.add(e.number, f"unknown integrator key {e.key!r}")

    # sampling
    low = high = None
    n_samples, seed = 1000, 0
    for e in sections.get("sampling", []):
        if e.value is None:
            errs.add(e.number, f"sampling entry {e.key!r} has no value")
        elif e.key == "low":
            low = _vector(e.value, e.number, n, "sampling low", consts, errs)
        elif e.key == "high":
            high = _vector(e.value, e.number, n, "sampling high", consts, errs)
        elif e.key == "n_samples":
            n_samples = _int(e.value, e.number, "n_samples", errs, minimum=1) or n_samples
        elif e.key == "seed":
            v = _int(e.value, e.number, "seed", errs)
            seed = v if v is not None else seed
        else:
            errs.add(e.number, f"unknown sampling key {e.key!r}")
    if q0 is not None:
        low = low or [x - 1.0 for x in q0]
        high = high or [x + 1.0 for x in q0]
    sampler = None
    if low is not None and high is not None:
        try:
            sampler = UniformStateSampler(tuple(low), tuple(high))
        except ValueError as exc:
            errs.add(header_line.get("sampling", 0), f"sampling box: {exc}")

    # checks
    default_expect = "pass"
    checks: list[tuple[str, str, int]] = []
    for e in sections.get("checks", []):
        if e.key == "expect":
            if e.value not in ("pass", "fail"):
                errs.add(e.number, f"expect must be 'pass' or 'fail', got {e.value!r}")
            else:
                default_expect = e.value
            continue
        if e.key not in CHECKS:
            errs.add(e.number, f"unknown check {e.key!r} (known: {', '.join(CHECKS)})")
            continue
        if e.value is not None and e.value not in ("pass", "fail"):
            errs.add(e.number, f"check expectation must be 'pass' or 'fail', got {e.value!r}")
            continue
        checks.append((e.key, e.value, e.number))
    resolved = tuple((c, v or default_expect) for c, v, _ in checks)
    for c, _, line in checks:
        if c == "total_energy" and kind != "potential":
            errs.add(line, "total_energy needs a potential force")
        if c == "metric_independence" and not any(k.startswith("metric:") for k in sections):
            errs.add(line, "metric_independence needs at least one extra [metric:<label>] section")

    tolerances = dict(DEFAULT_TOLERANCES)
    for e in sections.get("tolerances", []):
        if e.key not in DEFAULT_TOLERANCES or e.value is None:
            errs.add(e.number, f"unknown tolerance {e.key!r} (known: {', '.join(DEFAULT_TOLERANCES)})")
            continue
        v = _number(e.value, e.number, f"tolerance {e.key}", consts, errs)
        if v is not None:
            tolerances[e.key] = v

    outputs = OUTPUTS
    if "outputs" in sections:
        chosen = []
        for e in sections["outputs"]:
            if e.key not in OUTPUTS or e.value is not None:
                errs.add(e.number, f"outputs lists artifact names ({', '.join(OUTPUTS)}), got {e.key!r}")
            else:
                chosen.append(e.key)
        outputs = tuple(chosen)

    # point checks that need everything above
    if metric is not None and q0 is not None:
        for m in [metric, *extra_metrics]:
            try:
                eval_metric(m, q0)
            except (SingularMetricError, ex.ExprError) as exc:
                errs.add(header_line.get(f"metric:{m.name}", header_line.get("metric", 0)),
                         f"metric {m.name!r} at initial q: {exc}")

    if errs.errors:
        raise ScenarioError(errs.errors, source)
    return Scenario(
        name=name,
        description=description,
        chart=chart,
        metric=metric,
        force=force,
        potential=potential,
        initial=TangentState(q0, qdot0),
        params=RunParams(h=h, steps=steps, method=method),
        sampler=sampler,
        n_samples=n_samples,
        seed=seed,
        checks=resolved,
        extra_metrics=tuple(extra_metrics),
        tolerances=tolerances,
        outputs=outputs,
        source=source,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), source=str(path))


# --------------------------------------------------------------------------
# builtin registry

def _builtin_dir():
    return resources.files("relforce") / "scenarios"


def builtin_names() -> list[str]:
    return sorted(p.name[: -len(".scn")] for p in _builtin_dir().iterdir() if p.name.endswith(".scn"))


def builtin_path(name: str):
    p = _builtin_dir() / f"{name}.scn"
    if not p.is_file():
        raise KeyError(f"no builtin scenario {name!r}; known: {', '.join(builtin_names())}")
    return p


def load_builtin(name: str) -> Scenario:
    p = builtin_path(name)
    return parse_scenario(p.read_text(), source=f"builtin:{name}")
