import math
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relforce.scenario import (
    CHECKS, ScenarioError, builtin_names, load_builtin, load_scenario, parse_scenario,
)

BUILTINS = [
    "drag-symmetric", "euclidean-free", "harmonic-potential", "magnetic-minkowski",
    "magnetic-uniform", "minkowski-null", "polar-geodesic",
]

MINIMAL = """
[chart]
coordinates = x, y
[metric]
x x = 1
y y = 1
[initial]
q = 0, 0
qdot = 1, 0
"""


def parse(text):
    return parse_scenario(textwrap.dedent(text), "test.scn")


def errors_of(text):
    with pytest.raises(ScenarioError) as info:
        parse(text)
    return info.value.errors


class TestBuiltins:
    def test_registry(self):
        assert builtin_names() == BUILTINS

    @pytest.mark.parametrize("name", BUILTINS)
    def test_every_builtin_loads(self, name):
        sc = load_builtin(name)
        assert sc.name == name
        assert sc.checks and all(c in CHECKS for c, _ in sc.checks)

    def test_magnetic_uniform(self):
        sc = load_builtin("magnetic-uniform")
        assert sc.chart.coordinate_names == ("x", "y", "z")
        assert sc.metric.is_constant
        assert sc.force.kind == "two_form"
        assert sc.force.source.matrix([0, 0, 0]).tolist() == [[0, 1, 0], [-1, 0, 0], [0, 0, 0]]
        assert sc.initial.qdot.tolist() == [1.0, 0.0, 0.0]

    def test_harmonic_expects_failure(self):
        sc = load_builtin("harmonic-potential")
        assert sc.checks == (("criterio", "fail"),)
        assert sc.params.h == 2 * math.pi / 6283

    def test_unknown_builtin(self):
        with pytest.raises(KeyError):
            load_builtin("no-such-thing")


class TestParsing:
    def test_minimal_defaults(self):
        sc = parse(MINIMAL)
        assert sc.force.kind == "zero"
        assert sc.params.method == "rk4" and sc.params.h == 1e-3 and sc.params.steps == 1000
        assert sc.sampler.low == (-1.0, -1.0) and sc.sampler.high == (1.0, 1.0)
        assert sc.checks == ()

    def test_constants_and_expressions(self):
        sc = parse(MINIMAL.replace("[initial]", """
            [constants]
            B = 2 * pi
            [force]
            kind = two_form
            x y = B * sin(x)
            [initial]"""))
        phi = sc.force.source.matrix([math.pi / 2, 0.0])
        assert phi[0, 1] == pytest.approx(2 * math.pi)

    def test_potential_force(self):
        sc = parse(MINIMAL + "[force]\nkind = potential\nU = x*y\n[checks]\ntotal_energy\n")
        assert sc.force.kind == "potential"
        assert sc.potential.value([2.0, 3.0]) == 6.0

    def test_covector_force_may_use_velocities(self):
        sc = parse(MINIMAL + "[force]\nkind = covector\nx = y_dot\ny = -x_dot\n")
        assert sc.force([0, 0], np.array([2.0, 3.0])).tolist() == [3.0, -2.0]

    def test_check_expectations(self):
        sc = parse(MINIMAL + "[checks]\nenergy_conservation\ncontact = fail\n")
        assert sc.checks == (("energy_conservation", "pass"), ("contact", "fail"))

    def test_tolerances_override(self):
        sc = parse(MINIMAL + "[tolerances]\nenergy_conservation = 1e-3\n")
        assert sc.tolerances["energy_conservation"] == 1e-3
        assert sc.tolerances["contact"] == 1e-12

    def test_comments_and_blank_lines(self):
        sc = parse("# header\n\n" + MINIMAL.replace("x x = 1", "x x = 1  # unit"))
        assert sc.metric.component(0, 0).value == 1.0


class TestValidation:
    def test_empty_file_lists_required_sections(self):
        (err,) = errors_of("")
        line, msg = err
        assert line == 0
        for section in ("[chart]", "[metric]", "[initial]"):
            assert section in msg

    def test_unbound_identifier(self):
        errs = errors_of(MINIMAL.replace("x x = 1", "x x = r^2"))
        assert len(errs) == 1
        line, msg = errs[0]
        assert "'r'" in msg and line == 5

    def test_dimension_mismatch(self):
        errs = errors_of(MINIMAL.replace("qdot = 1, 0", "qdot = 1, 0, 0"))
        assert any("dimension" in m for _, m in errs)

    def test_all_errors_are_collected_with_lines(self):
        text = """\
            [chart]
            coordinates = x, y
            [metric]
            x x = r^2
            y y = 1
            [force]
            kind = covector
            x = foo(x)
            y = x_dot + z
            [initial]
            q = 0, 0
            qdot = 1, 0
            [integrator]
            h = -1
            steps = 0
            [checks]
            bogus
            [weird]
            """
        errs = errors_of(text)
        assert [line for line, _ in errs] == [4, 8, 9, 14, 15, 17, 18]

    @pytest.mark.parametrize("text, fragment", [
        (MINIMAL + "[integrator]\nmethod = magic\n", "method"),
        (MINIMAL.replace("x x = 1", "x x = 0"), "degenerate"),
        (MINIMAL + "[force]\nkind = potential\nU = x_dot\n", "x_dot"),
        (MINIMAL + "[force]\nkind = two_form\nx x = 1\n", "diagonal"),
        (MINIMAL + "[force]\nkind = laser\n", "laser"),
        (MINIMAL + "[checks]\nmetric_independence\n", "metric"),
        (MINIMAL + "[checks]\ntotal_energy\n", "potential"),
        ("format_version = 2\n" + MINIMAL, "format_version"),
        (MINIMAL + "[sampling]\nlow = 1, 1\nhigh = 0, 0\n", "bound"),
        (MINIMAL.replace("[chart]", "[chart]\n[chart]"), "twice"),
        (MINIMAL.replace("x x = 1", "x x = 1\nx x = 2"), "twice"),
        ("stray line\n" + MINIMAL, "stray"),
    ])
    def test_located_errors(self, text, fragment):
        errs = errors_of(text)
        assert any(fragment in msg for _, msg in errs), errs

    def test_error_message_names_source(self):
        with pytest.raises(ScenarioError) as info:
            parse_scenario("", "my.scn")
        assert "my.scn" in str(info.value)


def test_load_from_path(tmp_path):
    p = tmp_path / "s.scn"
    p.write_text("name = mine\n" + MINIMAL)
    sc = load_scenario(p)
    assert sc.name == "mine" and sc.source == str(p)


def test_name_defaults_to_file_stem(tmp_path):
    p = tmp_path / "unnamed.scn"
    p.write_text(MINIMAL)
    assert load_scenario(p).name == "unnamed"


_FRAGMENTS = st.sampled_from([
    "[chart]", "[metric]", "[metric:alt]", "[force]", "[initial]", "[integrator]", "[sampling]",
    "[checks]", "[tolerances]", "[outputs]", "[constants]", "coordinates = x, y", "coordinates = ",
    "x x = 1", "y y = x^2", "x y = 1/0", "kind = two_form", "kind = potential", "U = ln(x)",
    "q = 0, 0", "qdot = 1", "qdot = 1, 0", "h = 1e-3", "steps = 10", "steps = 1.5", "method = rk4",
    "criterio", "contact = fail", "expect = fail", "low = -1, -1", "high = 1", "n_samples = 0",
    "seed = -3", "B = 2*pi", "B = B", "= 3", "x =", "trajectory", "format_version = 1", "name = z",
    "energy_conservation = 1e-3", "(((", "x_dot x = 1",
])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.one_of(_FRAGMENTS, st.text(max_size=12)), max_size=25))
def test_validation_is_total(lines):
    try:
        parse_scenario("\n".join(lines), "fuzz.scn")
    except ScenarioError as exc:
        assert exc.errors
        assert all(isinstance(line, int) and line >= 0 for line, _ in exc.errors)
