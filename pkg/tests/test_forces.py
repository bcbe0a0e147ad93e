import inspect

import numpy as np
import pytest

from relforce import expr as ex
from relforce.forces import (
    ForceForm, Potential, TwoFormField, UniformStateSampler, contact_residual, covector_force,
    endomorphism, eval_force, extract_two_form, from_potential, from_two_form, is_contact,
    symbolic_contact_proof, two_form_from_matrix, zero_force,
)
from relforce.geometry import (
    Chart, MetricField, TangentState, eval_metric, euclidean_metric, minkowski_metric,
)

C2 = Chart.numbered(2)
C3 = Chart.numbered(3)
C4 = Chart.numbered(4)


def contract_loops(phi, qdot):
    """alpha_j = sum_i qdot^i Phi[i, j], summed the slow way."""
    n = len(qdot)
    return np.array([sum(qdot[i] * phi[i][j] for i in range(n)) for j in range(n)])


def endomorphism_loops(phi, g_inv):
    n = len(phi)
    return np.array([[-sum(g_inv[l][k] * phi[j][k] for k in range(n)) for j in range(n)] for l in range(n)])


def potential(chart, src):
    return Potential(chart, ex.parse_expr(src))


def random_two_form(chart, rng):
    n = chart.dimension
    table = {}
    for i in range(n):
        for j in range(i + 1, n):
            a, b = rng.uniform(-2, 2, 2)
            table[(i, j)] = f"{float(a)!r} + {float(b)!r}*sin({chart.coordinate_names[(i + j) % n]})"
    return TwoFormField.from_strings(chart, table)


class TestTwoFormField:
    def test_lower_entries_are_negated(self):
        phi = TwoFormField.from_strings(C2, {(1, 0): "3"})
        assert phi.matrix([0, 0]).tolist() == [[0.0, -3.0], [3.0, 0.0]]

    def test_rejects_diagonal(self):
        with pytest.raises(ValueError):
            TwoFormField.from_strings(C2, {(0, 0): "1"})

    def test_rejects_velocity_dependence(self):
        with pytest.raises(ValueError):
            TwoFormField.from_strings(C2, {(0, 1): "q1_dot"})

    def test_rejects_duplicate(self):
        with pytest.raises(ValueError):
            TwoFormField.from_strings(C2, {(0, 1): "1", (1, 0): "2"})

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        phi = a - a.T
        assert np.array_equal(two_form_from_matrix(C4, phi).matrix(np.zeros(4)), phi)


class TestEvalForce:
    def test_zero(self):
        assert not eval_force(zero_force(C3), TangentState([1, 2, 3], [4, 5, 6])).any()

    def test_quadratic_potential(self):
        f = from_potential(potential(C2, "q1^2/2"))
        assert eval_force(f, TangentState([3, 7], [0, 0])).tolist() == [3.0, 0.0]

    def test_uniform_magnetic(self):
        f = from_two_form(TwoFormField.from_strings(C3, {(0, 1): "1"}))
        for v in (1.0, -2.5):
            s = TangentState([0.3, 0.1, 2.0], [v, 0, 0])
            want = contract_loops(f.source.matrix(s.q), s.qdot)
            assert eval_force(f, s).tolist() == want.tolist() == [0.0, v, 0.0]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            eval_force(zero_force(C3), TangentState([0, 0], [1, 1]))

    def test_domain_error_propagates(self):
        f = covector_force(C2, ["1/q1", "0"])
        with pytest.raises(ex.DomainError):
            eval_force(f, TangentState([0, 0], [1, 1]))

    def test_native_callable(self):
        f = ForceForm(C2, None, native=lambda q, v: [v[1], -v[0]])
        assert eval_force(f, TangentState([0, 0], [2, 3])).tolist() == [3.0, -2.0]


class TestFromTwoForm:
    def test_zero_form_gives_zero_force(self):
        assert from_two_form(TwoFormField(C3, {})).kind == "zero"

    def test_planar(self):
        f = from_two_form(TwoFormField.from_strings(C2, {(0, 1): "1"}))
        a, b = 0.7, -1.3
        assert eval_force(f, TangentState([0, 0], [a, b])).tolist() == [-b, a]

    def test_position_dependent(self):
        f = from_two_form(TwoFormField.from_strings(C2, {(0, 1): "q1"}))
        assert eval_force(f, TangentState([2, 0], [0, 1])).tolist() == [-2.0, 0.0]

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        phi2 = random_two_form(C4, rng)
        f = from_two_form(phi2)
        for _ in range(50):
            s = TangentState(rng.uniform(-2, 2, 4), rng.uniform(-1, 1, 4))
            np.testing.assert_allclose(eval_force(f, s), contract_loops(phi2.matrix(s.q), s.qdot),
                                       rtol=1e-14, atol=1e-15)


class TestFromPotential:
    def test_constant(self):
        assert from_potential(potential(C2, "5")).kind == "zero"

    def test_quadratic(self):
        f = from_potential(potential(C2, "2*(q1^2 + q2^2)/2"))
        assert eval_force(f, TangentState([1, 2], [0, 0])).tolist() == [2.0, 4.0]

    def test_mixed(self):
        f = from_potential(potential(C2, "q1*q2"))
        assert eval_force(f, TangentState([3, 5], [1, 1])).tolist() == [5.0, 3.0]

    def test_rejects_velocity_dependence(self):
        with pytest.raises(ValueError):
            potential(C2, "q1_dot")


class TestContactResidual:
    def test_two_form_vanishes(self):
        rng = np.random.default_rng(2)
        f = from_two_form(random_two_form(C3, rng))
        for _ in range(1000):
            s = TangentState(rng.uniform(-3, 3, 3), rng.uniform(-1, 1, 3))
            alpha = eval_force(f, s)
            scale = np.linalg.norm(alpha) * np.linalg.norm(s.qdot)
            assert abs(contact_residual(f, s)) < 1e-13 * max(scale, 1e-300)

    def test_linear_potential(self):
        f = from_potential(potential(C2, "q1"))
        assert contact_residual(f, TangentState([0, 0], [2, 0])) == 2.0

    def test_generator(self):
        f = covector_force(C2, ["q2_dot", "-q1_dot"])
        assert contact_residual(f, TangentState([0, 0], [1.5, -4.0])) == 0.0


class TestIsContact:
    sampler = UniformStateSampler.cube(3, 1.0)

    def test_two_form(self):
        f = from_two_form(TwoFormField.from_strings(C3, {(0, 1): "1", (1, 2): "q1"}))
        r = is_contact(f, self.sampler, 1000, 1e-12)
        assert r and r.symbolic_proof is True
        assert r.max_residual <= 1e-15

    def test_potential_fails_with_certificate(self):
        f = from_potential(potential(C3, "q1"))
        r = is_contact(f, self.sampler, 1000, 1e-12)
        assert not r
        assert r.max_residual == abs(r.worst_state.qdot[0])
        assert r.symbolic_proof is None

    def test_zero(self):
        r = is_contact(zero_force(C3), self.sampler)
        assert r.verdict and r.max_residual == 0.0

    def test_signature_has_no_metric(self):
        params = inspect.signature(is_contact).parameters
        assert not any("metric" in p for p in params)

    def test_deterministic_given_seed(self):
        f = covector_force(C3, ["q1_dot", "q2_dot^3", "0"])
        a = is_contact(f, self.sampler, 200, seed=9)
        b = is_contact(f, self.sampler, 200, seed=9)
        assert a.max_residual == b.max_residual and a.worst_state == b.worst_state

    def test_nonlinear_contact_form(self):
        f = covector_force(C3, ["0", "-(1 + q1_dot^2)*q3_dot", "(1 + q1_dot^2)*q2_dot"])
        r = is_contact(f, self.sampler, 500, normalized=True)
        assert r.verdict and r.max_residual < 1e-15

    def test_sampler_avoids_zero_section(self):
        s = UniformStateSampler.cube(2, 1.0, velocity_bound=1e-7, min_speed=1e-7)
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert np.linalg.norm(s.draw(rng).qdot) >= 1e-7

    def test_requires_samples(self):
        with pytest.raises(ValueError):
            is_contact(zero_force(C3), self.sampler, 0)


def test_symbolic_proof_on_generic_expressions():
    assert symbolic_contact_proof(covector_force(C2, ["q2_dot*q1", "-q1_dot*q1"])) is True
    assert symbolic_contact_proof(covector_force(C2, ["q1_dot", "0"])) is None


class TestEndomorphism:
    def test_zero(self):
        me = eval_metric(euclidean_metric(3), np.zeros(3))
        assert not endomorphism(TwoFormField(C3, {}), me, np.zeros(3)).any()

    def test_euclidean_magnetic(self):
        me = eval_metric(euclidean_metric(3), np.zeros(3))
        e = endomorphism(TwoFormField.from_strings(C3, {(0, 1): "1"}), me, np.zeros(3))
        v = np.array([0.3, -1.1, 2.0])
        assert (e @ v).tolist() == [v[1], -v[0], 0.0]

    def test_minkowski_boost(self):
        me = eval_metric(minkowski_metric(4), np.zeros(4))
        phi2 = TwoFormField.from_strings(C4, {(0, 1): "1"})
        e = endomorphism(phi2, me, np.zeros(4), check=True)
        np.testing.assert_array_equal(e, endomorphism_loops(phi2.matrix(np.zeros(4)), me.g_inv))
        v = np.array([1.0, 1.0, 0.0, 0.0])
        assert (e @ v) @ me.g @ v == 0.0

    def test_represents_force(self):
        # g w + alpha = 0
        rng = np.random.default_rng(3)
        m = MetricField.from_strings(C3, {(0, 0): "2 + q2^2", (0, 2): "0.3", (1, 1): "1", (2, 2): "-1"})
        phi2 = random_two_form(C3, rng)
        f = from_two_form(phi2)
        for _ in range(20):
            s = TangentState(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
            me = eval_metric(m, s.q)
            w = endomorphism(phi2, me, s.q) @ s.qdot
            np.testing.assert_allclose(me.g @ w, -eval_force(f, s), atol=1e-13)

    @pytest.mark.parametrize("metric", [euclidean_metric(4), minkowski_metric(4)], ids=lambda m: m.name)
    def test_skew_adjoint(self, metric):
        rng = np.random.default_rng(4)
        phi2 = random_two_form(C4, rng)
        for _ in range(50):
            q = rng.uniform(-2, 2, 4)
            me = eval_metric(metric, q)
            e = endomorphism(phi2, me, q)
            u, v = rng.standard_normal((2, 4))
            assert abs((e @ u) @ me.g @ v + u @ me.g @ (e @ v)) < 1e-12


class TestExtraction:
    def test_reconstructs_two_form(self):
        rng = np.random.default_rng(5)
        phi2 = random_two_form(C3, rng)
        f = from_two_form(phi2)
        for _ in range(10):
            q = rng.uniform(-1, 1, 3)
            assert np.max(np.abs(extract_two_form(f, q) - phi2.matrix(q))) <= 1e-12

    def test_drag_is_symmetric(self):
        c = extract_two_form(covector_force(C3, ["q1_dot", "q2_dot", "q3_dot"]), np.zeros(3))
        assert np.array_equal(c, np.eye(3))
