import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from riskctmc.errors import DomainError, StructuralError
from riskctmc.markov_core import (
    CostSpec,
    GeneratorSchedule,
    MarkovModel,
    PathSample,
    SignedKernel,
    StateSpace,
    StochasticKernel,
    generator_fd_errors,
    hausdorff_distance,
    kernel_distance,
    kernel_norm,
    max_step,
    point_set_distance,
    random_model,
    simulate_costs,
    simulate_path,
    tangent_cone_membership,
    transition_matrix,
    validate_generator,
)

from conftest import EXPECTATION_VALUE, random_generator


class TestStateSpace:
    def test_index_by_label_and_int(self):
        states = StateSpace(("up", "down"))
        assert states.n == 2
        assert states.index("down") == 1
        assert states.index(0) == 0

    def test_unknown_label(self):
        with pytest.raises(DomainError):
            StateSpace(("a",)).index("b")

    def test_duplicates_rejected(self):
        with pytest.raises(StructuralError):
            StateSpace(("a", "a"))


class TestGeneratorSchedule:
    def test_piece_lookup_is_right_continuous(self):
        A = np.array([[-1.0, 1.0], [0.0, 0.0]])
        B = np.array([[-2.0, 2.0], [3.0, -3.0]])
        schedule = GeneratorSchedule.from_pieces([(0.5, A), (1.0, B)])
        assert schedule.horizon == 1.0
        assert_allclose(schedule.generator_at(0.49), A)
        assert_allclose(schedule.generator_at(0.5), B)
        assert_allclose(schedule.generator_at(1.0), B)
        assert schedule.max_off_diagonal_rate() == 3.0

    def test_segments_split_at_breakpoints(self):
        schedule = GeneratorSchedule.from_pieces([(0.5, np.zeros((2, 2))), (1.0, np.zeros((2, 2)))])
        segments = schedule.segments(0.2, 0.9)
        assert [(a, b) for a, b, _ in segments] == [(0.2, 0.5), (0.5, 0.9)]

    @pytest.mark.parametrize("breaks", [[0.0, 0.5, 0.5], [0.1, 1.0], [0.0]])
    def test_bad_breakpoints(self, breaks):
        pieces = tuple(np.zeros((2, 2)) for _ in range(max(len(breaks) - 1, 1)))
        with pytest.raises(StructuralError):
            GeneratorSchedule(np.array(breaks), pieces)

    def test_piece_shapes_must_agree(self):
        with pytest.raises(StructuralError):
            GeneratorSchedule.from_pieces([(0.5, np.zeros((2, 2))), (1.0, np.zeros((3, 3)))])


class TestValidateGenerator:
    def test_valid(self, rng):
        schedule = GeneratorSchedule.constant(random_generator(rng, 4), 1.0)
        assert validate_generator(schedule, 4) == []

    def test_reports_every_rule(self):
        G = np.array([[-1.0, 1.0, 0.0], [-0.5, 0.0, 0.5], [1.0, 1.0, -1.0]])
        violations = validate_generator(GeneratorSchedule.constant(G, 1.0))
        rules = {(v.row, v.rule) for v in violations}
        assert (1, "off-diagonal rate must be >= 0") in rules
        assert (2, "row must sum to 0") in rules
        assert all(v.piece == 0 for v in violations)

    def test_non_finite_entry(self):
        G = np.array([[-1.0, np.inf], [0.0, 0.0]])
        violations = validate_generator(GeneratorSchedule.constant(G, 1.0))
        assert violations[0].rule == "entry must be finite"

    def test_dimension_mismatch_raises(self):
        with pytest.raises(StructuralError):
            validate_generator(GeneratorSchedule.constant(np.zeros((2, 2)), 1.0), n_states=3)

    def test_tiny_row_sum_error_is_tolerated(self):
        G = np.array([[-1.0, 1.0 + 1e-15], [2.0, -2.0]])
        assert validate_generator(GeneratorSchedule.constant(G, 1.0)) == []


class TestTransitionMatrix:
    def test_two_state_closed_form(self, two_state):
        Q = transition_matrix(two_state.schedule, 0.0, 1.0).matrix
        stay = (1.0 + math.exp(-2.0)) / 2.0
        assert_allclose(Q, [[stay, 1 - stay], [1 - stay, stay]], atol=1e-14)
        assert_allclose(Q @ two_state.cost.terminal, [EXPECTATION_VALUE, 1 - EXPECTATION_VALUE], atol=1e-14)

    def test_identity_at_zero_length(self, three_state):
        assert_allclose(transition_matrix(three_state.schedule, 0.4, 0.4).matrix, np.eye(3))

    def test_chapman_kolmogorov(self, two_piece):
        s = two_piece.schedule
        left = transition_matrix(s, 0.0, 0.3).matrix @ transition_matrix(s, 0.3, 0.8).matrix
        assert_allclose(left, transition_matrix(s, 0.0, 0.8).matrix, atol=1e-12)

    def test_result_is_stochastic(self, two_piece):
        Q = transition_matrix(two_piece.schedule, 0.1, 0.9)
        assert isinstance(Q, StochasticKernel)
        assert_allclose(Q.matrix.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("t,r", [(0.6, 0.5), (-0.1, 0.5), (0.0, 1.5)])
    def test_domain(self, two_state, t, r):
        with pytest.raises(DomainError):
            transition_matrix(two_state.schedule, t, r)

    def test_generator_is_the_derivative(self, two_piece):
        errors = generator_fd_errors(two_piece.schedule, 0.1, [1e-2, 1e-3, 1e-4])
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 1e-3


class TestSignedKernels:
    def test_norm_is_max_absolute_row_sum(self):
        assert kernel_norm([[1.0, -2.0], [0.5, 0.5]]) == 3.0
        assert kernel_norm(SignedKernel(np.zeros((2, 2)))) == 0.0

    def test_norm_of_a_single_row(self):
        assert kernel_norm([-1.0, 0.25, 0.75]) == 2.0

    def test_norm_triangle_inequality_and_homogeneity(self, rng):
        for _ in range(500):
            n = int(rng.integers(1, 6))
            K, M = rng.normal(0.0, 1.0, size=(2, n, n))
            gamma = rng.normal(0.0, 3.0)
            assert kernel_norm(K + M) <= kernel_norm(K) + kernel_norm(M) + 1e-12
            assert kernel_norm(gamma * K) == pytest.approx(abs(gamma) * kernel_norm(K), rel=1e-12)

    def test_distances(self):
        K = np.array([[-1.0, 1.0], [0.0, 0.0]])
        M = np.array([[-1.0, 0.5], [0.0, 0.0]])
        assert kernel_distance(K, M) == 0.5
        assert point_set_distance(K, [M, K]) == 0.0
        assert point_set_distance(K, []) == math.inf

    def test_hausdorff_is_symmetric_max(self):
        A = [np.array([0.0, 0.0])]
        B = [np.array([0.0, 0.0]), np.array([1.0, -1.0])]
        assert hausdorff_distance(A, B) == 2.0
        assert hausdorff_distance(B, A) == 2.0
        assert hausdorff_distance(A, A) == 0.0

    def test_kernel_arithmetic(self):
        K = SignedKernel([[-1.0, 1.0], [2.0, -2.0]])
        assert_allclose((SignedKernel.identity(2) + K.scaled(0.5)).matrix, [[0.5, 0.5], [1.0, 0.0]])
        assert_allclose((K - K).matrix, 0.0)

    def test_non_square_rejected(self):
        with pytest.raises(StructuralError):
            SignedKernel(np.zeros((2, 3)))


class TestTangentCone:
    def test_generator_is_member(self, rng):
        assert tangent_cone_membership(random_generator(rng, 3))

    @pytest.mark.parametrize(
        "K,condition",
        [
            ([[1.0, -1.0], [0.0, 0.0]], "(i)"),
            ([[0.0, -1.0], [0.0, 0.0]], "(ii)"),
            ([[-1.0, 0.5], [0.0, 0.0]], "(iii)"),
        ],
    )
    def test_violations_name_the_condition(self, K, condition):
        verdict = tangent_cone_membership(K)
        assert not verdict
        assert verdict.condition.startswith(condition)
        assert verdict.row == 0

    def test_max_step(self):
        assert max_step([[-2.0, 2.0], [1.0, -1.0]]) == 0.5
        assert max_step(np.zeros((2, 2))) == math.inf

    def test_max_step_keeps_identity_plus_step_stochastic(self, rng):
        K = random_generator(rng, 4)
        tau = max_step(K)
        StochasticKernel(np.eye(4) + tau * K)

    def test_max_step_outside_cone(self):
        with pytest.raises(DomainError):
            max_step([[1.0, -1.0], [0.0, 0.0]])


class TestCostsAndModel:
    @pytest.fixture
    def cost(self):
        return CostSpec(np.array([0.0, 1.0]), np.array([[0.0, 0.0], [2.0, 4.0]]), np.array([1.0, -0.5]))

    def test_rate_interpolates(self, cost):
        assert_allclose(cost.rate(0.5), [1.0, 2.0])

    def test_integral_is_exact(self, cost):
        assert cost.integrate(0, 0.0, 1.0) == pytest.approx(1.0)
        assert cost.integrate(1, 0.0, 0.5) == pytest.approx(0.5)
        assert cost.integrate(1, 0.7, 0.7) == 0.0

    def test_norms(self, cost):
        assert cost.sup_norm() == 4.0
        assert cost.spread() == 2.0

    def test_value_bound(self, cost):
        model = MarkovModel(StateSpace(("a", "b")), GeneratorSchedule.constant(np.zeros((2, 2)), 1.0), cost)
        assert model.value_bound() == 5.0

    def test_cost_must_cover_horizon(self):
        cost = CostSpec(np.array([0.0, 0.5]), np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(StructuralError):
            MarkovModel(StateSpace(("a", "b")), GeneratorSchedule.constant(np.zeros((2, 2)), 1.0), cost)

    def test_state_count_mismatch(self):
        with pytest.raises(StructuralError):
            MarkovModel(
                StateSpace(("a", "b", "c")),
                GeneratorSchedule.constant(np.zeros((2, 2)), 1.0),
                CostSpec.constant([0.0, 0.0], [0.0, 0.0]),
            )

    def test_random_model_is_seeded_and_valid(self):
        first, second = random_model(4, seed=3, pieces=2), random_model(4, seed=3, pieces=2)
        assert_allclose(first.schedule.pieces[1], second.schedule.pieces[1])
        assert validate_generator(first.schedule, 4) == []
        assert first.states.labels == ("s0", "s1", "s2", "s3")


class TestSimulation:
    def test_frozen_chain_has_no_jumps(self):
        cost = CostSpec(np.array([0.0, 1.0]), np.array([[1.0, 0.0], [3.0, 0.0]]), np.zeros(2))
        schedule = GeneratorSchedule.constant(np.zeros((2, 2)), 1.0)
        path = simulate_path(schedule, cost, 0.0, 1.0, 0, seed=1)
        assert path.n_jumps == 0
        assert path.final_state == 0
        assert path.running_cost == pytest.approx(2.0)

    def test_path_structure(self, two_piece):
        path = simulate_path(two_piece.schedule, two_piece.cost, 0.2, 1.0, 1, seed=4)
        assert path.states[0] == 1
        assert len(path.states) == path.n_jumps + 1
        assert all(a != b for a, b in zip(path.states[:-1], path.states[1:]))
        assert all(0.2 <= t <= 1.0 for t in path.jump_times)

    def test_same_seed_same_path(self, three_state):
        first = simulate_path(three_state.schedule, three_state.cost, 0.0, 1.0, 0, seed=9)
        second = simulate_path(three_state.schedule, three_state.cost, 0.0, 1.0, 0, seed=9)
        assert first == second

    def test_path_sample_validation(self):
        with pytest.raises(StructuralError):
            PathSample(0.0, 1.0, 0, jump_times=(0.5, 0.4), states=(0, 1, 0))

    def test_bad_initial_state(self, two_state):
        with pytest.raises(DomainError):
            simulate_path(two_state.schedule, two_state.cost, 0.0, 1.0, 5)

    def test_monte_carlo_matches_kolmogorov(self, two_state):
        summary = simulate_costs(two_state, 0, samples=20000, seed=2024)
        assert summary.samples == 20000
        assert abs(summary.mean - EXPECTATION_VALUE) < 4 * summary.stderr

    def test_sample_count_must_be_positive(self, two_state):
        with pytest.raises(DomainError):
            simulate_costs(two_state, 0, samples=0)
