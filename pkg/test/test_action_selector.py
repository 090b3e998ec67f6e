"""Tests for src/core/action_selector.py."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.stats import multivariate_normal

from src.config.constants import ActionKind, Policy, PUSH_SPEED
from src.core.action_selector import (
    select_action_type, sample_affordances, gaussian_kl, n_step_ig, select_action, score_candidates,
    choose_affordance, AffordanceCandidate
)
from src.core.dual_filter import initial_belief
from src.core.errors import DomainError, GraspError
from src.core.process_models import AnalyticalProcessModel
from src.core.push_simulator import ActionAffordance
from src.core.superquadric import SuperquadricParams

from conftest import make_square


def _circle(r=0.05, x0=0.4, y0=0.1):
    return SuperquadricParams(1.0, 1.0, r, r, 0.03, x0=x0, y0=y0, z0=0.03)


class TestActionType:

    def test_single_link_pushes(self):
        assert select_action_type([make_square(0.4, 0.1)], (0.4, 0.1, 0.0)) is ActionKind.PUSH

    def test_near_multi_link_pulls(self):
        fits = [make_square(0.4, 0.1), make_square(0.4, 0.22)]
        assert select_action_type(fits, (0.4, 0.1, 0.0)) is ActionKind.PULL

    def test_boundary_pushes(self):
        fits = [make_square(0.4, 0.3), make_square(0.4, 0.42)]
        assert select_action_type(fits, (0.4, 0.3, 0.0)) is ActionKind.PUSH

    def test_no_fits(self):
        with pytest.raises(DomainError):
            select_action_type([], (0.0, 0.0, 0.0))


class TestSampling:

    def test_circle_direction_radial(self):
        sq = _circle()
        (a,) = sample_affordances([sq], ActionKind.PUSH, M=1, seed=4)
        inward = np.arctan2(sq.y0 - a.point[1], sq.x0 - a.point[0])
        diff = np.angle(np.exp(1j * (a.direction - inward)))
        assert abs(np.rad2deg(diff)) <= 5.0 + 1e-9
        npt.assert_allclose(np.hypot(a.point[0] - sq.x0, a.point[1] - sq.y0), 0.05, atol=1e-3)

    def test_fixed_speed(self):
        for a in sample_affordances([_circle()], ActionKind.PUSH, M=20, seed=0):
            assert a.speed == PUSH_SPEED
            assert a.kind is ActionKind.PUSH

    def test_square_edges_covered(self):
        counts = []
        for seed in range(10):
            pts = np.array([a.point for a in sample_affordances([make_square(0.0, 0.0)], ActionKind.PUSH,
                                                                  M=50, seed=seed)])
            edge = np.where(np.abs(pts[:, 0]) > np.abs(pts[:, 1]), np.sign(pts[:, 0]) + 1,
                            np.sign(pts[:, 1]) + 5)
            counts.append([int(np.sum(edge == e)) for e in (0, 2, 4, 6)])
        assert np.all(np.median(counts, axis=0) >= 5)

    def test_largest_link(self):
        fits = [make_square(0.4, 0.0), SuperquadricParams(0.2, 0.2, 0.08, 0.08, 0.03, x0=0.4, y0=0.2, z0=0.03)]
        assert all(a.link == 1 for a in sample_affordances(fits, ActionKind.PUSH, M=5))

    def test_uniform_ring(self):
        ring = sample_affordances([_circle()], ActionKind.PUSH, M=8, uniform=True)
        angles = np.sort([np.arctan2(a.point[1] - 0.1, a.point[0] - 0.4) % (2 * np.pi) for a in ring])
        npt.assert_allclose(np.diff(angles), 2 * np.pi / 8, atol=0.02)

    def test_pull_outward(self):
        sq = SuperquadricParams(0.2, 0.2, 0.03, 0.03, 0.03, x0=0.4, y0=0.1, z0=0.03)
        for a in sample_affordances([sq], ActionKind.PULL, M=5, seed=1):
            outward = np.arctan2(a.point[1] - sq.y0, a.point[0] - sq.x0)
            assert np.cos(a.direction - outward) > 0

    def test_ungraspable(self):
        with pytest.raises(GraspError):
            sample_affordances([make_square(0.4, 0.1)], ActionKind.PULL, M=3)

    def test_needs_candidates(self):
        with pytest.raises(DomainError):
            sample_affordances([_circle()], ActionKind.PUSH, M=0)


class TestGaussianKL:

    def test_self(self):
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert gaussian_kl([1.0, 2.0], cov, [1.0, 2.0], cov)[0] == pytest.approx(0.0, abs=1e-12)

    def test_shifted_unit(self):
        assert gaussian_kl([1.0], [[1.0]], [0.0], [[1.0]])[0] == pytest.approx(0.5)

    def test_monte_carlo(self):
        rng = np.random.default_rng(7)
        A, B = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
        cov1, cov0 = A @ A.T + np.eye(5), B @ B.T + np.eye(5)
        mu1, mu0 = rng.normal(size=5), rng.normal(size=5)
        x = rng.multivariate_normal(mu1, cov1, size=1_000_000)
        mc = np.mean(multivariate_normal(mu1, cov1).logpdf(x) - multivariate_normal(mu0, cov0).logpdf(x))
        kl, singular = gaussian_kl(mu1, cov1, mu0, cov0)
        assert not singular
        assert kl == pytest.approx(mc, rel=0.02)

    def test_singular_reference(self):
        kl, singular = gaussian_kl([0.0, 0.0], np.eye(2), [0.0, 0.0], np.zeros((2, 2)))
        assert singular and kl == 0.0


class TestSelection:

    @pytest.fixture
    def belief(self, block_object):
        return initial_belief(block_object.initial_state()[:, :3])

    @pytest.fixture
    def toward(self):
        return ActionAffordance(ActionKind.PUSH, (0.35, 0.1), 0.0, PUSH_SPEED)

    @pytest.fixture
    def away(self):
        return ActionAffordance(ActionKind.PUSH, (0.35, 0.1), np.pi, PUSH_SPEED)

    def test_zero_motion_scores_zero(self, belief, block_object, away):
        score, _ = n_step_ig(belief, away, AnalyticalProcessModel(), N=3, obj=block_object, num_points=30)
        assert score == pytest.approx(0.0, abs=1e-9)

    def test_moving_candidate_wins(self, belief, block_object, toward, away):
        chosen, scored = select_action(belief, [block_object.links[0].shape], ActionKind.PUSH,
                                       AnalyticalProcessModel(), obj=block_object, N=3, num_points=30,
                                       candidates=[away, toward])
        assert chosen == toward
        assert scored[1].ig_score > scored[0].ig_score >= 0.0

    def test_single_candidate(self, belief, block_object, away):
        chosen, _ = select_action(belief, [], ActionKind.PUSH, AnalyticalProcessModel(), obj=block_object,
                                  N=2, num_points=10, candidates=[away])
        assert chosen == away

    def test_order_invariance(self, belief, block_object):
        candidates = sample_affordances([block_object.links[0].shape], ActionKind.PUSH, M=4, seed=2)
        model = AnalyticalProcessModel()
        a, _ = select_action(belief, [], ActionKind.PUSH, model, obj=block_object, N=3, num_points=30,
                             candidates=candidates)
        b, _ = select_action(belief, [], ActionKind.PUSH, model, obj=block_object, N=3, num_points=30,
                             candidates=candidates[::-1])
        assert a == b

    def test_scores_non_negative(self, belief, block_object):
        candidates = sample_affordances([block_object.links[0].shape], ActionKind.PUSH, M=3, seed=0)
        for c in score_candidates(belief, candidates, AnalyticalProcessModel(), obj=block_object, N=2,
                                  num_points=20):
            assert c.ig_score >= -1e-9

    def test_lookahead(self, belief, block_object, toward):
        with pytest.raises(DomainError):
            n_step_ig(belief, toward, AnalyticalProcessModel(), N=0, obj=block_object)

    def test_non_finite_score(self, toward):
        with pytest.raises(DomainError):
            AffordanceCandidate(toward, float('nan'))


class TestPolicies:

    def test_uniform_walks_ring(self, block_object):
        fits = [block_object.links[0].shape]
        belief = initial_belief(block_object.initial_state()[:, :3])
        ring = sample_affordances(fits, ActionKind.PUSH, M=4, seed=0, uniform=True)
        picks = [choose_affordance(Policy.UNIFORM, belief, fits, ActionKind.PUSH, AnalyticalProcessModel(),
                                   seed=0, round_index=i, obj=block_object, M=4) for i in range(5)]
        assert picks[:4] == ring and picks[4] == ring[0]

    def test_random_draws_candidate(self, block_object):
        fits = [block_object.links[0].shape]
        belief = initial_belief(block_object.initial_state()[:, :3])
        pick = choose_affordance(Policy.RANDOM, belief, fits, ActionKind.PUSH, AnalyticalProcessModel(),
                                 seed=3, obj=block_object, M=6)
        assert pick in sample_affordances(fits, ActionKind.PUSH, M=6, seed=3)
