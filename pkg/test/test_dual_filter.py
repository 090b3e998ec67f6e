"""Tests for src/core/dual_filter.py."""

import numpy as np
import numpy.testing as npt
import pytest
import torch

from src.config.constants import ActionKind, COV_JITTER, INFLATION_ON_SKIP
from src.core.dual_filter import (
    JointBelief, SigmaSet, ParamConstraints, DualFilter, initial_belief, reset_poses, sample_sigma,
    predict, reweight, observation_loglik, condition_on_params, update_pose, recompose, sym_sqrt,
    default_process_noise
)
from src.core.errors import DomainError
from src.core.networks import DTYPE
from src.core.process_models import AnalyticalProcessModel, ProcessModel, ProcessOutput
from src.core.push_simulator import ActionAffordance, object_cloud, rollout


class HoldModel(ProcessModel):
    """Quasi-static model that never moves anything."""

    model_type = 'hold'

    def forward(self, sigma, action, robot_xy, obj=None):
        L = (sigma.shape[-1] + 1) // 11
        B = sigma.shape[0]
        return ProcessOutput(sigma[:, :6 * L].clone(), torch.zeros(B, 2, dtype=DTYPE),
                             torch.ones(B, 2, dtype=DTYPE), torch.ones(B, dtype=torch.bool))


@pytest.fixture
def belief(block_object):
    return initial_belief(block_object.initial_state()[:, :3])


@pytest.fixture
def constraints(block_object):
    return ParamConstraints.from_shapes(block_object.shapes)


@pytest.fixture
def still():
    return ActionAffordance(ActionKind.PUSH, (0.2, 0.1), 0.0, 0.0)


class TestBelief:

    def test_dimension(self):
        with pytest.raises(DomainError):
            JointBelief(torch.zeros(10), torch.eye(9), 1)
        assert initial_belief(np.zeros((2, 3))).dim == 21

    def test_prior_valid(self, belief):
        assert belief.is_valid()
        assert torch.count_nonzero(belief.sigma_cross) == 0
        npt.assert_allclose(belief.mu_phi.numpy(), [1.0, 0.4, 0.0, 0.0])

    def test_reset_poses_keeps_params(self, belief):
        mu = belief.mu.clone()
        mu[6:] = torch.tensor([2.0, 0.3, 0.01, -0.01], dtype=DTYPE)
        sigma = belief.sigma.clone()
        sigma[6:, 6:] *= 0.1
        sigma[0, 6] = sigma[6, 0] = 1e-5
        reset = reset_poses(JointBelief(mu, sigma, 1), [[0.5, 0.2, 0.3]])
        npt.assert_allclose(reset.mu_phi.numpy(), mu[6:].numpy())
        npt.assert_allclose(reset.sigma_phi.numpy(), sigma[6:, 6:].numpy())
        npt.assert_allclose(reset.poses(), [[0.5, 0.2, 0.3]])
        assert torch.count_nonzero(reset.sigma_cross) == 0


class TestSampling:

    def test_zero_covariance(self, belief, constraints):
        b = JointBelief(belief.mu, torch.zeros(10, 10, dtype=DTYPE), 1)
        sigma = sample_sigma(b, constraints, seed=0, num_points=20)
        npt.assert_allclose(sigma.points.numpy(), np.tile(b.mu.numpy(), (20, 1)), atol=1e-15)
        npt.assert_allclose(sigma.weights.sum().item(), 1.0)

    def test_empirical_moments(self, belief, constraints):
        sigma = sample_sigma(belief, constraints, seed=1, num_points=10000)
        pts = sigma.points.numpy()
        std = np.sqrt(np.diag(belief.sigma.numpy()))
        assert np.all(np.abs(pts.mean(axis=0) - belief.mu.numpy()) < 0.05 * std)
        npt.assert_allclose(np.var(pts, axis=0), std ** 2, rtol=0.06)

    def test_infeasible_mass(self, belief, constraints):
        mu = belief.mu.clone()
        mu[6] = -0.5
        sigma = sample_sigma(JointBelief(mu, torch.zeros(10, 10, dtype=DTYPE), 1), constraints,
                             num_points=4)
        assert not sigma.feasible.any()

    def test_sqrt(self):
        A = torch.tensor([[4.0, 1.0], [1.0, 3.0]], dtype=DTYPE)
        R = sym_sqrt(A)
        npt.assert_allclose((R @ R).numpy(), A.numpy(), atol=1e-12)
        npt.assert_allclose(sym_sqrt(torch.diag(torch.tensor([-1.0, 4.0], dtype=DTYPE))).numpy(),
                            np.diag([0.0, 2.0]), atol=1e-12)

    def test_constraints(self, constraints):
        phi = torch.tensor([[1.0, 0.4, 0.0, 0.0], [0.0, 0.4, 0.0, 0.0], [1.0, 0.4, 0.06, 0.0]],
                           dtype=DTYPE)
        assert constraints.feasible(phi).tolist() == [True, False, False]
        assert bool(constraints.feasible(constraints.project(phi)).all())
        with pytest.raises(DomainError):
            ParamConstraints(np.array([1.0]), np.array([0.0]), np.array([False]))


class TestPredict:

    def test_identity_dynamics_adds_q(self, belief, block_object, still):
        pred = predict(belief, still, HoldModel(), seed=0, obj=block_object, num_points=20000)
        expected = np.diag(belief.sigma_psi.numpy()) + default_process_noise(1).numpy()
        npt.assert_allclose(np.diag(pred.belief.sigma_psi.numpy()), expected, rtol=0.05)
        assert np.all(np.abs(pred.belief.mu_psi.numpy() - belief.mu_psi.numpy()) < 0.05 * np.sqrt(expected))

    def test_params_copied(self, belief, block_object, constraints, still):
        sigma = sample_sigma(belief, constraints, seed=3, num_points=50)
        w = torch.rand(50, dtype=DTYPE, generator=torch.Generator().manual_seed(0))
        sigma = SigmaSet(sigma.points, w / w.sum(), sigma.feasible)
        pred = predict(belief, still, HoldModel(), seed=0, obj=block_object, sigma=sigma)
        npt.assert_allclose(pred.sigma.points[:, 6:].numpy(), sigma.points[:, 6:].numpy())
        npt.assert_allclose(pred.belief.mu_phi.numpy(), (sigma.weights @ sigma.points[:, 6:]).numpy(),
                            atol=1e-12)

    def test_infeasible_points_held(self, belief, block_object, constraints):
        push = ActionAffordance(ActionKind.PUSH, (0.35, 0.1), 0.0, 0.02)
        sigma = sample_sigma(belief, constraints, seed=0, num_points=10)
        pts = sigma.points.clone()
        pts[0, 6] = -1.0
        sigma = SigmaSet(pts, sigma.weights, constraints.feasible(pts[:, 6:]))
        pred = predict(belief, push, AnalyticalProcessModel(), Q=torch.zeros(6), obj=block_object,
                       sigma=sigma)
        npt.assert_allclose(pred.sigma.points[0].numpy(), pts[0].numpy())
        assert not bool(pred.sigma.feasible[0])

    def test_analytical_step_matches_simulator(self, block_object):
        push = ActionAffordance(ActionKind.PUSH, (0.35, 0.1), 0.0, 0.02)
        truth = block_object.initial_state().reshape(-1)
        b = JointBelief(np.concatenate([truth, block_object.param_vector()]),
                        torch.zeros(10, 10, dtype=DTYPE), 1)
        pred = predict(b, push, AnalyticalProcessModel(), Q=torch.zeros(6), obj=block_object, num_points=5)
        ref = rollout(block_object, push, steps=1).states[0].reshape(-1)
        npt.assert_allclose(pred.belief.mu_psi.numpy(), ref, atol=1e-9)

    def test_requires_constraints(self, belief, still):
        with pytest.raises(DomainError):
            predict(belief, still, HoldModel())


class TestParamUpdate:

    @staticmethod
    def _sigma(constraints, belief, n=40, seed=0):
        sigma = sample_sigma(belief, constraints, seed=seed, num_points=n)
        return SigmaSet(sigma.points, sigma.weights, torch.ones(n, dtype=torch.bool))

    def test_identical_residuals(self, belief, constraints):
        sigma = self._sigma(constraints, belief)
        upd = reweight(sigma, torch.full((40,), -3.0, dtype=DTYPE), 1)
        npt.assert_allclose(upd.weights.numpy(), 1 / 40)
        npt.assert_allclose(upd.mu_phi.numpy(), sigma.points[:, 6:].mean(dim=0).numpy(), atol=1e-14)

    def test_dominant_point(self, belief, constraints):
        sigma = self._sigma(constraints, belief, n=10)
        z = torch.zeros(4098, dtype=DTYPE)
        r = torch.ones(4098, dtype=DTYPE)
        z_points = torch.full((10, 4098), 10.0 / np.sqrt(4098), dtype=DTYPE)
        z_points[4] = 0.0
        upd = reweight(sigma, observation_loglik(z_points, z, r), 1)
        assert upd.weights[4] > 0.99

    def test_zero_shrinkage_is_weighted_covariance(self, belief, constraints):
        sigma = self._sigma(constraints, belief)
        loglik = -torch.linspace(0.0, 3.0, 40, dtype=DTYPE)
        upd = reweight(sigma, loglik, 1, a=0.0)
        w = upd.weights.numpy()
        chi = sigma.points[:, 6:].numpy()
        d = chi - w @ chi
        npt.assert_allclose(upd.sigma_phi.numpy(), (d * w[:, None]).T @ d, atol=1e-15)

    def test_shrinkage_contracts(self, belief, constraints):
        sigma = self._sigma(constraints, belief)
        loglik = torch.zeros(40, dtype=DTYPE)
        full = reweight(sigma, loglik, 1, a=0.0).sigma_phi
        shrunk = reweight(sigma, loglik, 1, a=0.1).sigma_phi
        npt.assert_allclose(shrunk.numpy(), 0.9 ** 2 * 0.99 * full.numpy(), rtol=1e-12)

    def test_constant_shift_invariance(self, belief, constraints):
        sigma = self._sigma(constraints, belief)
        loglik = -torch.rand(40, dtype=DTYPE, generator=torch.Generator().manual_seed(2)) * 50
        a = reweight(sigma, loglik, 1)
        b = reweight(sigma, loglik - 1e4, 1)
        npt.assert_allclose(a.weights.numpy(), b.weights.numpy(), rtol=1e-9)
        assert abs(float(a.weights.sum()) - 1.0) < 1e-12
        assert bool((a.weights >= 0).all())

    def test_infeasible_zero_weight(self, belief, constraints):
        sigma = self._sigma(constraints, belief, n=5)
        mask = torch.tensor([True, False, True, True, True])
        upd = reweight(SigmaSet(sigma.points, sigma.weights, mask), torch.zeros(5, dtype=DTYPE), 1)
        assert upd.weights[1] == 0

    def test_underflow_resets(self, belief, constraints):
        sigma = self._sigma(constraints, belief, n=5)
        upd = reweight(sigma, torch.full((5,), -float('inf'), dtype=DTYPE), 1)
        assert upd.degenerate
        npt.assert_allclose(upd.weights.numpy(), 0.2)

    def test_projection(self, belief, constraints):
        mu = belief.mu.clone()
        mu[6] = 5.5
        sigma = sample_sigma(JointBelief(mu, torch.zeros(10, 10, dtype=DTYPE), 1), constraints, num_points=3)
        sigma = SigmaSet(sigma.points, sigma.weights, torch.ones(3, dtype=torch.bool))
        upd = reweight(sigma, torch.zeros(3, dtype=DTYPE), 1, constraints=constraints)
        assert float(upd.mu_phi[0]) == 5.0


class TestPoseUpdate:

    def test_independent_blocks(self, belief):
        mu, cov = condition_on_params(belief, belief.mu_phi + 0.3)
        npt.assert_allclose(mu.numpy(), belief.mu_psi.numpy())
        npt.assert_allclose(cov.numpy(), belief.sigma_psi.numpy())

    def test_conditional_oracle(self, belief):
        sigma = belief.sigma.clone()
        s_xm = 0.3 * np.sqrt(float(sigma[0, 0] * sigma[6, 6]))
        sigma[0, 6] = sigma[6, 0] = s_xm
        b = JointBelief(belief.mu, sigma, 1)
        target = b.mu_phi.clone()
        target[0] += 0.4
        mu, cov = condition_on_params(b, target)
        s_mm = float(sigma[6, 6]) + COV_JITTER
        assert abs(float(mu[0]) - (float(b.mu[0]) + s_xm / s_mm * 0.4)) < 1e-9
        assert abs(float(cov[0, 0]) - (float(sigma[0, 0]) - s_xm ** 2 / s_mm)) < 1e-9
        npt.assert_allclose(mu[1:].numpy(), b.mu_psi[1:].numpy(), atol=1e-12)

    def test_linear_matches_kalman(self):
        mu = torch.tensor([0.1, -0.2, 0.05], dtype=DTYPE)
        P = torch.tensor([[0.04, 0.01, 0.0], [0.01, 0.09, 0.02], [0.0, 0.02, 0.01]], dtype=DTYPE)
        H = torch.tensor([[1.0, 0.0, 0.5], [0.0, 2.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.0, 3.0]], dtype=DTYPE)
        r = torch.tensor([0.01, 0.02, 0.05, 0.03], dtype=DTYPE)
        z = torch.tensor([0.2, -0.3, 0.0, 0.1], dtype=DTYPE)
        upd = update_pose(mu, P, z, r, lambda X: X @ H.T)
        S = H @ P @ H.T + torch.diag(r)
        K = P @ H.T @ torch.linalg.inv(S)
        npt.assert_allclose(upd.mu_psi.numpy(), (mu + K @ (z - H @ mu)).numpy(), atol=1e-10)
        npt.assert_allclose(upd.sigma_psi.numpy(), (P - K @ S @ K.T).numpy(), atol=1e-10)
        assert not upd.skipped

    def test_exact_measurement_limit(self, belief):
        z = belief.mu_psi + torch.tensor([0.005, -0.004, 0.02, 0.0, 0.0, 0.0], dtype=DTYPE)
        upd = update_pose(belief.mu_psi, belief.sigma_psi, z, torch.full((6,), 1e-12, dtype=DTYPE),
                          lambda X: X)
        npt.assert_allclose(upd.mu_psi.numpy(), z.numpy(), atol=1e-4)

    def test_singular_innovation_skips(self, belief):
        upd = update_pose(belief.mu_psi, belief.sigma_psi, torch.zeros(2, dtype=DTYPE),
                          torch.ones(2, dtype=DTYPE),
                          lambda X: torch.full((X.shape[0], 2), float('nan'), dtype=DTYPE))
        assert upd.skipped
        npt.assert_allclose(upd.sigma_psi.numpy(), INFLATION_ON_SKIP * belief.sigma_psi.numpy())


class TestRecompose:

    def test_valid_joint(self, belief):
        cross = torch.zeros(6, 4, dtype=DTYPE)
        cross[0, 0] = 0.5 * np.sqrt(float(belief.sigma[0, 0] * belief.sigma[6, 6]))
        S = recompose(belief.sigma_psi, belief.sigma_phi, cross)
        assert JointBelief(belief.mu, S, 1).is_valid()
        npt.assert_allclose(S[:6, 6:].numpy(), cross.numpy())

    def test_excess_correlation_shrunk(self, belief):
        cross = torch.zeros(6, 4, dtype=DTYPE)
        cross[0, 0] = 3.0 * np.sqrt(float(belief.sigma[0, 0] * belief.sigma[6, 6]))
        S = recompose(belief.sigma_psi, belief.sigma_phi, cross)
        assert JointBelief(belief.mu, S, 1).is_valid()
        assert float(S[0, 6]) < float(cross[0, 0])


class TestDualFilter:

    @pytest.fixture
    def setup(self, block_object):
        push = ActionAffordance(ActionKind.PUSH, (0.35, 0.11), 0.0, 0.02)
        traj = rollout(block_object, push, steps=8, seed=0)
        starts = [push.robot_position(t - traj.dt) for t in traj.times]
        flt = DualFilter(AnalyticalProcessModel(), block_object, object_cloud(block_object), num_points=24)
        return flt, traj, starts

    def test_step_outputs(self, setup):
        flt, traj, starts = setup
        res = flt.step(flt.initial_belief(), traj.action, traj.observations[0], starts[0], seed=0)
        assert res.belief.is_valid()
        assert res.r_diag.shape == (4098,)
        assert float(res.r_diag[-1]) == float(res.r_diag[-2]) == float(res.var_t)
        assert abs(float(res.weights.sum()) - 1.0) < 1e-12

    def test_deterministic(self, setup):
        flt, traj, starts = setup
        a = flt.run(flt.initial_belief(), traj.action, traj.observations[:3], starts[:3], seed=5)
        b = flt.run(flt.initial_belief(), traj.action, traj.observations[:3], starts[:3], seed=5)
        npt.assert_array_equal(a[-1].belief.mu.numpy(), b[-1].belief.mu.numpy())

    def test_parameter_variance_shrinks(self, setup):
        flt, traj, starts = setup
        prior = flt.initial_belief()
        results = flt.run(prior, traj.action, traj.observations, starts, seed=0)
        traces = [float(torch.trace(r.belief.sigma_phi)) for r in results]
        assert traces[-1] <= 1.05 * float(torch.trace(prior.sigma_phi))
        assert all(r.belief.is_valid() for r in results)
        assert np.abs(results[-1].belief.poses()[:, :2] - traj.poses[-1][:, :2]).max() < 0.02
