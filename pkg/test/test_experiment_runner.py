"""Tests for the experiment stages and runner in src/core/experiment_runner.py."""

import numpy as np
import pytest
import yaml

from src.config.constants import ActionKind, Policy, SEED_ENV_VAR
from src.config.settings import ExperimentConfig
from src.core.errors import ConfigError, DomainError
from src.core.experiment_runner import (
    WALL_OFFSET, ExperimentRunner, detect_object, infer_object, occluded_scene, resolve_kind,
    robot_starts, track_object
)
from src.core.metrics import param_ranges
from src.core.model_manager import ModelManager
from src.core.process_models import AnalyticalProcessModel
from src.core.push_simulator import ActionAffordance, rollout


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def tiny_config(out, stages, **interaction):
    settings = {'kind': 'push', 'policy': 'random', 'interactions': 2, 'steps': 6, 'candidates': 3}
    settings.update(interaction)
    return ExperimentConfig.from_dict({
        'seed': 2,
        'objects': {'counts': {'homogeneous': 1}},
        'interaction': settings,
        'filter': {'num_points': 8},
        'output': {'directory': str(out), 'plots': False, 'stages': stages},
    })


class TestHelpers:

    def test_robot_starts(self, block_object):
        action = ActionAffordance(ActionKind.PUSH, (0.35, 0.1), 0.0, 0.02, 0)
        traj = rollout(block_object, action, None, 0, 4)
        starts = robot_starts(traj)
        assert starts.shape == (4, 2)
        np.testing.assert_allclose(starts[0], [0.35, 0.1], atol=1e-12)
        np.testing.assert_allclose(starts[1] - starts[0], [0.02 * traj.dt, 0.0], atol=1e-12)

    def test_resolve_kind(self, block_object):
        assert resolve_kind('pull', block_object) is ActionKind.PULL
        assert resolve_kind('auto', block_object) is ActionKind.PUSH
        learned = ModelManager().create_model('ff', ActionKind.PULL, 1)
        assert resolve_kind('push', block_object, model=learned) is ActionKind.PULL

    def test_occluded_scene(self, block_object):
        scene = occluded_scene(block_object)
        c = block_object.center_xy()
        center = np.asarray(scene.wall.center)
        assert np.linalg.norm(center) == pytest.approx(np.linalg.norm(c) + WALL_OFFSET)
        assert np.cross(c, center) == pytest.approx(0.0, abs=1e-12)


class TestStages:

    def test_infer_object(self, block_object):
        model = AnalyticalProcessModel()
        run = infer_object(block_object, model, param_ranges([block_object]), Policy.RANDOM,
                           interactions=2, seed=1, kind='push', steps=6, candidates=3, num_points=8)
        assert len(run.rows) == 2 and len(run.traces) == 2
        assert run.record.interactions == 2
        assert np.isfinite(run.record.overall)
        assert all(t > 0 for t in run.traces)
        assert [r[1] for r in run.rows] == [1, 2]

    def test_track_object(self, block_object):
        model = AnalyticalProcessModel()
        run = track_object(block_object, model, seed=1, phi=block_object.param_vector(), kind='push',
                           steps=6, num_points=8)
        assert run.estimated.shape == (6, 1, 3)
        assert run.frozen.shape == run.estimated.shape
        assert run.with_params >= 0 and run.without_params >= 0

    def test_detect_object_tilt(self, block_object):
        model = AnalyticalProcessModel()
        run = detect_object(block_object, model, seed=1, tilt=True, steps=40, num_points=8)
        assert run.injected_step == 30
        assert len(run.trace.tactile) == 40
        assert np.all((run.trace.visual >= 0) & (run.trace.visual <= 1))


class TestExperimentRunner:

    def test_require_ckpt(self, tmp_path):
        runner = ExperimentRunner(tiny_config(tmp_path, ['infer']), require_ckpt=True)
        with pytest.raises(ConfigError):
            runner.load_model(1)

    def test_run(self, tmp_path):
        records = ExperimentRunner(tiny_config(tmp_path, ['infer', 'track'])).run()
        assert len(records) == 1
        assert not records[0].failed
        assert records[0].interactions == 2
        for name in ('metrics.csv', 'infer.csv', 'track.csv', 'manifest.yaml'):
            assert (tmp_path / name).exists()
        assert (tmp_path / 'objects').is_dir()
        infer_lines = (tmp_path / 'infer.csv').read_text().strip().splitlines()
        assert len(infer_lines) == 1 + 2
        manifest = yaml.safe_load((tmp_path / 'manifest.yaml').read_text())
        assert manifest['command'] == 'run-experiment'

    def test_failure_is_recorded(self, tmp_path, monkeypatch):
        def fail(obj, *args, **kwargs):
            raise DomainError("no contact")

        monkeypatch.setattr('src.core.experiment_runner.track_object', fail)
        records = ExperimentRunner(tiny_config(tmp_path, ['track'])).run()
        assert records[0].failed
        assert records[0].message.startswith('track:')
        assert (tmp_path / 'metrics.csv').exists()
        assert len((tmp_path / 'track.csv').read_text().strip().splitlines()) == 1
