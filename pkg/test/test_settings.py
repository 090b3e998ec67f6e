"""Tests for src/config/settings.py."""

import os

import pytest
import yaml

from src.config.settings import ExperimentConfig, write_manifest, MANIFEST_NAME
from src.config.constants import SEED_ENV_VAR, DEFAULT_GOAL
from src.core.errors import ConfigError


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


class TestExperimentConfig:

    def test_defaults(self):
        config = ExperimentConfig.load()
        assert config.seed == 0
        assert config.interaction.goal == tuple(DEFAULT_GOAL)
        assert config.filter.model == 'analytical'
        assert config.thresholds.validation == 0.0

    def test_yaml(self, tmp_path):
        path = tmp_path / 'exp.yaml'
        path.write_text(yaml.safe_dump({'seed': 4, 'interaction': {'kind': 'push', 'steps': 12},
                                        'objects': {'counts': {'homogeneous': 3}}}))
        config = ExperimentConfig.load(str(path))
        assert config.seed == 4
        assert config.interaction.steps == 12
        assert config.objects.counts == {'homogeneous': 3}

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'filter': {'num_point': 10}})

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'plots': {}})

    @pytest.mark.parametrize('data', [
        {'interaction': {'kind': 'grasp'}},
        {'interaction': {'policy': 'greedy'}},
        {'filter': {'model': 'lstm'}},
        {'filter': {'checkpoint': '/nonexistent/model.ckpt'}},
        {'filter': {'shrinkage': 0.0}},
        {'thresholds': {'change_window': 4}},
        {'objects': {'mass_range': [2.0, 1.0]}},
        {'objects': {'counts': {'spherical': 3}}},
        {'output': {'stages': ['shape', 'render']}},
        {'interaction': 'push'},
    ])
    def test_invalid_values(self, data):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(data)

    def test_env_seed(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, '17')
        assert ExperimentConfig.load().seed == 17

    def test_bad_env_seed(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, 'seventeen')
        with pytest.raises(ConfigError):
            ExperimentConfig.load()

    def test_hash_tracks_content(self):
        a, b = ExperimentConfig(), ExperimentConfig()
        assert a.config_hash() == b.config_hash()
        b.seed = 1
        assert a.config_hash() != b.config_hash()


class TestManifest:

    def test_contents(self, tmp_path):
        config = ExperimentConfig(seed=3)
        path = write_manifest(str(tmp_path), config, 'infer', {'objects': ['a', 'b']})
        assert os.path.basename(path) == MANIFEST_NAME
        with open(path) as f:
            data = yaml.safe_load(f)
        assert data['command'] == 'infer'
        assert data['seed'] == 3
        assert data['config_hash'] == config.config_hash()
        assert data['thresholds']['change_ratio'] == config.thresholds.change_ratio
        assert data['objects'] == ['a', 'b']
        assert ExperimentConfig.from_dict(data['config']).config_hash() == config.config_hash()
