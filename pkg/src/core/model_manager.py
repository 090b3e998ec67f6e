"""Model management for process models and their checkpoints."""

import logging
import os
from typing import Optional

import torch

from ..config.constants import ActionKind
from ..utils.file_operations import FileManager
from .errors import ConfigError
from .process_models import (
    ProcessModel, AnalyticalProcessModel, GraphProcessModel, FeedForwardProcessModel
)

logger = logging.getLogger(__name__)

MODEL_TYPES = ('graph', 'ff', 'analytical')


class ModelManager:
    """Creates process models and saves/loads their parameters."""

    def __init__(self):
        self.model: Optional[ProcessModel] = None
        self.model_path = ""
        self.model_type = None

    @staticmethod
    def build(model_type: str, interaction: ActionKind = ActionKind.PUSH,
              num_links: int = 1) -> ProcessModel:
        """
        Instantiate a fresh process model.

        Args:
            model_type: 'graph', 'ff' or 'analytical'
            interaction: Interaction the model is trained for
            num_links: Link count (only the feed-forward model depends on it)

        Returns:
            ProcessModel
        """
        if model_type == 'graph':
            return GraphProcessModel(interaction)
        if model_type == 'ff':
            return FeedForwardProcessModel(num_links, interaction)
        if model_type == 'analytical':
            return AnalyticalProcessModel(interaction)
        raise ConfigError(f"Unknown model type '{model_type}', expected one of {MODEL_TYPES}")

    def create_model(self, model_type: str, interaction: ActionKind = ActionKind.PUSH,
                     num_links: int = 1) -> ProcessModel:
        self.model = self.build(model_type, interaction, num_links)
        self.model_type = model_type
        self.model_path = ""
        return self.model

    def save_model(self, path: str) -> None:
        """Write the current model as a flat binary checkpoint with a text manifest."""
        if self.model is None:
            raise ConfigError("No model to save")
        arrays = {name: t.detach().cpu().numpy() for name, t in self.model.state_dict().items()}
        meta = {k: str(v) for k, v in self.model.config().items()}
        FileManager.save_checkpoint(path, arrays, meta)
        self.model_path = path
        logger.info(f"Saved {self.model_type} model ({sum(a.size for a in arrays.values())} values) to {path}")

    def load_model(self, path: str) -> bool:
        """
        Load a checkpoint written by save_model.

        Returns:
            True on success; failures are logged
        """
        try:
            self.model = self.read(path)
        except ConfigError as e:
            logger.error(f"Error loading model: {e}")
            return False
        self.model_type = self.model.model_type
        self.model_path = path
        return True

    @classmethod
    def read(cls, path: str) -> ProcessModel:
        """Build the model described by a checkpoint manifest and fill in its parameters."""
        arrays, meta = FileManager.load_checkpoint(path)
        model = cls.build(meta.get('model', 'graph'), ActionKind(meta.get('interaction', 'push')),
                          int(meta.get('links', 1)))
        state = model.state_dict()
        missing = set(state) - set(arrays)
        if missing:
            raise ConfigError(f"Checkpoint {path} lacks parameters {sorted(missing)}")
        loaded = {}
        for name, ref in state.items():
            if arrays[name].size != ref.numel():
                raise ConfigError(f"Checkpoint {path}: '{name}' has {arrays[name].size} values, "
                                  f"expected {ref.numel()}")
            loaded[name] = torch.as_tensor(arrays[name].reshape(tuple(ref.shape)), dtype=ref.dtype)
        model.load_state_dict(loaded)
        return model

    def is_loaded(self) -> bool:
        return self.model is not None

    def get_model_name(self) -> str:
        if self.model_path:
            return os.path.basename(self.model_path)
        return "Not loaded"
