"""
SDAVS: audio-visual segmentation with a selective noise-resilient processor
and discriminative audio-visual mutual fusion, built on a small numpy
autodiff engine and trained on deterministic synthetic scenes.
"""

from .config import RunConfig, get_config
from .errors import (AudioError, CheckpointError, ConfigError, GraphError, NonFiniteError, SDAVSError,
                     ShapeError, TargetError)
from .model import ModelState, SDAVSModel, load_checkpoint, save_checkpoint

__version__ = '1.0.0'

__all__ = [
    'RunConfig', 'get_config', 'SDAVSModel', 'ModelState', 'save_checkpoint', 'load_checkpoint',
    'SDAVSError', 'ConfigError', 'ShapeError', 'GraphError', 'NonFiniteError', 'CheckpointError',
    'AudioError', 'TargetError',
]
