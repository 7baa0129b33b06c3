"""
The full SDAVS network and its checkpoint (ModelState) round-trip.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .audio import LOG_OFFSET
from .checkpoint import FORMAT_VERSION, read_container, write_container
from .config import RunConfig
from .decoder import Decoder, MaskHead, StageOutput
from .encoders import AudioEncoder, VisualEncoder
from .errors import CheckpointError, ConfigError
from .nn import Module
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

# log-mel values are shifted so silence maps to 0 and scaled to roughly unit range
AUDIO_SHIFT = float(np.log(LOG_OFFSET))
AUDIO_SCALE = 4.0


def init_rng(seed: int) -> np.random.Generator:
    """Generator for parameter initialisation, independent of the data streams"""
    return np.random.default_rng([seed, 1])


@dataclass
class ModelOutput:
    logits: Tensor              # B×1×T×H×W
    stages: List[StageOutput]
    fus_out: Tensor


class SDAVSModel(Module):
    def __init__(self, config: RunConfig):
        self.config = config
        rng = init_rng(config.seed)
        channels = list(config.channels)
        self.visual_encoder = VisualEncoder(channels, rng, stem_channels=config.stem_channels)
        self.audio_encoder = AudioEncoder(config.audio_channels, rng)
        self.decoder = Decoder(
            channels, config.audio_channels, rng,
            snrp_mode=config.snrp, reduction=config.reduction,
            use_cfs=config.cfs, use_sfs=config.sfs,
            enabled=config.damf, use_stc=config.stc, rm_mode=config.rm_mode,
            branch=config.branch, query_pairing=config.query_pairing,
        )
        self.head = MaskHead(channels[0], rng)
        self.assign_names()

    @staticmethod
    def normalize_spectrograms(spectrograms: np.ndarray) -> np.ndarray:
        return (np.asarray(spectrograms, dtype=np.float32) - AUDIO_SHIFT) / AUDIO_SCALE

    def forward(self, frames, spectrograms) -> ModelOutput:
        """frames B×3×T×H×W in [0, 1]; spectrograms B×T×96×64 raw log-mel"""
        frames = as_tensor(frames)
        spec = spectrograms.data if isinstance(spectrograms, Tensor) else spectrograms
        audio = self.audio_encoder(Tensor(self.normalize_spectrograms(spec)))
        pyramid = self.visual_encoder(frames)
        stages = self.decoder(audio, pyramid)
        fus_out = self.decoder.aggregate_outputs(stages)
        logits = self.head(fus_out, frames.shape[-2], frames.shape[-1])
        return ModelOutput(logits, stages, fus_out)

    def component_parameters(self) -> Dict[str, int]:
        """Parameter counts per component, in forward order"""
        counts = OrderedDict()
        counts['visual_encoder'] = self.visual_encoder.num_parameters()
        counts['audio_encoder'] = self.audio_encoder.num_parameters()
        for j, stage in enumerate(self.decoder.stages, start=1):
            counts[f'stage{j}.snrp'] = stage.snrp.num_parameters()
            counts[f'stage{j}.damf'] = stage.damf.num_parameters()
            counts[f'stage{j}.decoder'] = stage.num_parameters() - counts[f'stage{j}.snrp'] - counts[f'stage{j}.damf']
        counts['aggregate'] = sum(conv.num_parameters() for conv in self.decoder.aggregate)
        counts['head'] = self.head.num_parameters()
        counts['total'] = self.num_parameters()
        return counts


@dataclass
class ModelState:
    config: RunConfig
    tensors: Dict[str, np.ndarray]

    @classmethod
    def from_model(cls, model: SDAVSModel) -> 'ModelState':
        return cls(model.config, model.state_dict())

    def build_model(self) -> SDAVSModel:
        model = SDAVSModel(self.config)
        model.load_state_dict(self.tensors)
        return model


def save_checkpoint(state: ModelState, path: Union[str, Path]) -> Path:
    metadata = {
        'config': state.config.canonical_json(),
        'config_hash': state.config.config_hash(),
        'format_version': FORMAT_VERSION,
    }
    return write_container(path, state.tensors, metadata)


def load_checkpoint(path: Union[str, Path], expected: Optional[RunConfig] = None,
                    force: bool = False) -> ModelState:
    """Read a checkpoint; a config-hash mismatch with ``expected`` is an error unless ``force``"""
    tensors, metadata = read_container(path)
    if 'config' not in metadata:
        raise CheckpointError(f"{path}: no run configuration in the checkpoint metadata")
    try:
        config = RunConfig.model_validate_json(metadata['config'])
    except ValueError as exc:
        raise ConfigError(f"{path}: stored configuration is invalid: {exc}") from exc

    stored_hash = metadata.get('config_hash', config.config_hash())
    if expected is not None and expected.config_hash() != stored_hash:
        message = f"{path}: config hash {stored_hash} does not match the requested {expected.config_hash()}"
        if not force:
            raise CheckpointError(message)
        logger.warning(f"⚠️ {message} (continuing because of --force)")
    return ModelState(config, tensors)
