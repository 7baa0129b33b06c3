import hashlib
import json
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .optim import default_milestones


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    if value in (None, ''):
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got '{value}'") from None


class Config:
    """Base environment configuration"""

    DEBUG = False
    TESTING = False
    DEFAULT_LOG_LEVEL = 'INFO'
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    def __init__(self):
        # Parallelism cap for per-clip work (generation, spectrograms, evaluation)
        self.THREADS = max(1, _env_int('SDAVS_THREADS', 1))
        self.LOG_LEVEL = os.environ.get('SDAVS_LOG_LEVEL', self.DEFAULT_LOG_LEVEL).upper()
        self.OUTPUT_DIR = Path(os.environ.get('SDAVS_OUTPUT_DIR', 'runs'))

    @staticmethod
    def run_config(**overrides) -> 'RunConfig':
        return RunConfig(**overrides)


class DevelopmentConfig(Config):
    """Development environment configuration"""
    DEBUG = True


class TestingConfig(Config):
    """Testing environment configuration: tiny shapes so a full forward takes milliseconds"""
    TESTING = True
    DEFAULT_LOG_LEVEL = 'WARNING'

    @staticmethod
    def run_config(**overrides) -> 'RunConfig':
        tiny = dict(height=32, width=32, frames=2, channels=[4, 8, 8, 8], audio_channels=8,
                    stem_channels=4, reduction=1, train_clips=4, eval_clips=2, epochs=1, batch_size=2)
        tiny.update(overrides)
        return RunConfig(**tiny)


class ProductionConfig(Config):
    """Long experiment runs: quieter logs"""
    DEFAULT_LOG_LEVEL = 'WARNING'


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}


def get_config() -> Config:
    """Get configuration based on environment"""
    env = os.environ.get('SDAVS_ENV', 'development')
    if env not in config:
        raise ConfigError(f"SDAVS_ENV must be one of {sorted(config)}, got '{env}'")
    return config[env]()


class RunConfig(BaseModel):
    """Every knob of one experiment; its hash is stamped into checkpoints and reports"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    # module toggles
    snrp: Literal['pre', 'off', 'post'] = 'pre'
    cfs: bool = True
    sfs: bool = True
    damf: bool = True
    stc: bool = True
    rm_mode: Literal['straight', 'add', 'mul'] = 'mul'
    branch: Literal['both', 'a2v', 'v2a'] = 'both'
    query_pairing: Literal['printed', 'textual'] = 'printed'

    # sizes
    height: int = 64
    width: int = 64
    frames: int = 4
    channels: Tuple[int, int, int, int] = (16, 32, 64, 128)
    audio_channels: int = 64
    stem_channels: int = 8
    reduction: int = 4

    # data
    train_clips: int = 200
    eval_clips: int = 50
    supervision: Literal['all', 'first_frame'] = 'all'

    # optimisation
    epochs: int = 60
    batch_size: int = 4
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-2
    milestones: Optional[List[int]] = None
    gamma: float = 0.1

    seed: int = 0

    # evaluation noise condition
    noise: Literal['clean', 'brownian', 'chirp_train'] = 'clean'
    noise_scale: float = 0.1

    @field_validator('noise', mode='before')
    @classmethod
    def _none_means_clean(cls, value):
        return 'clean' if value == 'none' else value

    @field_validator('height', 'width')
    @classmethod
    def _divisible_by_32(cls, value):
        if value < 32 or value % 32:
            raise ValueError(f"frame extents must be positive multiples of 32, got {value}")
        return value

    @field_validator('frames', 'audio_channels', 'stem_channels', 'reduction', 'epochs', 'batch_size',
                     'train_clips', 'eval_clips')
    @classmethod
    def _positive(cls, value):
        if value < 1:
            raise ValueError(f"must be ≥ 1, got {value}")
        return value

    @field_validator('channels')
    @classmethod
    def _positive_ladder(cls, value):
        if any(c < 1 for c in value):
            raise ValueError(f"channel ladder entries must be ≥ 1, got {value}")
        return value

    @model_validator(mode='after')
    def _check_rates(self):
        if self.lr <= 0 or self.noise_scale < 0 or not 0 < self.gamma <= 1:
            raise ValueError("lr must be > 0, noise_scale ≥ 0 and gamma in (0, 1]")
        return self

    # ------------------------------------------------------------ helpers
    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode('utf-8')).hexdigest()[:16]

    def to_json(self, path: Union[str, Path, None] = None) -> str:
        text = json.dumps(self.model_dump(mode='json'), sort_keys=True, indent=2)
        if path is not None:
            Path(path).write_text(text + '\n', encoding='utf-8')
        return text

    @classmethod
    def from_dict(cls, values: dict) -> 'RunConfig':
        try:
            return cls.model_validate(values)
        except ValidationError as exc:
            raise ConfigError(f"invalid run configuration: {exc}") from exc

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'RunConfig':
        try:
            values = json.loads(Path(path).read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(values)

    def with_overrides(self, **overrides) -> 'RunConfig':
        return self.from_dict({**self.model_dump(mode='json'), **overrides})

    def lr_milestones(self) -> List[int]:
        return list(self.milestones) if self.milestones is not None else default_milestones(self.epochs)
