"""
Synthetic audio-visual dataset
==============================

Stands in for a real segmentation benchmark. Every clip shows up to two
bouncing shapes over a noisy background:

* a circle that sounds as a 440 Hz tone
* a square that sounds as an 880 Hz tone

The scene decides which shapes are audible. A silent distractor is drawn but
never appears in the ground truth. The tone amplitude follows the sounding
shape's on-screen radius, so audio and video are coupled frame by frame.
Shape colours are random, so only the audio can tell which shape to segment.

Clips are fully determined by their seed; datasets draw per-clip seeds from
the run seed and split name.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from .audio import SAMPLE_RATE, Waveform, clip_spectrograms, write_wav
from .checkpoint import read_container, write_container
from .errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

TONES = {'circle': 440.0, 'square': 880.0}
SCENE_KINDS = ('circle', 'square', 'both', 'none')
SCENE_PROBS = (0.4, 0.4, 0.15, 0.05)
DISTRACTOR_PROB = 0.5
AMBIENT_STD = 0.01
BACKGROUND_LEVEL = 0.2
BACKGROUND_JITTER = 0.05
SPLITS = {'train': 0, 'eval': 1}


@dataclass
class ShapeTrack:
    """Motion of one shape, in pixel units; radius swings between r_min and r_max"""
    x0: float
    y0: float
    vx: float
    vy: float
    omega: float
    phase: float
    colour: Tuple[float, float, float]


@dataclass
class SceneSpec:
    sounding: str = 'circle'
    distractor: bool = False
    tracks: Dict[str, ShapeTrack] = field(default_factory=dict)

    def __post_init__(self):
        if self.sounding not in SCENE_KINDS:
            raise ConfigError(f"unknown scene kind '{self.sounding}', expected one of {SCENE_KINDS}")

    @property
    def sounding_shapes(self) -> List[str]:
        if self.sounding == 'both':
            return ['circle', 'square']
        if self.sounding == 'none':
            return []
        return [self.sounding]

    @property
    def visible_shapes(self) -> List[str]:
        """Drawing order: silent shapes first, sounding shapes on top"""
        sounding = self.sounding_shapes
        silent = []
        if self.distractor:
            if self.sounding == 'none':
                silent = ['circle']
            elif len(sounding) == 1:
                silent = ['square' if sounding[0] == 'circle' else 'circle']
        return silent + sounding

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> 'SceneSpec':
        tracks = {name: ShapeTrack(**{**track, 'colour': tuple(track['colour'])})
                  for name, track in values.get('tracks', {}).items()}
        return cls(values['sounding'], bool(values['distractor']), tracks)


@dataclass
class Clip:
    frames: np.ndarray          # T×3×H×W float32 in [0, 1]
    waveform: np.ndarray        # T·16000 float32
    gt_masks: np.ndarray        # T×H×W uint8
    seed: int
    scene: SceneSpec
    spectrograms: Optional[np.ndarray] = None   # T×96×64 log-mel

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def audio(self) -> Waveform:
        return Waveform(self.waveform, SAMPLE_RATE)


def _radius_bounds(height: int, width: int) -> Tuple[float, float]:
    side = min(height, width)
    return side / 8.0, side / 5.0


def sample_scene(rng: np.random.Generator, height: int = 64, width: int = 64,
                 kind: Optional[str] = None) -> SceneSpec:
    """Draw a scene kind (unless given), distractor presence and both shape tracks"""
    if kind is None:
        kind = SCENE_KINDS[rng.choice(len(SCENE_KINDS), p=SCENE_PROBS)]
    distractor = bool(rng.random() < DISTRACTOR_PROB)
    _, r_max = _radius_bounds(height, width)
    tracks = {}
    for name in ('circle', 'square'):
        speed = rng.uniform(0.05, 0.15) * min(height, width)
        angle = rng.uniform(0.0, 2 * np.pi)
        tracks[name] = ShapeTrack(
            x0=float(rng.uniform(r_max, width - r_max)),
            y0=float(rng.uniform(r_max, height - r_max)),
            vx=float(speed * np.cos(angle)),
            vy=float(speed * np.sin(angle)),
            omega=float(rng.uniform(0.8, 1.6)),
            phase=float(rng.uniform(0.0, 2 * np.pi)),
            colour=tuple(float(c) for c in rng.uniform(0.45, 1.0, size=3)),
        )
    return SceneSpec(kind, distractor, tracks)


def _bounce(start: float, velocity: float, t: int, lo: float, hi: float) -> float:
    """Position after t frames of straight motion reflected at lo and hi"""
    span = hi - lo
    if span <= 0:
        return lo
    u = (start - lo + velocity * t) % (2 * span)
    return lo + (u if u <= span else 2 * span - u)


def _track_state(track: ShapeTrack, t: int, height: int, width: int) -> Tuple[float, float, float]:
    r_min, r_max = _radius_bounds(height, width)
    radius = r_min + (r_max - r_min) * (0.5 + 0.5 * np.sin(track.omega * t + track.phase))
    cx = _bounce(track.x0, track.vx, t, r_max, width - r_max)
    cy = _bounce(track.y0, track.vy, t, r_max, height - r_max)
    return cx, cy, float(radius)


def shape_mask(name: str, cx: float, cy: float, radius: float, height: int, width: int) -> np.ndarray:
    """Pixel-centre membership of a circle (disc) or axis-aligned square of half-side ``radius``"""
    ys, xs = np.mgrid[0:height, 0:width] + 0.5
    if name == 'circle':
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2
    if name == 'square':
        return (np.abs(xs - cx) <= radius) & (np.abs(ys - cy) <= radius)
    raise ConfigError(f"unknown shape '{name}'")


def generate_clip(seed: int, scene: Optional[SceneSpec] = None, height: int = 64, width: int = 64,
                  frames: int = 4) -> Clip:
    """Deterministic clip for ``seed``; the scene is sampled from the seed when not given"""
    if scene is None:
        scene = sample_scene(np.random.default_rng([seed, 2, 0]), height, width)
    pixels = np.random.default_rng([seed, 2, 1])
    ambient = np.random.default_rng([seed, 2, 2])
    _, r_max = _radius_bounds(height, width)

    video = np.empty((frames, 3, height, width), dtype=np.float32)
    gt = np.zeros((frames, height, width), dtype=np.uint8)
    amplitudes = {name: np.zeros(frames) for name in scene.sounding_shapes}
    sounding = set(scene.sounding_shapes)

    for t in range(frames):
        canvas = BACKGROUND_LEVEL + BACKGROUND_JITTER * pixels.standard_normal((3, height, width))
        for name in scene.visible_shapes:
            cx, cy, radius = _track_state(scene.tracks[name], t, height, width)
            mask = shape_mask(name, cx, cy, radius, height, width)
            canvas[:, mask] = np.asarray(scene.tracks[name].colour)[:, None]
            if name in sounding:
                gt[t][mask] = 1
                amplitudes[name][t] = 0.3 + 0.7 * radius / r_max
        video[t] = np.clip(canvas, 0.0, 1.0)

    n = frames * SAMPLE_RATE
    time = np.arange(n) / SAMPLE_RATE
    audio = AMBIENT_STD * ambient.standard_normal(n)
    for name, per_second in amplitudes.items():
        audio += np.repeat(per_second, SAMPLE_RATE) * np.sin(2 * np.pi * TONES[name] * time)
    return Clip(video, audio.astype(np.float32), gt, int(seed), scene)


def clip_seeds(seed: int, split: str, count: int) -> List[int]:
    if split not in SPLITS:
        raise ConfigError(f"unknown split '{split}', expected one of {sorted(SPLITS)}")
    return [int(s) for s in np.random.default_rng([seed, 2, 100 + SPLITS[split]]).integers(0, 2 ** 31, size=count)]


def _build_clip(seed: int, height: int, width: int, frames: int) -> Clip:
    clip = generate_clip(seed, height=height, width=width, frames=frames)
    clip.spectrograms = clip_spectrograms(clip.audio(), frames)
    return clip


class ClipDataset:
    """Ordered collection of clips with batch stacking in the model's layout"""

    def __init__(self, clips: Sequence[Clip]):
        self.clips = list(clips)
        shapes = {clip.frames.shape for clip in self.clips}
        if len(shapes) > 1:
            raise ShapeError(f"clips of one dataset must share a shape, got {sorted(shapes)}")

    def __len__(self):
        return len(self.clips)

    def __getitem__(self, index: int) -> Clip:
        return self.clips[index]

    def __iter__(self):
        return iter(self.clips)

    def batch(self, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(frames B×3×T×H×W, spectrograms B×T×96×64, gt B×T×H×W)"""
        chosen = [self.clips[i] for i in indices]
        missing = [clip.seed for clip in chosen if clip.spectrograms is None]
        if missing:
            raise ShapeError(f"clips {missing} have no spectrograms; build the dataset with generate_dataset")
        frames = np.stack([clip.frames.transpose(1, 0, 2, 3) for clip in chosen])
        spectrograms = np.stack([clip.spectrograms for clip in chosen])
        gt = np.stack([clip.gt_masks for clip in chosen])
        return frames, spectrograms, gt

    def scene_counts(self) -> Dict[str, int]:
        counts = {kind: 0 for kind in SCENE_KINDS}
        for clip in self.clips:
            counts[clip.scene.sounding] += 1
        return counts


def generate_dataset(seed: int, split: str, count: int, height: int = 64, width: int = 64,
                     frames: int = 4, n_jobs: int = 1) -> ClipDataset:
    """Generate ``count`` clips with spectrograms; order does not depend on ``n_jobs``"""
    seeds = clip_seeds(seed, split, count)
    logger.info(f"🎬 Generating {count} {split} clips ({frames}×{height}×{width}, {n_jobs} job(s))")
    clips = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(_build_clip)(s, height, width, frames) for s in seeds)
    dataset = ClipDataset(clips)
    logger.info(f"   Scene mix: {dataset.scene_counts()}")
    return dataset


def save_dataset(dataset: ClipDataset, path: Union[str, Path]) -> Path:
    tensors, scenes = {}, []
    for i, clip in enumerate(dataset):
        tensors[f'clip{i:04d}/frames'] = clip.frames
        tensors[f'clip{i:04d}/waveform'] = clip.waveform
        tensors[f'clip{i:04d}/gt'] = clip.gt_masks
        if clip.spectrograms is not None:
            tensors[f'clip{i:04d}/spectrogram'] = clip.spectrograms
        scenes.append({'seed': clip.seed, 'scene': clip.scene.to_dict()})
    metadata = {'kind': 'dataset', 'clips': json.dumps(scenes, sort_keys=True, separators=(',', ':'))}
    return write_container(path, tensors, metadata)


def load_dataset(path: Union[str, Path]) -> ClipDataset:
    tensors, metadata = read_container(path)
    if metadata.get('kind') != 'dataset':
        raise ConfigError(f"{path} is not a dataset container")
    clips = []
    for i, entry in enumerate(json.loads(metadata['clips'])):
        prefix = f'clip{i:04d}/'
        clips.append(Clip(
            frames=tensors[prefix + 'frames'],
            waveform=tensors[prefix + 'waveform'],
            gt_masks=tensors[prefix + 'gt'].astype(np.uint8),
            seed=int(entry['seed']),
            scene=SceneSpec.from_dict(entry['scene']),
            spectrograms=tensors.get(prefix + 'spectrogram'),
        ))
    return ClipDataset(clips)


def export_wavs(dataset: ClipDataset, directory: Union[str, Path]) -> List[Path]:
    directory = Path(directory)
    return [write_wav(directory / f'clip{i:04d}_{clip.scene.sounding}.wav', clip.audio())
            for i, clip in enumerate(dataset)]
