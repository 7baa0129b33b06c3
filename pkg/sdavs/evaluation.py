#!/usr/bin/env python3
"""
Evaluation service for trained SDAVS checkpoints
Scores clean or noise-corrupted clips and measures cross-modal consistency
around the fusion module at the finest decoder stage.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .audio import NOISE_KINDS, clip_spectrograms, mix_noise, synth_interference
from .config import RunConfig, get_config
from .data import Clip, ClipDataset
from .errors import ConfigError, SDAVSError, ShapeError
from .metrics import (ConsistencyReport, clip_scores, consistency, divergences, pooled_samples)
from .model import ModelState, load_checkpoint
from .snrp import GateStatistics, gate_statistics
from .tensor import no_grad
from .trainer import predict_masks

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ['J', 'F', 'J&F']
ROW_COLUMNS = ['clip_id', 'seed', 'scene'] + METRIC_COLUMNS
AUDIT_TOLERANCE = 1e-12


def noise_condition(kind: str, scale: float) -> Tuple[str, float]:
    """Normalize a noise condition; scale 0 and 'none' both mean clean"""
    kind = 'clean' if kind in ('none', None) else kind
    if kind != 'clean' and kind not in NOISE_KINDS:
        raise ConfigError(f"unknown noise '{kind}', expected clean or one of {NOISE_KINDS}")
    if scale < 0:
        raise ConfigError(f"noise scale must be ≥ 0, got {scale}")
    if kind == 'clean' or scale == 0:
        return 'clean', 0.0
    return kind, float(scale)


def noise_seed(clip_seed: int) -> int:
    return int(np.random.default_rng([clip_seed, 4]).integers(2 ** 31))


def noisy_spectrograms(clip: Clip, kind: str, scale: float) -> np.ndarray:
    """Log-mel stack of the clip audio with interference mixed in at ``scale`` × signal RMS"""
    kind, scale = noise_condition(kind, scale)
    if kind == 'clean':
        return clip.spectrograms if clip.spectrograms is not None else clip_spectrograms(clip.audio(), clip.n_frames)
    signal = clip.audio()
    interference = synth_interference(kind, len(signal), noise_seed(clip.seed))
    return clip_spectrograms(mix_noise(signal, interference, scale), clip.n_frames)


def score_clips(clips: Sequence[Clip], predictions: Sequence[np.ndarray], start: int = 0) -> List[dict]:
    """One metric row per clip; ``predictions`` are T×H×W binary masks"""
    if len(clips) != len(predictions):
        raise ShapeError(f"{len(clips)} clips but {len(predictions)} predictions")
    rows = []
    for offset, (clip, pred) in enumerate(zip(clips, predictions)):
        row = {'clip_id': start + offset, 'seed': clip.seed, 'scene': clip.scene.sounding}
        row.update(clip_scores(pred, clip.gt_masks))
        rows.append(row)
    return rows


@dataclass
class BatchResult:
    rows: List[dict]
    before_audio: np.ndarray
    before_video: np.ndarray
    after_audio: np.ndarray
    after_video: np.ndarray
    kl_before: List[float]
    js_before: List[float]
    kl_after: List[float]
    js_after: List[float]
    gates: GateStatistics
    frames: int


@dataclass
class EvalReport:
    rows: pd.DataFrame
    consistency_before: Optional[ConsistencyReport]
    consistency_after: Optional[ConsistencyReport]
    gate_stats: dict
    noise: str = 'clean'
    scale: float = 0.0
    config_hash: str = ''
    timing: Optional[dict] = None
    degradation: Optional[dict] = None
    aggregates: Dict[str, float] = field(init=False)

    def __post_init__(self):
        self.aggregates = {name: float(self.rows[name].mean()) for name in METRIC_COLUMNS}

    def audit(self) -> bool:
        """Recompute the aggregates from the per-clip rows"""
        for name in METRIC_COLUMNS:
            recomputed = float(np.mean(self.rows[name].to_numpy(dtype=np.float64)))
            if abs(recomputed - self.aggregates[name]) > AUDIT_TOLERANCE:
                logger.error(f"❌ Aggregate {name} = {self.aggregates[name]} but rows give {recomputed}")
                return False
        return True

    def compare_to(self, clean: 'EvalReport') -> dict:
        """Record clean − this report's aggregates as the noise degradation"""
        self.degradation = {name: clean.aggregates[name] - self.aggregates[name] for name in METRIC_COLUMNS}
        return self.degradation

    def to_dict(self) -> dict:
        summary = {
            'aggregates': self.aggregates,
            'clips': int(len(self.rows)),
            'config_hash': self.config_hash,
            'consistency': {
                'before_damf': self.consistency_before.as_dict() if self.consistency_before else None,
                'after_damf': self.consistency_after.as_dict() if self.consistency_after else None,
            },
            'gate_stats': self.gate_stats,
            'noise': {'kind': self.noise, 'scale': self.scale},
        }
        if self.degradation is not None:
            summary['degradation'] = self.degradation
        if self.timing is not None:
            summary['timing'] = self.timing
        return summary

    def write(self, path: Union[str, Path]) -> Tuple[Path, Path]:
        """Write ``<stem>.csv`` (per-clip rows) and ``<stem>.json`` (aggregates) next to ``path``"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = path.with_suffix('.csv'), path.with_suffix('.json')
        self.rows.to_csv(csv_path, index=False)
        json_path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n', encoding='utf-8')
        logger.info(f"💾 Report written to {csv_path} and {json_path}")
        return csv_path, json_path


class SegmentationEvaluator:
    """Loads a model state once and evaluates datasets under a noise condition"""

    def __init__(self, state: ModelState):
        self.state = state
        self.config: RunConfig = state.config
        self.model = state.build_model()
        logger.info(f"✅ Model ready: {self.model.num_parameters():,} parameters "
                    f"(config {self.config.config_hash()})")

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], expected: Optional[RunConfig] = None,
                        force: bool = False) -> 'SegmentationEvaluator':
        logger.info(f"🔍 Loading checkpoint {path}")
        return cls(load_checkpoint(path, expected=expected, force=force))

    def _run_batch(self, clips: Sequence[Clip], start: int, kind: str, scale: float) -> BatchResult:
        frames = np.stack([clip.frames.transpose(1, 0, 2, 3) for clip in clips])
        spectrograms = np.stack([noisy_spectrograms(clip, kind, scale) for clip in clips])
        gt = np.stack([clip.gt_masks for clip in clips])
        with no_grad():
            output = self.model(frames, spectrograms)

        finest = output.stages[-1]
        before_audio, before_video = finest.snrp.audio.data, finest.snrp.video.data
        after_audio, after_video = finest.damf.fused_a2v.data, finest.damf.fused_v2a.data
        kl_before, js_before = divergences(before_audio, before_video)
        kl_after, js_after = divergences(after_audio, after_video)
        return BatchResult(
            rows=score_clips(clips, predict_masks(output.logits.data), start),
            before_audio=pooled_samples(before_audio), before_video=pooled_samples(before_video),
            after_audio=pooled_samples(after_audio), after_video=pooled_samples(after_video),
            kl_before=kl_before, js_before=js_before, kl_after=kl_after, js_after=js_after,
            gates=gate_statistics(finest.snrp, gt),
            frames=int(gt.shape[0] * gt.shape[1]),
        )

    @staticmethod
    def _consistency(audio: List[np.ndarray], video: List[np.ndarray], kl: List[float],
                     js: List[float]) -> Optional[ConsistencyReport]:
        try:
            return consistency(np.concatenate(audio), np.concatenate(video), kl, js)
        except ShapeError as exc:
            logger.warning(f"⚠️ Consistency statistics skipped: {exc}")
            return None

    def evaluate(self, dataset: ClipDataset, noise: str = 'clean', scale: float = 0.1,
                 batch_size: Optional[int] = None, n_jobs: Optional[int] = None,
                 timing: bool = False) -> EvalReport:
        kind, scale = noise_condition(noise, scale)
        batch_size = batch_size or self.config.batch_size
        n_jobs = n_jobs or get_config().THREADS
        clips = list(dataset)
        starts = list(range(0, len(clips), batch_size))
        logger.info(f"📊 Evaluating {len(clips)} clips (noise {kind}, scale {scale:g}, {n_jobs} job(s))")

        began = time.perf_counter()
        results = Parallel(n_jobs=n_jobs, prefer='threads')(
            delayed(self._run_batch)(clips[s:s + batch_size], s, kind, scale)
            for s in tqdm(starts, desc='eval', leave=False, disable=not logger.isEnabledFor(logging.INFO)))
        elapsed = time.perf_counter() - began

        rows = [row for result in results for row in result.rows]
        gates = GateStatistics()
        for result in results:
            gates = gates.merge(result.gates)
        report = EvalReport(
            rows=pd.DataFrame(rows, columns=ROW_COLUMNS),
            consistency_before=self._consistency([r.before_audio for r in results],
                                                 [r.before_video for r in results],
                                                 [v for r in results for v in r.kl_before],
                                                 [v for r in results for v in r.js_before]),
            consistency_after=self._consistency([r.after_audio for r in results],
                                                [r.after_video for r in results],
                                                [v for r in results for v in r.kl_after],
                                                [v for r in results for v in r.js_after]),
            gate_stats=gates.summary(),
            noise=kind, scale=scale,
            config_hash=self.config.config_hash(),
        )
        if timing:
            total_frames = sum(result.frames for result in results)
            report.timing = {'seconds': elapsed, 'frames_per_second': total_frames / max(elapsed, 1e-9)}
        if not report.audit():
            raise SDAVSError("evaluation report failed its aggregate audit")
        logger.info(f"   J {report.aggregates['J']:.4f}  F {report.aggregates['F']:.4f}  "
                    f"J&F {report.aggregates['J&F']:.4f}")
        return report


def evaluate(state: ModelState, dataset: ClipDataset, noise: str = 'clean', scale: float = 0.1,
             **options) -> EvalReport:
    return SegmentationEvaluator(state).evaluate(dataset, noise, scale, **options)
