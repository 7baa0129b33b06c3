"""
Segmentation metrics (J, Fβ, J&F) and cross-modal consistency statistics
(linear CKA, KL and JS divergence between feature distributions).
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import special, stats
from scipy.spatial import distance

from .errors import ShapeError

BETA_SQ = 0.3
KL_FLOOR = 1e-12


def _as_masks(pred, gt):
    pred, gt = np.asarray(pred).astype(bool), np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    return pred, gt


def jaccard(pred, gt) -> float:
    """|pred ∩ gt| / |pred ∪ gt|, 1.0 when both masks are empty"""
    pred, gt = _as_masks(pred, gt)
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def f_measure(pred, gt, beta_sq: float = BETA_SQ) -> float:
    pred, gt = _as_masks(pred, gt)
    n_pred, n_gt = pred.sum(), gt.sum()
    if n_pred == 0 and n_gt == 0:
        return 1.0
    tp = np.logical_and(pred, gt).sum()
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    if precision + recall == 0:
        return 0.0
    return float((1 + beta_sq) * precision * recall / (beta_sq * precision + recall))


def j_and_f(pred, gt, beta_sq: float = BETA_SQ) -> float:
    return 0.5 * (jaccard(pred, gt) + f_measure(pred, gt, beta_sq))


def clip_scores(pred: np.ndarray, gt: np.ndarray, beta_sq: float = BETA_SQ) -> dict:
    """Per-frame J and F over a T×H×W clip, averaged over frames"""
    pred, gt = _as_masks(pred, gt)
    js = [jaccard(p, g) for p, g in zip(pred, gt)]
    fs = [f_measure(p, g, beta_sq) for p, g in zip(pred, gt)]
    j, f = float(np.mean(js)), float(np.mean(fs))
    return {'J': j, 'F': f, 'J&F': 0.5 * (j + f)}


def linear_cka(x: np.ndarray, y: np.ndarray) -> float:
    """‖XcᵀYc‖²_F / (‖XcᵀXc‖_F ‖YcᵀYc‖_F); 0 when either side has no variance"""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"CKA needs samples×features matrices with equal rows, got {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise ShapeError("CKA needs at least 2 samples")
    xc, yc = x - x.mean(axis=0), y - y.mean(axis=0)
    cross = np.linalg.norm(xc.T @ yc, 'fro') ** 2
    norm_x = np.linalg.norm(xc.T @ xc, 'fro')
    norm_y = np.linalg.norm(yc.T @ yc, 'fro')
    if norm_x == 0 or norm_y == 0:
        return 0.0
    return float(np.clip(cross / (norm_x * norm_y), 0.0, 1.0))


def feature_distributions(features: np.ndarray) -> np.ndarray:
    """Softmax over each flattened sample (first axis indexes samples)"""
    flat = np.asarray(features, dtype=np.float64).reshape(len(features), -1)
    return special.softmax(flat, axis=1)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(P ‖ Q) in nats, Q clamped below by 1e-12"""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"distributions differ in shape: {p.shape} vs {q.shape}")
    return float(stats.entropy(p, np.maximum(q, KL_FLOOR)))


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in nats, within [0, ln 2]"""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"distributions differ in shape: {p.shape} vs {q.shape}")
    return float(distance.jensenshannon(p, q) ** 2)


@dataclass
class ConsistencyReport:
    cka: float
    kl: float
    js: float

    def as_dict(self) -> dict:
        return {'cka': self.cka, 'kl': self.kl, 'js': self.js}


def pooled_samples(feature: np.ndarray) -> np.ndarray:
    """B×C×T×H×W -> (B·T)×C spatially averaged vectors"""
    b, c, t = feature.shape[:3]
    return feature.mean(axis=(3, 4)).transpose(0, 2, 1).reshape(b * t, c)


def frame_samples(feature: np.ndarray) -> np.ndarray:
    """B×C×T×H×W -> (B·T)×(C·H·W) flattened per-frame maps"""
    b, c, t = feature.shape[:3]
    return feature.transpose(0, 2, 1, 3, 4).reshape(b * t, -1)


def divergences(audio: np.ndarray, video: np.ndarray) -> Tuple[List[float], List[float]]:
    """Per-sample (KL, JS) lists between softmax-normalized audio and video maps"""
    p, q = feature_distributions(frame_samples(audio)), feature_distributions(frame_samples(video))
    return [kl_divergence(a, b) for a, b in zip(p, q)], [js_divergence(a, b) for a, b in zip(p, q)]


def consistency(audio_pooled: np.ndarray, video_pooled: np.ndarray, kl_values: Sequence[float],
                js_values: Sequence[float]) -> ConsistencyReport:
    return ConsistencyReport(cka=linear_cka(audio_pooled, video_pooled),
                             kl=float(np.mean(kl_values)), js=float(np.mean(js_values)))
