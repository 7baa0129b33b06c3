"""
Training curves, mask overlays and per-stage feature maps (matplotlib, non-interactive backend).
"""

import logging
from pathlib import Path
from typing import Optional, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .decoder import StageOutput
from .errors import ConfigError, ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ('loss', 'l_ce', 'l_iou', 'l_dice', 'train_jf')


def plot_training_curves(log_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    """Loss terms (left) and train J&F with the learning rate (right) per epoch"""
    log = pd.read_csv(log_path)
    missing = [c for c in ('epoch',) + CURVE_COLUMNS if c not in log.columns]
    if missing:
        raise ConfigError(f"{log_path}: training log lacks columns {missing}")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 4.5))
    fig.suptitle('SDAVS training', fontsize=14, fontweight='bold')

    for name, style in (('loss', '-'), ('l_ce', '--'), ('l_iou', '--'), ('l_dice', '--')):
        ax1.plot(log['epoch'], log[name], linestyle=style, linewidth=3 if name == 'loss' else 1, label=name)
    ax1.set_xlabel('Epoch')
    ax1.set_ylabel('Loss')
    ax1.set_title('Loss terms')
    ax1.legend()
    ax1.grid(True, alpha=0.3)

    ax2.plot(log['epoch'], log['train_jf'], color='tab:green', linewidth=2, label='train J&F')
    ax2.set_ylim(0.0, 1.0)
    ax2.set_xlabel('Epoch')
    ax2.set_ylabel('J&F')
    ax2.set_title('Train J&F')
    ax2.grid(True, alpha=0.3)
    if 'lr' in log.columns:
        lr_axis = ax2.twinx()
        lr_axis.semilogy(log['epoch'], log['lr'], color='tab:gray', linestyle=':', label='lr')
        lr_axis.set_ylabel('Learning rate')

    plt.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(out_path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"📈 Saved training curves: {out_path}")
    return out_path


def plot_mask_overlay(frames: np.ndarray, gt: np.ndarray, out_path: Union[str, Path],
                      pred: Optional[np.ndarray] = None) -> Path:
    """One column per frame: the RGB frame with gt (and optionally prediction) contours"""
    frames, gt = np.asarray(frames), np.asarray(gt)
    t = frames.shape[0]
    fig, axes = plt.subplots(1, t, figsize=(3 * t, 3), squeeze=False)
    for i, ax in enumerate(axes[0]):
        ax.imshow(np.clip(frames[i].transpose(1, 2, 0), 0.0, 1.0))
        if gt[i].any():
            ax.contour(gt[i], levels=[0.5], colors='lime', linewidths=1.5)
        if pred is not None and np.asarray(pred)[i].any():
            ax.contour(np.asarray(pred)[i], levels=[0.5], colors='red', linewidths=1.0, linestyles='--')
        ax.set_title(f't = {i}')
        ax.axis('off')

    plt.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(out_path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"🖼️ Saved mask overlay: {out_path}")
    return out_path


def channel_mean_map(feature, batch: int = 0, frame: int = 0) -> np.ndarray:
    """Mean absolute activation over channels of one (clip, frame) of a B×C×T×H×W feature"""
    data = feature.data if isinstance(feature, Tensor) else np.asarray(feature)
    return np.abs(data[batch, :, frame]).mean(axis=0)


def plot_feature_maps(stage: StageOutput, frames: np.ndarray, gt: np.ndarray, out_path: Union[str, Path],
                      frame: int = 0) -> Path:
    """
    Where one decoder stage spends its activation, for clip 0 at ``frame``.

    Top row: the RGB frame with its gt contour, then the video feature entering
    SNRP, after the channel gate and after the spatial gate. Bottom row: the
    audio and video features before DAMF next to the fused a→v and v→a maps.
    """
    frames, gt = np.asarray(frames), np.asarray(gt)
    if not 0 <= frame < frames.shape[0]:
        raise ShapeError(f"frame {frame} outside a clip of {frames.shape[0]} frames")

    video_in = stage.video_in.data
    after_cfs = video_in * stage.snrp.gate_c.data
    after_sfs = after_cfs * stage.snrp.gate_s.data
    panels = [
        ('SNRP input', video_in), ('after CFS', after_cfs), ('after SFS', after_sfs),
        ("audio F'_a", stage.snrp.audio), ("F'_{a→v}", stage.damf.fused_a2v),
        ("video F'_v", stage.snrp.video), ("F'_{v→a}", stage.damf.fused_v2a),
    ]

    fig, axes = plt.subplots(2, 4, figsize=(14, 7))
    h, w = video_in.shape[-2:]
    fig.suptitle(f'Stage features at {h}×{w}, t = {frame}', fontsize=14, fontweight='bold')
    axes[0, 0].imshow(np.clip(frames[frame].transpose(1, 2, 0), 0.0, 1.0))
    if gt[frame].any():
        axes[0, 0].contour(gt[frame], levels=[0.5], colors='lime', linewidths=1.5)
    axes[0, 0].set_title('frame + gt')
    axes[0, 0].axis('off')

    for ax, (title, feature) in zip(axes.flat[1:], panels):
        image = ax.imshow(channel_mean_map(feature, frame=frame), cmap='viridis')
        fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04)
        ax.set_title(title)
        ax.axis('off')

    plt.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(out_path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"🔥 Saved feature maps: {out_path}")
    return out_path
