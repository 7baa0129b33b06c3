#!/usr/bin/env python3
"""
SDAVS training pipeline
Generates the synthetic training split, trains the network with AdamW and a
multi-step schedule, and writes the checkpoint, a per-epoch log and a report.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import RunConfig, get_config
from .data import ClipDataset, generate_dataset
from .decoder import compute_loss
from .errors import NonFiniteError
from .metrics import clip_scores
from .model import ModelState, SDAVSModel, save_checkpoint
from .optim import AdamW, MultiStepLR

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'model.sdavs'
LOG_COLUMNS = ['epoch', 'lr', 'loss', 'l_ce', 'l_iou', 'l_dice', 'train_jf']


def predict_masks(logits: np.ndarray) -> np.ndarray:
    """B×1×T×H×W logits -> B×T×H×W binary masks (σ(x) > 0.5)"""
    return (np.asarray(logits)[:, 0] > 0).astype(np.uint8)


class SDAVSTrainer:
    def __init__(self, config: RunConfig, output_dir: Union[str, Path, None] = None,
                 n_jobs: Optional[int] = None, train_set: Optional[ClipDataset] = None,
                 checkpoint_name: str = CHECKPOINT_NAME):
        env = get_config()
        self.config = config
        self.output_dir = Path(output_dir) if output_dir is not None else env.OUTPUT_DIR / config.config_hash()
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.n_jobs = n_jobs or env.THREADS
        self.checkpoint_name = checkpoint_name

        self.train_set = train_set
        self.model = None
        self.optimizer = None
        self.scheduler = None
        self.history = []
        self.checkpoint_path = None

    def prepare_data(self):
        """Generate the training split (skipped when a dataset was handed in)"""
        if self.train_set is None:
            print("🎬 Generating synthetic training clips...")
            cfg = self.config
            self.train_set = generate_dataset(cfg.seed, 'train', cfg.train_clips, cfg.height, cfg.width,
                                              cfg.frames, n_jobs=self.n_jobs)
        print(f"📊 Training clips: {len(self.train_set)}")
        return True

    def build_model(self):
        cfg = self.config
        self.model = SDAVSModel(cfg)
        self.optimizer = AdamW(self.model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps,
                               weight_decay=cfg.weight_decay)
        self.scheduler = MultiStepLR(self.optimizer, cfg.lr_milestones(), cfg.gamma)
        print(f"🤖 Model built: {self.model.num_parameters():,} parameters (config {cfg.config_hash()})")
        return True

    def train_epoch(self, epoch: int, order: np.ndarray) -> dict:
        cfg = self.config
        totals = {'loss': 0.0, 'l_ce': 0.0, 'l_iou': 0.0, 'l_dice': 0.0}
        scores, batches = [], 0
        starts = range(0, len(order), cfg.batch_size)
        progress = tqdm(starts, desc=f"epoch {epoch}/{cfg.epochs}", leave=False,
                        disable=not logger.isEnabledFor(logging.INFO))
        for step, start in enumerate(progress):
            frames, spectrograms, gt = self.train_set.batch(order[start:start + cfg.batch_size])
            try:
                output = self.model(frames, spectrograms)
                logits, target = output.logits, gt
                if cfg.supervision == 'first_frame':
                    logits, target = logits[:, :, :1], gt[:, :1]
                losses = compute_loss(logits, target)
                self.optimizer.zero_grad()
                losses.total.backward()
            except NonFiniteError as exc:
                logger.error(f"❌ Non-finite value at epoch {epoch}, step {step}: {exc} "
                             f"(op '{exc.op}', tensor '{exc.tensor_name}')")
                raise
            self.optimizer.step()

            for key, value in losses.as_dict().items():
                totals[key] += value
            batches += 1
            predicted = predict_masks(output.logits.data)
            scores.extend(clip_scores(p, g)['J&F'] for p, g in zip(predicted, gt))
            progress.set_postfix(loss=f"{totals['loss'] / batches:.4f}")

        row = {'epoch': epoch, 'lr': self.optimizer.lr}
        row.update({key: value / batches for key, value in totals.items()})
        row['train_jf'] = float(np.mean(scores))
        return row

    def train(self):
        print("🏋️ Training...")
        cfg = self.config
        shuffler = np.random.default_rng([cfg.seed, 3])
        for epoch in range(1, cfg.epochs + 1):
            row = self.train_epoch(epoch, shuffler.permutation(len(self.train_set)))
            self.history.append(row)
            logger.info(f"   epoch {epoch:3d}  loss {row['loss']:.4f}  "
                        f"(ce {row['l_ce']:.4f}, iou {row['l_iou']:.4f}, dice {row['l_dice']:.4f})  "
                        f"train J&F {row['train_jf']:.4f}  lr {row['lr']:.2e}")
            self.scheduler.step()
        self.training_log().to_csv(self.output_dir / 'train_log.csv', index=False)
        print(f"✅ Training finished: final loss {self.history[-1]['loss']:.4f}, "
              f"train J&F {self.history[-1]['train_jf']:.4f}")
        return True

    def training_log(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=LOG_COLUMNS)

    def state(self) -> ModelState:
        return ModelState.from_model(self.model)

    def save_model(self):
        print("💾 Saving checkpoint...")
        self.checkpoint_path = save_checkpoint(self.state(), self.output_dir / self.checkpoint_name)
        self.config.to_json(self.output_dir / 'config.json')
        print(f"   Saved checkpoint: {self.checkpoint_path}")
        return True

    def summary(self) -> dict:
        last = self.history[-1] if self.history else {}
        return {
            'config_hash': self.config.config_hash(),
            'epochs': len(self.history),
            'final_loss': last.get('loss'),
            'final_train_jf': last.get('train_jf'),
            'train_clips': len(self.train_set) if self.train_set is not None else 0,
            'parameters': dict(self.model.component_parameters()),
            'checkpoint': self.checkpoint_path.name if self.checkpoint_path else None,
        }

    def generate_report(self):
        """Write training_summary.json and a Markdown report; no timestamps so reruns match byte for byte"""
        print("📄 Generating training report...")
        summary = self.summary()
        (self.output_dir / 'training_summary.json').write_text(
            json.dumps(summary, sort_keys=True, indent=2) + '\n', encoding='utf-8')

        cfg = self.config
        report = f"""# SDAVS Training Report

## Run
- **Config hash**: {summary['config_hash']}
- **Seed**: {cfg.seed}
- **Training clips**: {summary['train_clips']} ({cfg.frames} frames of {cfg.height}×{cfg.width})
- **Epochs**: {summary['epochs']} (batch {cfg.batch_size}, lr {cfg.lr:g}, milestones {cfg.lr_milestones()})
- **Supervision**: {cfg.supervision}

## Modules
- **SNRP**: {cfg.snrp} (CFS {'on' if cfg.cfs else 'off'}, SFS {'on' if cfg.sfs else 'off'})
- **DAMF**: {'on' if cfg.damf else 'off'} (STC {'on' if cfg.stc else 'off'}, RM {cfg.rm_mode}, branch {cfg.branch})

## Result
- **Final loss**: {summary['final_loss']:.4f}
- **Final train J&F**: {summary['final_train_jf']:.4f}

## Parameters
"""
        for name, count in summary['parameters'].items():
            report += f"- **{name}**: {count:,}\n"

        (self.output_dir / 'TRAINING_REPORT.md').write_text(report, encoding='utf-8')
        print(f"   Saved report: {self.output_dir / 'TRAINING_REPORT.md'}")
        return True

    def run_complete_pipeline(self) -> ModelState:
        """Run the complete training pipeline; errors propagate after being logged"""
        print("🚀 Starting SDAVS Training Pipeline")
        print("=" * 70)
        try:
            self.prepare_data()
            self.build_model()
            self.train()
            self.save_model()
            self.generate_report()
        except Exception as e:
            print(f"\n❌ Pipeline failed with error: {e}")
            raise

        print("\n" + "=" * 70)
        print("🎉 TRAINING PIPELINE COMPLETED SUCCESSFULLY!")
        print("=" * 70)
        print(f"📁 Output directory: {self.output_dir}")
        return self.state()


def train(config: RunConfig, output_dir: Union[str, Path, None] = None, n_jobs: Optional[int] = None,
          train_set: Optional[ClipDataset] = None):
    """Train one configuration; returns (ModelState, per-epoch log DataFrame)"""
    trainer = SDAVSTrainer(config, output_dir, n_jobs=n_jobs, train_set=train_set)
    state = trainer.run_complete_pipeline()
    return state, trainer.training_log()
