"""
Ablation grids: train every combination of RunConfig overrides for each seed,
evaluate on clean and noisy eval sets, and collect one summary row per
(setting, seed, noise).

Grid specs are JSON objects or inline strings::

    snrp=pre,off;rm_mode=mul,straight;seeds=0,1,2;noise=brownian

``seeds`` and ``noise`` are reserved keys; every other key must be a
RunConfig field.
"""

import itertools
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd

from .config import RunConfig
from .data import ClipDataset, generate_dataset
from .errors import ConfigError
from .evaluation import SegmentationEvaluator, noise_condition
from .trainer import SDAVSTrainer

logger = logging.getLogger(__name__)

RESERVED_KEYS = ('seeds', 'noise')
SUMMARY_COLUMNS = ['setting', 'seed', 'noise', 'scale', 'J', 'F', 'J&F', 'degradation_jf', 'config_hash']


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_grid(spec: str) -> Dict[str, list]:
    """Grid from a JSON file path, a JSON object string, or ``key=v1,v2;key2=...``"""
    path = Path(spec)
    try:
        is_file = path.suffix == '.json' or path.is_file()
    except OSError:
        is_file = False
    if is_file:
        try:
            spec = path.read_text(encoding='utf-8')
        except FileNotFoundError:
            raise ConfigError(f"grid file not found: {path}") from None
    spec = spec.strip()
    if spec.startswith('{'):
        try:
            grid = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"grid is not valid JSON: {exc}") from None
    else:
        grid = {}
        for part in filter(None, (p.strip() for p in spec.split(';'))):
            if '=' not in part:
                raise ConfigError(f"grid entry '{part}' is not key=value[,value...]")
            key, values = part.split('=', 1)
            grid[key.strip()] = [_parse_value(v.strip()) for v in values.split(',')]
    return {key: value if isinstance(value, list) else [value] for key, value in grid.items()}


def expand_grid(grid: Dict[str, list]) -> Tuple[List[dict], List[int], List[str]]:
    """(settings as override dicts, seeds, noise kinds) from a parsed grid"""
    unknown = [key for key in grid if key not in RunConfig.model_fields and key not in RESERVED_KEYS]
    if unknown:
        raise ConfigError(f"grid keys {unknown} are not RunConfig fields")
    axes = {key: values for key, values in grid.items() if key not in RESERVED_KEYS}
    keys = list(axes)
    settings = [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]
    seeds = [int(s) for s in grid.get('seeds', [])]
    noises = [str(n) for n in grid.get('noise', [])]
    return settings or [{}], seeds, noises


def setting_label(overrides: dict) -> str:
    if not overrides:
        return 'default'
    return ','.join(f'{key}={value}' for key, value in overrides.items())


def run_ablation(base: RunConfig, grid: Dict[str, list], out_dir: Union[str, Path],
                 n_jobs: Optional[int] = None, noise_scale: Optional[float] = None) -> pd.DataFrame:
    """Train and evaluate every (setting, seed); returns and writes ``summary.csv``"""
    settings, seeds, noises = expand_grid(grid)
    seeds = seeds or [base.seed]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    datasets: Dict[tuple, ClipDataset] = {}

    def dataset_for(cfg: RunConfig, split: str, count: int) -> ClipDataset:
        key = (split, cfg.seed, count, cfg.height, cfg.width, cfg.frames)
        if key not in datasets:
            datasets[key] = generate_dataset(cfg.seed, split, count, cfg.height, cfg.width, cfg.frames,
                                             n_jobs=n_jobs or 1)
        return datasets[key]

    rows = []
    total = len(settings) * len(seeds)
    print(f"🧪 Ablation grid: {len(settings)} setting(s) × {len(seeds)} seed(s) = {total} run(s)")
    for index, (overrides, seed) in enumerate(itertools.product(settings, seeds), start=1):
        cfg = base.with_overrides(**{**overrides, 'seed': seed})
        label = setting_label(overrides)
        print(f"   [{index}/{total}] {label} seed={seed} ({cfg.config_hash()})")

        trainer = SDAVSTrainer(cfg, out_dir / cfg.config_hash(), n_jobs=n_jobs,
                               train_set=dataset_for(cfg, 'train', cfg.train_clips))
        state = trainer.run_complete_pipeline()
        evaluator = SegmentationEvaluator(state)
        eval_set = dataset_for(cfg, 'eval', cfg.eval_clips)

        clean = evaluator.evaluate(eval_set, 'clean', n_jobs=n_jobs)
        reports = [clean]
        for kind in noises:
            scale = cfg.noise_scale if noise_scale is None else noise_scale
            if noise_condition(kind, scale)[0] == 'clean':
                continue
            noisy = evaluator.evaluate(eval_set, kind, scale, n_jobs=n_jobs)
            noisy.compare_to(clean)
            reports.append(noisy)
        for report in reports:
            row = {'setting': label, 'seed': seed, 'noise': report.noise, 'scale': report.scale,
                   'degradation_jf': report.degradation['J&F'] if report.degradation else 0.0,
                   'config_hash': report.config_hash}
            row.update(report.aggregates)
            rows.append(row)

    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    summary.to_csv(out_dir / 'summary.csv', index=False)
    print(f"📋 Summary written to {out_dir / 'summary.csv'}")
    return summary
