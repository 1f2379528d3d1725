"""One-shot pruning of the object pool down to K instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .pool import ObjectPool, Phase, TrackedInstance


@dataclass(frozen=True)
class SelectionWeights:
    w_sal: float = 0.5
    w_freq: float = 1.0

    def __post_init__(self):
        if self.w_sal < 0 or self.w_freq < 0:
            raise ValueError("selection weights must be non-negative")
        if self.w_sal == 0 and self.w_freq == 0:
            raise ValueError("w_sal and w_freq cannot both be zero")


def saliency_score(instance: TrackedInstance, horizon: int = None) -> float:
    """Mean of the per-appearance mean-in-mask saliency."""
    if instance.frequency < 1:
        raise ValueError(f"instance {instance.id} has never been observed")
    return instance.saliency_sum / instance.frequency


def frequency_score(instance: TrackedInstance, horizon: int) -> float:
    """Appearances divided by the growth horizon M, clamped to [0, 1]."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    return min(max(instance.frequency / horizon, 0.0), 1.0)


def selection_scores(pool: ObjectPool, weights: SelectionWeights, horizon: int) -> Dict[int, float]:
    return {
        inst.id: weights.w_sal * saliency_score(inst, horizon)
        + weights.w_freq * frequency_score(inst, horizon)
        for inst in pool.instances
    }


def _require_growing(pool: ObjectPool):
    if pool.phase is not Phase.GROWING:
        raise ValueError("key instances are selected once, while the pool is still growing")


def select_key_instances(pool: ObjectPool, k: int, weights: SelectionWeights, horizon: int) -> ObjectPool:
    """Keep the k best instances by weighted saliency + frequency; lock the pool."""
    _require_growing(pool)
    scores = selection_scores(pool, weights, horizon)
    ranked = sorted(scores, key=lambda iid: (-scores[iid], iid))
    pool.keep_only(ranked[:k])
    pool.phase = Phase.LOCKED
    return pool


def random_select_instances(pool: ObjectPool, k: int, seed: int) -> ObjectPool:
    """Keep a uniformly random k-subset (deterministic per seed); lock the pool."""
    _require_growing(pool)
    ids = pool.ids
    if len(ids) > k:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(ids), size=k, replace=False)
        pool.keep_only(ids[i] for i in picked)
    pool.phase = Phase.LOCKED
    return pool
