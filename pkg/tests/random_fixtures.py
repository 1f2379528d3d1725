"""Seeded small scenes for the greedy-vs-exhaustive equivalence sweep."""

import numpy as np

from keyvos.bench import ObjectSpec, ScenarioSpec, generate_scenario
from keyvos.errors import SizeLimit
from keyvos.pipeline import PipelineConfig

MAX_IDS = 5
MAX_CANDIDATES = 5
FRAMES = 5


def random_fixture(seed):
    """(sequence, config) with at most 5 detections per frame, or None if the draw is too crowded."""
    rng = np.random.default_rng(seed)
    n_obj = int(rng.integers(1, 4))
    objects = tuple(
        ObjectSpec(
            start=(float(rng.uniform(4, 28)), float(rng.uniform(4, 20))),
            size=(int(rng.integers(3, 9)), int(rng.integers(3, 9))),
            velocity=tuple(float(v) for v in rng.uniform(-2, 2, 2)),
            descriptor_sigma=float(rng.uniform(0.0, 0.5)),
            saliency=float(rng.uniform(0, 1)),
            objectness=float(rng.uniform(0.5, 1.0)),
        )
        for _ in range(n_obj)
    )
    spec = ScenarioSpec(
        FRAMES,
        (32, 24),
        objects,
        descriptor_dim=4,
        jitter=float(rng.uniform(0, 1.5)),
        drop_prob=0.15,
        clutter_rate=0.6,
        clutter_size=(3, 8),
        clutter_objectness=(0.4, 0.95),
        seed=seed,
    )
    seq, _ = generate_scenario(spec)
    if max(len(f) for f in seq.candidates) > MAX_CANDIDATES:
        return None
    cfg = PipelineConfig().with_params(
        M=int(rng.integers(1, FRAMES + 1)),
        K=int(rng.integers(1, MAX_IDS + 1)),
        alpha_traj=float(rng.uniform(5, 30)),
        alpha_reid=float(rng.uniform(0.5, 3)),
        tau1=float(rng.uniform(0.2, 0.7)),
        tau2=float(rng.uniform(0.1, 0.6)),
    )
    return seq, cfg


def fixtures(count, start=0):
    """First ``count`` seeds whose fixture stays within the limits, as (seed, seq, cfg)."""
    from keyvos.bench import oracle_track

    out, seed = [], start
    while len(out) < count:
        drawn = random_fixture(seed)
        if drawn is not None:
            seq, cfg = drawn
            try:
                oracle_track(seq, cfg)
            except SizeLimit:
                drawn = None
            if drawn is not None and _max_ids(seq, cfg) <= MAX_IDS:
                out.append((seed, seq, cfg))
        seed += 1
    return out


def _max_ids(seq, cfg):
    from keyvos.pipeline import SequenceRunner

    runner = SequenceRunner(seq, cfg)
    peak = 0
    while not runner.done:
        runner.step()
        peak = max(peak, len(runner.pool))
    return peak
