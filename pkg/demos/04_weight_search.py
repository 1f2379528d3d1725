"""Seeded random search over the association and selection weights."""

from keyvos.bench import (
    default_search_space,
    generate_scenario,
    score_config,
    search_hyperparams,
    tracking_suite,
    uniform_weights_config,
)
from keyvos.pipeline import PipelineConfig

suite = [generate_scenario(tracking_suite(s)) for s in range(3)]

print("shipped defaults :", round(score_config(PipelineConfig(), suite), 4))
print("uniform weights  :", round(score_config(uniform_weights_config(), suite), 4))

outcome = search_hyperparams(default_search_space(trials=12, seed=1), suite)
print(f"best of 12 trials: {outcome.best_score:.4f} (trial {outcome.best_index})")
best = outcome.trials[outcome.best_index].params
print({k: round(v, 3) for k, v in best.items()})
print(outcome.format_log().splitlines()[0])
print("\n".join(outcome.format_log().splitlines()[1:4]), "...")
