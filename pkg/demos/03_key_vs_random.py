"""Key-instance selection against random selection as the id budget K grows.

Faint distractors that show up only briefly before selection inflate the pool;
random pruning often throws away the real objects, key selection does not.
"""

from keyvos.bench import generate_scenario, salient_plus_distractors, selection_experiment

suite = [generate_scenario(salient_plus_distractors(s)) for s in range(4)]
table = selection_experiment(suite, k_values=[2, 4, 6, 8, 10], seeds=range(10))
print(table.format())
print("gap per K:", [round(g, 3) for g in table.gaps])
