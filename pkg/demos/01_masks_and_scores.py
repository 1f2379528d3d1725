"""Walk through the building blocks: run-length masks, the four association
scores and a greedy assignment round on a hand-made frame."""

import numpy as np

from keyvos.datamodel import BoundingBox, BoxVector, CandidateProposal, mask_iou, rle_encode
from keyvos.pool import ObjectPool, assign_ids
from keyvos.scoring import ScoreWeights, build_score_matrix, score_reid, score_traj

# a 1x4 row with the middle two pixels set
row = np.array([[0, 1, 1, 0]], dtype=bool)
rle = rle_encode(row)
print("counts of 0110:", rle.counts)  # (1, 2, 1): background run first

# two overlapping squares on a 10x10 canvas
a = np.zeros((10, 10), bool); a[1:5, 1:5] = True
b = np.zeros((10, 10), bool); b[2:6, 2:6] = True
print("IoU of shifted squares:", round(mask_iou(rle_encode(a), rle_encode(b)), 4))  # 9/23

# trajectory and appearance scores
print("traj, 50 px apart, alpha 100:", score_traj(BoxVector(0, 0, 8, 8), BoxVector(30, 40, 8, 8), 100))
print("reid, nearest descriptor 3 away, alpha 10:", score_reid([(0, 0), (3, 4)], (3, 0), 10))


def candidate(grid, desc):
    rows = np.flatnonzero(grid.any(axis=1)); cols = np.flatnonzero(grid.any(axis=0))
    box = BoundingBox(cols[0], rows[0], cols[-1] - cols[0] + 1, rows[-1] - rows[0] + 1)
    return CandidateProposal(0, box, rle_encode(grid), 0.9, desc)


# frame 0: two objects become instances 1 and 2
pool = ObjectPool()
pool.spawn(0, candidate(a, (1.0, 0.0)), 0.5)
far = np.zeros((10, 10), bool); far[6:9, 6:9] = True
pool.spawn(0, candidate(far, (0.0, 1.0)), 0.5)

# frame 1: the same objects, listed in the opposite order
moved = np.zeros((10, 10), bool); moved[6:9, 5:8] = True
cands = [candidate(moved, (0.05, 0.95)), candidate(b, (0.95, 0.05))]
weights = ScoreWeights(alpha_traj=7.0)  # default weights; alpha about half the frame diagonal
m = build_score_matrix(pool.instances, cands, {}, weights, 1)
np.set_printoptions(precision=3, suppress=True)
print("s_total (rows = instances, cols = candidates):\n", m.total)
print("assignment:", assign_ids(m, tau=0.55).instance_to_candidate)  # {1: 1, 2: 0}
