import sys
from pathlib import Path

import numpy as np
import pytest

from keyvos.datamodel import BoundingBox, CandidateProposal, SaliencyMap, rle_encode

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


def grid_from_pixels(width, height, pixels):
    g = np.zeros((height, width), dtype=bool)
    g.ravel()[list(pixels)] = True
    return g


def rect_grid(width, height, x, y, w, h):
    g = np.zeros((height, width), dtype=bool)
    g[y : y + h, x : x + w] = True
    return g


def make_candidate(t, grid, descriptor=(0.0, 0.0), objectness=0.9):
    mask = rle_encode(grid)
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    box = BoundingBox(float(cols[0]), float(rows[0]), float(cols[-1] - cols[0] + 1), float(rows[-1] - rows[0] + 1))
    return CandidateProposal(t, box, mask, objectness, descriptor)


def uniform_saliency(width, height, value):
    return SaliencyMap(width, height, np.full((height, width), value))
