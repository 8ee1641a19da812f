import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from agemm import Matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def to_rows(mat):
    """Matrix -> list of row lists of Python floats (for the oracles)."""
    view = mat.as_2d()
    return [[float(view[i, j]) for j in range(mat.cols)] for i in range(mat.rows)]


def from_rows(rows, leading_dimension=None):
    return Matrix.from_2d(np.array(rows, dtype=np.float64),
                          leading_dimension=leading_dimension)
