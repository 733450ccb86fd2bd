import logging

import numpy as np
import pytest

from gnnsim import CooMatrix, DenseMatrix, Layout

# Partition-size fallback warnings are expected on tiny test graphs.
logging.getLogger("gnnsim.compiler").setLevel(logging.ERROR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dense(rng, rows, cols, density=0.5, integer=False, layout=Layout.ROW_MAJOR):
    a = rng.uniform(-1.0, 1.0, size=(rows, cols))
    if integer:
        a = rng.integers(-4, 5, size=(rows, cols)).astype(np.float64)
    mask = rng.random((rows, cols)) < density
    return DenseMatrix.from_2d(np.where(mask, a, 0.0), layout)


def random_coo(rng, rows, cols, density=0.3, layout=Layout.ROW_MAJOR):
    dense = random_dense(rng, rows, cols, density)
    a = dense.to_2d()
    ri, ci = np.nonzero(a)
    return CooMatrix(rows, cols, layout, ri, ci, a[ri, ci])
