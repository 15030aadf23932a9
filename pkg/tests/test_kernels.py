import numpy as np
import pytest

from ddisac import _kernels_py, kernels
from ddisac.qam import QamConstellation

compiled = pytest.importorskip("ddisac._kernels", reason="compiled extension not built")


@pytest.mark.parametrize("order", [2, 4, 8, 16, 64])
def test_backends_agree(order):
    c = QamConstellation(order)
    rng = np.random.default_rng(order)
    n = 20000
    labels = rng.integers(0, order, n)
    y = c.points[labels] + 0.8 * c.step * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    # include points far outside the grid and exactly on decision boundaries
    y[:4] = [50 + 50j, -50 - 50j, 0.0, c.step * 2 + 0j]
    args = (1.0 / c.step, c.levels_i, c.levels_q, c.bits_q)
    assert np.array_equal(compiled.slice_labels(y, *args), _kernels_py.slice_labels(y, *args))
    assert compiled.slice_count_errors(y, labels, *args) == _kernels_py.slice_count_errors(y, labels, *args)
    a, b = rng.integers(0, 1 << 20, 100), rng.integers(0, 1 << 20, 100)
    assert compiled.count_bit_errors(a, b) == _kernels_py.count_bit_errors(a, b)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        compiled.slice_count_errors(np.zeros(3, complex), np.zeros(2, np.int64), 1.0, 2, 2, 1)


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


def test_popcount_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 256, 500), rng.integers(0, 256, 500)
    expected = sum(bin(int(x) ^ int(y)).count("1") for x, y in zip(a, b))
    assert kernels.count_bit_errors(a, b) == expected
