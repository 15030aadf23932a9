"""Pure-NumPy versions of the Monte-Carlo hot kernels.

Must stay bit-for-bit equivalent to ``_kernels.pyx``.
"""

import numpy as np


def _axis_index(v, inv_step, levels):
    j = np.floor((v * inv_step + (levels - 1)) * 0.5 + 0.5)
    return np.clip(j, 0, levels - 1).astype(np.int64)


def slice_labels(y, inv_step, n_i, n_q, bits_q):
    """Nearest rectangular-QAM point for each sample, returned as its Gray label."""
    y = np.asarray(y, dtype=np.complex128)
    ji = _axis_index(y.real, inv_step, n_i)
    jq = _axis_index(y.imag, inv_step, n_q)
    return ((ji ^ (ji >> 1)) << bits_q) | (jq ^ (jq >> 1))


def count_bit_errors(a, b):
    diff = np.bitwise_xor(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    return int(np.bitwise_count(diff).sum())


def slice_count_errors(y, tx_labels, inv_step, n_i, n_q, bits_q):
    return count_bit_errors(slice_labels(y, inv_step, n_i, n_q, bits_q), tx_labels)
