"""Link-level Monte-Carlo BER estimation over a DD-domain channel.

Every block draws its symbols and noise from its own generator, seeded by
``SeedSequence(seed, spawn_key=(block,))``, so any block can be reproduced
on its own and the result does not depend on the batch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import kernels
from .errors import InvalidDimensionError, SingularChannelError
from .metrics import NoiseModel
from .otfs import OtfsGrid, dd_transform
from .qam import QamConstellation

__all__ = ["SimConfig", "BerEstimate", "mmse_equalizer", "zf_equalizer", "block_rng", "simulate_ber"]

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo run parameters.

    ``target_error_events`` stops the run early once that many bit errors have
    been counted; ``None`` always runs all ``blocks``.
    """

    blocks: int
    seed: int = 0
    equalizer: Literal["zf", "mmse"] = "zf"
    constellation: QamConstellation = field(default_factory=QamConstellation)
    noise: NoiseModel = field(default_factory=NoiseModel)
    target_error_events: int | None = 400
    batch: int = 256

    def __post_init__(self):
        if not isinstance(self.blocks, (int, np.integer)) or self.blocks < 1:
            raise ValueError(f"blocks must be a positive integer, got {self.blocks!r}")
        if self.equalizer not in ("zf", "mmse"):
            raise ValueError(f"unknown equalizer {self.equalizer!r}")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.target_error_events is not None and self.target_error_events < 1:
            raise ValueError("target_error_events must be >= 1 or None")


@dataclass(frozen=True)
class BerEstimate:
    bit_errors: int
    bits_total: int
    ber: float
    ci95_halfwidth: float
    blocks: int

    @classmethod
    def from_counts(cls, errors: int, bits: int, blocks: int) -> "BerEstimate":
        p = errors / bits
        # normal approximation; loose below ~100 error events
        half = _Z95 * math.sqrt(p * (1 - p) / bits)
        return cls(int(errors), int(bits), p, half, int(blocks))


def _matrix(h) -> np.ndarray:
    return np.asarray(getattr(h, "matrix", h), dtype=complex)


def mmse_equalizer(h_c, precoder, noise: NoiseModel) -> np.ndarray:
    """``(sigma_c^2 I + W^H H^H H W)^{-1} W^H H^H``."""
    HW = _matrix(h_c) @ np.asarray(precoder, dtype=complex)
    G = HW.conj().T @ HW
    return np.linalg.solve(noise.sigma_c_sq * np.eye(G.shape[0]) + G, HW.conj().T)


def zf_equalizer(h_c, precoder) -> np.ndarray:
    """``(H W)^{-1}`` for a square nonsingular effective channel."""
    HW = _matrix(h_c) @ np.asarray(precoder, dtype=complex)
    if np.linalg.cond(HW) > 1e12:
        raise SingularChannelError("H_c W is singular; ZF is undefined")
    return np.linalg.inv(HW)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _draw_block(seed, block, size, order, sigma):
    rng = block_rng(seed, block)
    labels = rng.integers(0, order, size)
    n = rng.standard_normal((2, size))
    return labels, sigma * (n[0] + 1j * n[1])


def simulate_ber(h_c, precoder, sim: SimConfig, *, time_domain: tuple | None = None) -> BerEstimate:
    """Empirical BER of ``d_hat = Q (H_c W d + n)`` with hard QAM decisions.

    With ``time_domain=(H_T, grid)`` the precoded frame is sent through the
    time-domain channel and the noise is added before demodulation; the
    received DD samples then carry ``(F_N kron I_M) n`` instead of ``n``.
    """
    W = np.asarray(precoder, dtype=complex)
    H = _matrix(h_c)
    size = H.shape[0]
    if W.shape != (size, size):
        raise InvalidDimensionError(f"precoder must be {size}x{size}, got {W.shape}")
    c = sim.constellation
    if sim.equalizer == "zf":
        Q = zf_equalizer(H, W)
    else:
        Q = mmse_equalizer(H, W, sim.noise)
        # unbiased scaling so the decision statistic is centred on the symbol
        Q = Q / np.diag(Q @ H @ W)[:, None]

    if time_domain is not None:
        H_T, grid = time_domain
        if not isinstance(grid, OtfsGrid) or grid.size != size:
            raise InvalidDimensionError("time-domain grid does not match the channel")
        F = dd_transform(grid)
        # transmit F^H W d, receive F (H_T F^H W d + n)
        tx = F @ (np.asarray(H_T, dtype=complex) @ (F.conj().T @ W))
        rx_noise = F
    else:
        tx = H @ W
        rx_noise = None
    QT = Q @ tx

    sigma = math.sqrt(sim.noise.sigma_c_sq / 2)
    inv_step = 1.0 / c.step
    errors = 0
    done = 0
    while done < sim.blocks:
        stop = min(done + sim.batch, sim.blocks)
        draws = [_draw_block(sim.seed, b, size, c.order, sigma) for b in range(done, stop)]
        labels = np.stack([d[0] for d in draws], axis=1)
        noise = np.stack([d[1] for d in draws], axis=1)
        if rx_noise is not None:
            noise = rx_noise @ noise
        y = QT @ c.points[labels] + Q @ noise
        errors += kernels.slice_count_errors(
            y.ravel(order="F"), labels.ravel(order="F"), inv_step, c.levels_i, c.levels_q, c.bits_q)
        done = stop
        if sim.target_error_events is not None and errors >= sim.target_error_events:
            break
    return BerEstimate.from_counts(errors, done * size * c.bits_per_symbol, done)
