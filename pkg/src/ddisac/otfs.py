"""OTFS frame geometry, delay-Doppler channel matrices and the mod/demod chain.

Vectors in the DD domain follow the column-major convention
``x = vec(X)`` with ``X`` of shape ``(M, N)`` (delay along rows, Doppler
along columns), so flat index ``m + M*n``.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidPathError

__all__ = [
    "OtfsGrid",
    "PathParams",
    "PathSet",
    "DdChannel",
    "unitary_dft",
    "dd_transform",
    "forward_cyclic_shift",
    "doppler_phase_matrix",
    "time_domain_channel",
    "dd_channel",
    "doppler_derivative_channel",
    "otfs_modulate",
    "otfs_demodulate",
    "random_path_set",
]


@dataclass(frozen=True)
class OtfsGrid:
    """OTFS frame with ``M`` delay bins and ``N`` Doppler bins.

    ``T`` defaults to ``1/delta_f`` (critically sampled rectangular pulses).
    """

    M: int
    N: int
    delta_f: float = 2e3
    T: float | None = None

    def __post_init__(self):
        for name in ("M", "N"):
            value = getattr(self, name)
            if not isinstance(value, numbers.Integral) or value < 1:
                raise InvalidDimensionError(f"{name} must be a positive integer, got {value!r}")
        if not self.delta_f > 0:
            raise InvalidDimensionError(f"delta_f must be > 0, got {self.delta_f!r}")
        if self.T is None:
            object.__setattr__(self, "T", 1.0 / self.delta_f)
        elif not self.T > 0:
            raise InvalidDimensionError(f"T must be > 0, got {self.T!r}")

    @property
    def size(self) -> int:
        return self.M * self.N

    @property
    def delay_resolution(self) -> float:
        return 1.0 / (self.M * self.delta_f)

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.N * self.T)


@dataclass(frozen=True)
class PathParams:
    """One propagation path: complex gain, integer delay tap, real Doppler tap."""

    gain: complex
    delay_tap: int
    doppler_tap: float = 0.0

    def __post_init__(self):
        d = self.delay_tap
        if isinstance(d, numbers.Real) and not isinstance(d, numbers.Integral):
            if float(d) != int(d):
                raise InvalidPathError(f"delay_tap must be an integer, got {d!r}")
            object.__setattr__(self, "delay_tap", int(d))
        if self.delay_tap < 0:
            raise InvalidPathError(f"delay_tap must be >= 0, got {d!r}")
        if not np.isfinite(self.doppler_tap):
            raise InvalidPathError("doppler_tap must be finite")
        object.__setattr__(self, "gain", complex(self.gain))
        object.__setattr__(self, "doppler_tap", float(self.doppler_tap))


class PathSet(tuple):
    """Ordered, non-empty collection of :class:`PathParams`."""

    def __new__(cls, paths: Iterable[PathParams]):
        paths = tuple(paths)
        if len(paths) == 0:
            raise InvalidPathError("a path set needs at least one path")
        for p in paths:
            if not isinstance(p, PathParams):
                raise TypeError(f"expected PathParams, got {type(p).__name__}")
        return super().__new__(cls, paths)

    def __repr__(self):
        return f"PathSet({list(self)!r})"


@dataclass(frozen=True)
class DdChannel:
    matrix: np.ndarray
    grid: OtfsGrid

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        n = self.grid.size
        if mat.shape != (n, n):
            raise InvalidDimensionError(f"channel must be {n}x{n}, got {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise InvalidDimensionError("channel has non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)


def _as_paths(paths) -> Sequence[PathParams]:
    if isinstance(paths, PathParams):
        return (paths,)
    return PathSet(paths)


def _check_size(size) -> int:
    if not isinstance(size, numbers.Integral) or size < 1:
        raise InvalidDimensionError(f"size must be a positive integer, got {size!r}")
    return int(size)


def unitary_dft(n: int) -> np.ndarray:
    """Unitary DFT matrix, ``F[a, b] = exp(-2j*pi*a*b/n) / sqrt(n)``."""
    n = _check_size(n)
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def dd_transform(grid: OtfsGrid) -> np.ndarray:
    """``F_N kron I_M``, the map from time-domain samples to the DD grid."""
    return np.kron(unitary_dft(grid.N), np.eye(grid.M))


def forward_cyclic_shift(size: int) -> np.ndarray:
    """Permutation with ones on the first subdiagonal and the top-right corner."""
    size = _check_size(size)
    return np.roll(np.eye(size, dtype=complex), 1, axis=0)


def doppler_phase_matrix(k: float, size: int) -> np.ndarray:
    size = _check_size(size)
    return np.diag(np.exp(2j * np.pi * k * np.arange(size) / size))


def _path_matrix(path: PathParams, size: int) -> np.ndarray:
    # h' Delta^k Pi^l, built by rolling rows instead of a matrix power
    if path.delay_tap >= size:
        raise InvalidPathError(f"delay_tap {path.delay_tap} must be < MN={size}")
    k, l = path.doppler_tap, path.delay_tap
    gain = path.gain * np.exp(-2j * np.pi * k * l / size)
    shift = np.roll(np.eye(size, dtype=complex), l, axis=0)
    phase = np.exp(2j * np.pi * k * np.arange(size) / size)
    return gain * phase[:, None] * shift


def time_domain_channel(paths, grid: OtfsGrid) -> np.ndarray:
    """Time-domain channel ``sum_p h_p' Delta^{k_p} Pi^{l_p}``."""
    paths = _as_paths(paths)
    size = grid.size
    H = np.zeros((size, size), dtype=complex)
    for p in paths:
        H += _path_matrix(p, size)
    return H


def dd_channel(paths, grid: OtfsGrid) -> DdChannel:
    F = dd_transform(grid)
    H_T = time_domain_channel(paths, grid)
    return DdChannel(F @ H_T @ F.conj().T, grid)


def doppler_derivative_channel(sensing_path: PathParams, grid: OtfsGrid) -> DdChannel:
    """Derivative of the single-path DD channel w.r.t. the Doppler shift in Hz.

    The tap obeys ``k = N*T*nu``, so the time-domain derivative is
    ``D_nu h' Delta^k Pi^l`` with ``D_nu = diag(2j*pi*T/M * (n - l))``.
    """
    if isinstance(sensing_path, (list, tuple)):
        if len(sensing_path) != 1:
            raise InvalidPathError("sensing channel must have exactly one path")
        (sensing_path,) = sensing_path
    size = grid.size
    base = _path_matrix(sensing_path, size)
    ramp = 2j * np.pi * grid.T / grid.M * (np.arange(size) - sensing_path.delay_tap)
    F = dd_transform(grid)
    return DdChannel(F @ (ramp[:, None] * base) @ F.conj().T, grid)


def _to_grid_matrix(x, grid: OtfsGrid) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape != (grid.size,):
        raise InvalidDimensionError(f"expected a vector of length {grid.size}, got {x.shape}")
    return x.reshape(grid.M, grid.N, order="F")


def otfs_modulate(x_dd, grid: OtfsGrid) -> np.ndarray:
    """ISFFT followed by a rectangular-pulse Heisenberg transform."""
    X = _to_grid_matrix(x_dd, grid)
    # X_TF = F_M X F_N^H
    X_tf = np.fft.fft(np.fft.ifft(X, axis=1, norm="ortho"), axis=0, norm="ortho")
    # s = vec(F_M^H X_TF)
    S = np.fft.ifft(X_tf, axis=0, norm="ortho")
    return S.reshape(-1, order="F")


def otfs_demodulate(r, grid: OtfsGrid) -> np.ndarray:
    """Wigner transform then SFFT; ``Y_DD = R F_N``."""
    R = _to_grid_matrix(r, grid)
    Y_tf = np.fft.fft(R, axis=0, norm="ortho")
    Y = np.fft.fft(np.fft.ifft(Y_tf, axis=0, norm="ortho"), axis=1, norm="ortho")
    return Y.reshape(-1, order="F")


def random_path_set(
    rng: np.random.Generator,
    n_paths: int,
    l_max: int,
    k_max: float,
    *,
    fractional_doppler: bool = True,
    gain_variance: float | None = None,
) -> PathSet:
    """Draw ``n_paths`` paths with CN(0, 1/P) gains, delays in ``[0, l_max]``
    and Doppler taps in ``[-k_max, k_max]``."""
    if gain_variance is None:
        gain_variance = 1.0 / n_paths
    scale = np.sqrt(gain_variance / 2)
    paths = []
    for _ in range(n_paths):
        gain = scale * (rng.standard_normal() + 1j * rng.standard_normal())
        delay = int(rng.integers(0, l_max + 1))
        if fractional_doppler:
            doppler = float(rng.uniform(-k_max, k_max))
        else:
            doppler = float(rng.integers(-int(k_max), int(k_max) + 1))
        paths.append(PathParams(gain, delay, doppler))
    return PathSet(paths)
