"""Communication and sensing metrics for a DD-domain precoder.

Precoders are ``MN x K`` matrices (``K = MN`` in the full eigen-sub-channel
mode). Channels may be given as :class:`DdChannel` or plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import erfc

from .errors import InvalidDimensionError, SingularChannelError, UnboundedCrbError
from .qam import QamConstellation

__all__ = [
    "NoiseModel",
    "LinkMetrics",
    "dbm_to_linear",
    "qfunc",
    "zf_mse_matrix",
    "sinr_per_symbol",
    "average_ber",
    "ber_lower_bound",
    "ber_only_lower_bound_k",
    "fisher_information",
    "compute_crb",
    "convexity_condition_holds",
    "achievable_capacity",
    "capacity_upper_bound",
    "link_metrics",
]

Equalizer = Literal["zf", "mmse"]


@dataclass(frozen=True)
class NoiseModel:
    sigma_c_sq: float = 1.0
    sigma_s_sq: float = 1.0

    def __post_init__(self):
        if not (self.sigma_c_sq > 0 and self.sigma_s_sq > 0):
            raise ValueError("noise powers must be positive")

    @classmethod
    def from_dbm(cls, sigma_c_dbm: float = 0.0, sigma_s_dbm: float = 0.0) -> "NoiseModel":
        return cls(dbm_to_linear(sigma_c_dbm), dbm_to_linear(sigma_s_dbm))


@dataclass(frozen=True)
class LinkMetrics:
    mse_per_symbol: np.ndarray
    sinr_per_symbol: np.ndarray
    average_ber: float
    ber_lower_bound: float


def dbm_to_linear(dbm):
    """dBm to linear power in milliwatts."""
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def qfunc(x):
    """Gaussian tail probability."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def _matrix(h) -> np.ndarray:
    return np.asarray(getattr(h, "matrix", h), dtype=complex)


def _effective_gram(precoder, h_c) -> np.ndarray:
    W = np.atleast_2d(np.asarray(precoder, dtype=complex))
    if W.shape[0] == 1 and W.shape[1] > 1:
        W = W.T
    H = _matrix(h_c)
    if H.shape[1] != W.shape[0]:
        raise InvalidDimensionError(f"channel {H.shape} and precoder {W.shape} do not conform")
    HW = H @ W
    return HW.conj().T @ HW


def _inv_hpd(A: np.ndarray, what="H_c W") -> np.ndarray:
    # Cholesky doubles as the nonsingularity test
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularChannelError(f"{what} is singular") from exc
    if np.linalg.cond(L) > 1e14:
        raise SingularChannelError(f"{what} is numerically singular")
    Linv = np.linalg.inv(L)
    out = Linv.conj().T @ Linv
    return 0.5 * (out + out.conj().T)


def zf_mse_matrix(precoder, h_c, noise: NoiseModel) -> np.ndarray:
    """``sigma_c^2 ((H W)^H (H W))^{-1}``, the ZF error covariance."""
    return noise.sigma_c_sq * _inv_hpd(_effective_gram(precoder, h_c))


def sinr_per_symbol(precoder, h_c, noise: NoiseModel, equalizer: Equalizer = "zf") -> np.ndarray:
    """Post-equalization SINR of every detected symbol.

    For MMSE this is the SINR of the unbiased MMSE estimate.
    """
    G = _effective_gram(precoder, h_c)
    s2 = noise.sigma_c_sq
    if equalizer == "zf":
        inv = _inv_hpd(G)
        zeta = 0.0
    elif equalizer == "mmse":
        inv = np.linalg.inv(s2 * np.eye(G.shape[0]) + G)
        zeta = 1.0
    else:
        raise ValueError(f"unknown equalizer {equalizer!r}")
    return 1.0 / (s2 * np.real(np.diag(inv))) - zeta


def average_ber(sinr, constellation: QamConstellation) -> float:
    sinr = np.asarray(sinr, dtype=float)
    return float(constellation.alpha * np.mean(qfunc(np.sqrt(constellation.beta * sinr))))


def ber_lower_bound(precoder, h_c, noise: NoiseModel, constellation: QamConstellation) -> float:
    """Jensen bound ``alpha Q(sqrt(beta K / (sigma^2 tr[(W^H H^H H W)^{-1}])))``."""
    G = _effective_gram(precoder, h_c)
    tr = float(np.real(np.trace(_inv_hpd(G))))
    arg = constellation.beta * G.shape[0] / (noise.sigma_c_sq * tr)
    return float(constellation.alpha * qfunc(np.sqrt(arg)))


def ber_only_lower_bound_k(eigs_c, K: int, P_T: float, noise: NoiseModel,
                           constellation: QamConstellation) -> float:
    """BER bound of the BER-only design that uses the ``K`` strongest eigen sub-channels."""
    eigs = np.asarray(eigs_c, dtype=float)
    if not 1 <= K <= eigs.size:
        raise InvalidDimensionError(f"K must be in [1, {eigs.size}], got {K}")
    if np.any(np.diff(eigs) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    if eigs[K - 1] <= 0:
        raise SingularChannelError("selected eigen sub-channels must have positive gain")
    s = np.sum(eigs[:K] ** -0.5)
    arg = constellation.beta * K * P_T / (noise.sigma_c_sq * s * s)
    return float(constellation.alpha * qfunc(np.sqrt(arg)))


def fisher_information(precoder, h_dot, noise: NoiseModel) -> float:
    """Doppler Fisher information ``tr(Hdot W W^H Hdot^H) / sigma_s^2``."""
    W = np.asarray(precoder, dtype=complex)
    if W.ndim == 1:
        W = W[:, None]
    A = _matrix(h_dot) @ W
    return float(np.real(np.vdot(A, A))) / noise.sigma_s_sq


def compute_crb(precoder, h_dot, noise: NoiseModel) -> float:
    fi = fisher_information(precoder, h_dot, noise)
    if fi <= 0:
        raise UnboundedCrbError("Fisher information is zero; CRB is unbounded")
    return 1.0 / fi


def convexity_condition_holds(precoder, h_c, noise: NoiseModel,
                              constellation: QamConstellation) -> np.ndarray:
    """Per-symbol test ``sigma_c^2 <= beta / (3 [(W^H H^H H W)^{-1}]_ii)``."""
    diag = np.real(np.diag(_inv_hpd(_effective_gram(precoder, h_c))))
    return noise.sigma_c_sq <= constellation.beta / (3 * diag)


def achievable_capacity(precoder, h_c, noise: NoiseModel) -> float:
    """``log2 det(I + H W W^H H^H / sigma_c^2) / MN`` in bits per DD resource."""
    G = _effective_gram(precoder, h_c)
    mn = _matrix(h_c).shape[0]
    sign, logdet = np.linalg.slogdet(np.eye(G.shape[0]) + G / noise.sigma_c_sq)
    return max(float(logdet) / np.log(2) / mn, 0.0)


def capacity_upper_bound(eigs_c, P_T: float, noise: NoiseModel) -> float:
    """Water-filling maximum of the capacity over ``tr(W W^H) <= P_T``."""
    g = np.sort(np.asarray(eigs_c, dtype=float))[::-1] / noise.sigma_c_sq
    g = g[g > 0]
    if g.size == 0:
        return 0.0
    inv = 1.0 / g
    # largest k whose water level stays above every used 1/g
    for k in range(g.size, 0, -1):
        level = (P_T + inv[:k].sum()) / k
        if level > inv[k - 1]:
            break
    bits = np.log2(level * g[:k]).sum()
    return float(bits) / np.asarray(eigs_c).size


def link_metrics(precoder, h_c, noise: NoiseModel, constellation: QamConstellation) -> LinkMetrics:
    mse = np.real(np.diag(zf_mse_matrix(precoder, h_c, noise)))
    sinr = 1.0 / mse
    return LinkMetrics(
        mse_per_symbol=mse,
        sinr_per_symbol=sinr,
        average_ber=average_ber(sinr, constellation),
        ber_lower_bound=ber_lower_bound(precoder, h_c, noise, constellation),
    )
