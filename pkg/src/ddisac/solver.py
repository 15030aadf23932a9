"""Minimum-BER dual-functional precoder design.

The design works on the covariance ``P = W W^H = U Sigma^2 U^H`` of the
precoder ``W = U Sigma V``. ``U`` and ``Sigma`` come from a convex
covariance problem

    min_P  tr[(P G)^{-1}]   s.t.  tr(P S) >= gamma_1,  tr(P) <= P_T

where ``G = H_c^H H_c`` and ``S = Hdot^H Hdot``; its dual in
``(lambda, mu)`` is maximized with a two-dimensional ellipsoid method and
every dual point has the closed-form minimizer

    P*(lambda, mu) = S0^{-1} (S0 S1 S0)^{1/2} S0^{-1},
    S0 = G^{1/2},  S1 = (mu I - lambda S)^{-1}.

``V`` is then chosen so every symbol sees the same post-ZF MSE, which
makes the Jensen BER bound tight.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    GammaRangeError,
    IndefiniteMatrixError,
    NonConvergenceError,
    NotHermitianError,
    NumericalBreakdownError,
    SingularChannelError,
    UnboundedCrbError,
)
from .metrics import NoiseModel
from .otfs import unitary_dft
from .qam import QamConstellation

log = logging.getLogger(__name__)

__all__ = [
    "EigenBasis",
    "SolverConfig",
    "EllipsoidState",
    "PrecoderSolution",
    "eigen_basis",
    "channel_bases",
    "crb_only_precoder",
    "ber_only_precoder",
    "gamma_range",
    "los_gamma_star",
    "optimal_covariance",
    "dual_subgradient",
    "dual_value",
    "ellipsoid_step",
    "feasibility_check",
    "construct_v",
    "solve_algorithm1",
    "single_symbol_precoder",
]


def _matrix(h) -> np.ndarray:
    return np.asarray(getattr(h, "matrix", h), dtype=complex)


def _herm(A):
    return 0.5 * (A + A.conj().T)


@dataclass(frozen=True)
class EigenBasis:
    """Unitary ``vectors`` and descending nonnegative ``values`` of a Gram matrix."""

    vectors: np.ndarray
    values: np.ndarray

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def top(self) -> float:
        return float(self.values[0])

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


@dataclass
class SolverConfig:
    """Inputs of the covariance solve.

    Give either ``gamma_1`` (a Fisher-trace threshold) or ``gamma_c`` (a CRB
    threshold, converted with ``sigma_s^2 / gamma_c``). ``rho_scale`` sets
    the radius of the initial ellipsoid relative to the initial dual point.
    ``polish`` refines the final dual point so both constraints hold with
    equality.
    """

    P_T: float
    gamma_1: float | None = None
    gamma_c: float | None = None
    xi_0: float = 1e-3
    max_iters: int | None = None
    rho_scale: float = 10.0
    polish: bool = True

    def __post_init__(self):
        if not self.P_T > 0:
            raise ValueError("P_T must be positive")
        if not self.xi_0 > 0:
            raise ValueError("xi_0 must be positive")

    def resolve_gamma_1(self, noise: NoiseModel | None = None) -> float:
        if self.gamma_1 is not None:
            return float(self.gamma_1)
        if self.gamma_c is not None:
            sigma_s_sq = 1.0 if noise is None else noise.sigma_s_sq
            return sigma_s_sq / self.gamma_c
        return 0.0

    def iteration_cap(self, size: int) -> int:
        if self.max_iters is not None:
            return int(self.max_iters)
        return 10 * math.ceil(math.log(1.0 / self.xi_0) * size)


@dataclass(frozen=True)
class EllipsoidState:
    """Ellipsoid ``{t : (t - center)^T B (t - center) <= 1}`` stored via ``B^{-1}``."""

    center: np.ndarray
    shape_inverse: np.ndarray
    iteration: int = 0


@dataclass
class PrecoderSolution:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray | None
    covariance: np.ndarray
    duals: tuple[float, float] = (0.0, 0.0)
    feasible: bool = True
    objective: float = math.inf
    iterations: int = 0
    history: list = field(default_factory=list)
    kkt: dict = field(default_factory=dict)

    @property
    def W(self) -> np.ndarray:
        if self.V is None:
            raise ValueError("no V was constructed for this solution (feasibility check failed)")
        return (self.U * self.sigma) @ self.V


# --------------------------------------------------------------------------
# eigen structure
# --------------------------------------------------------------------------

def eigen_basis(gram, tol: float = 1e-10) -> EigenBasis:
    A = np.asarray(gram, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - A.conj().T)) > tol * scale:
        raise NotHermitianError("matrix is not Hermitian")
    w, Q = np.linalg.eigh(_herm(A))
    order = np.argsort(-w, kind="stable")
    w, Q = w[order], Q[:, order]
    floor = tol * max(1.0, float(np.max(np.abs(w))))
    if w[-1] < -floor:
        raise NotHermitianError(f"matrix is not positive semidefinite (min eigenvalue {w[-1]:.3g})")
    return EigenBasis(Q, np.clip(w, 0.0, None))


def channel_bases(h_c, h_dot) -> tuple[EigenBasis, EigenBasis]:
    """Communication and sensing eigen bases from ``H_c^H H_c`` and ``Hdot^H Hdot``."""
    H, D = _matrix(h_c), _matrix(h_dot)
    return eigen_basis(H.conj().T @ H), eigen_basis(D.conj().T @ D)


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def crb_only_precoder(sensing: EigenBasis, P_T: float) -> PrecoderSolution:
    """All power on the strongest sensing eigen-direction.

    ``U`` is the full sensing basis; only its first column carries power.
    """
    if sensing.top <= 0:
        raise UnboundedCrbError("sensing channel is zero")
    n = sensing.size
    sigma = np.zeros(n)
    sigma[0] = np.sqrt(P_T)
    w1 = sensing.vectors[:, :1]
    return PrecoderSolution(
        U=sensing.vectors.copy(),
        sigma=sigma,
        V=np.eye(n, dtype=complex),
        covariance=P_T * (w1 @ w1.conj().T),
        objective=math.inf,
    )


def ber_only_precoder(comm: EigenBasis, P_T: float) -> PrecoderSolution:
    """Channel-inverting power allocation ``Lambda_c^{-1/4}`` with DFT mixing."""
    lam = comm.values
    if lam[-1] <= 0:
        raise SingularChannelError("communication channel is singular")
    inv_sqrt = lam ** -0.5
    sigma = np.sqrt(P_T / inv_sqrt.sum()) * lam ** -0.25
    n = comm.size
    return PrecoderSolution(
        U=comm.vectors.copy(),
        sigma=sigma,
        V=unitary_dft(n),
        covariance=(comm.vectors * sigma**2) @ comm.vectors.conj().T,
        objective=float(inv_sqrt.sum() ** 2 / P_T),
    )


def gamma_range(comm: EigenBasis, sensing: EigenBasis, h_dot, P_T: float) -> tuple[float, float]:
    """Fisher-trace thresholds reached by the BER-only and CRB-only designs."""
    gamma_max = P_T * sensing.top
    A = _matrix(h_dot) @ ber_only_precoder(comm, P_T).W
    gamma_min = float(np.real(np.vdot(A, A)))
    return gamma_min, gamma_max


def los_gamma_star(lam: float, mu: float, sensing: EigenBasis, h_c_gain: complex) -> np.ndarray:
    """Power allocation over the sensing basis for a flat (single-path) comm channel."""
    if abs(h_c_gain) == 0:
        raise SingularChannelError("communication gain is zero")
    denom = mu - lam * sensing.values
    if lam < 0 or np.any(denom <= 0):
        raise IndefiniteMatrixError("need lambda >= 0 and mu > lambda * Xi_1")
    return np.diag(denom ** -0.5 / abs(h_c_gain))


class _CovarianceOracle:
    """Closed-form primal minimizer, specialised to one pair of bases."""

    def __init__(self, comm: EigenBasis, sensing: EigenBasis):
        lam_c = comm.values
        if lam_c[-1] <= 0:
            raise SingularChannelError("communication Gram is singular")
        Wc = comm.vectors
        self.comm, self.sensing = comm, sensing
        self.s0_inv = (Wc * lam_c ** -0.5) @ Wc.conj().T
        # S0 W_s, so that S0 S1 S0 = A diag(1/denom) A^H
        self.A = (Wc * lam_c ** 0.5) @ (Wc.conj().T @ sensing.vectors)
        self.S = sensing.reconstruct()
        self.spread = sensing.top - sensing.values

    def solve(self, lam: float, mu: float):
        return self.solve_gap(lam, mu - lam * self.sensing.top)

    def solve_gap(self, lam: float, gap: float):
        """Minimizer at ``mu = lam * Xi_1 + gap``.

        Near the optimum ``gap`` can be ~1e-12 of ``mu``; passing it directly
        avoids the cancellation in ``mu - lam * Xi_i``.
        """
        if lam < 0 or not gap > 0:
            raise IndefiniteMatrixError(
                f"dual point outside domain: lambda={lam:.6g}, mu - lambda*Xi_1={gap:.6g}")
        denom = gap + lam * self.spread
        # S0 S1 S0 = C C^H; the SVD of C keeps the square root accurate when
        # G is ill-conditioned and (lambda, mu) sits near the domain edge
        C = self.A * denom ** -0.5
        X, s, _ = np.linalg.svd(C)
        if s[-1] <= 0:
            raise NumericalBreakdownError("S0 S1 S0 lost positive definiteness")
        B = self.s0_inv @ X
        P = _herm((B * s) @ B.conj().T)
        objective = float(np.sum(1.0 / s))
        return P, objective


def optimal_covariance(lam: float, mu: float, comm: EigenBasis, sensing: EigenBasis) -> np.ndarray:
    return _CovarianceOracle(comm, sensing).solve(lam, mu)[0]


def dual_subgradient(P_star, sensing: EigenBasis, gamma_1: float, P_T: float) -> np.ndarray:
    """Gradient of the dual function in ``(lambda, mu)``."""
    P = np.asarray(P_star, dtype=complex)
    S = sensing.reconstruct()
    return np.array([gamma_1 - np.real(np.sum(P * S.T)), np.real(np.trace(P)) - P_T])


def dual_value(P_star, lam, mu, comm: EigenBasis, sensing: EigenBasis, gamma_1, P_T) -> float:
    P = np.asarray(P_star, dtype=complex)
    G = comm.reconstruct()
    obj = float(np.real(np.trace(np.linalg.inv(P @ G))))
    d = dual_subgradient(P, sensing, gamma_1, P_T)
    return obj + mu * d[1] + lam * d[0]


def ellipsoid_step(state: EllipsoidState, d) -> EllipsoidState:
    """Central-cut update keeping the half-space ``{t : d^T (t - center) <= 0}``."""
    d = np.asarray(d, dtype=float)
    Binv = state.shape_inverse
    if not np.any(d):
        raise NumericalBreakdownError("zero cut direction: the center is already optimal")
    q = float(d @ Binv @ d)
    if not q > 0:
        raise NumericalBreakdownError(f"d^T B^-1 d = {q:.3g} is not positive")
    dt = d / math.sqrt(q)
    Bd = Binv @ dt
    n = d.size
    center = state.center - Bd / (n + 1)
    shape = n * n / (n * n - 1.0) * (Binv - 2.0 / (n + 1) * np.outer(Bd, Bd))
    return EllipsoidState(center, 0.5 * (shape + shape.T), state.iteration + 1)


# --------------------------------------------------------------------------
# V construction and the feasibility gate
# --------------------------------------------------------------------------

def construct_v(sigma, z_c) -> np.ndarray:
    """Unitary ``V`` that equalizes the diagonal of ``V^H (Sigma Z_c Sigma)^{-1} V``."""
    sigma = np.asarray(sigma, dtype=float)
    A = _herm(sigma[:, None] * np.asarray(z_c, dtype=complex) * sigma[None, :])
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularChannelError("Sigma Z_c Sigma is singular") from exc
    Linv = np.linalg.inv(L)
    _, ups = np.linalg.eigh(_herm(Linv.conj().T @ Linv))
    return ups @ unitary_dft(sigma.size)


def _inverse_trace(sigma, z_c) -> float:
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        return math.inf
    A = _herm(sigma[:, None] * np.asarray(z_c, dtype=complex) * sigma[None, :])
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return math.inf
    Linv = np.linalg.inv(L)
    return float(np.real(np.vdot(Linv, Linv)))


def feasibility_check(sigma, z_c, constellation: QamConstellation, noise: NoiseModel) -> bool:
    """True when a ``V`` exists that keeps every symbol in the convex BER regime."""
    n = np.asarray(sigma).size
    return _inverse_trace(sigma, z_c) <= n * constellation.beta / (3 * noise.sigma_c_sq)


# --------------------------------------------------------------------------
# dual ellipsoid solve
# --------------------------------------------------------------------------

def _power_exhausting_gap(oracle: _CovarianceOracle, lam: float, P_T: float, gap: float) -> float:
    """Root of ``tr P*(lam, lam * Xi_1 + gap) = P_T`` in ``gap`` with ``lam`` fixed.

    The trace falls monotonically in ``gap``; the search runs on ``log(gap)``.
    """

    def excess(x):
        return float(np.real(np.trace(oracle.solve_gap(lam, math.exp(x))[0]))) - P_T

    x = math.log(gap)
    f = excess(x)
    step = 2.0 if f > 0 else -2.0
    lo = hi = x
    for _ in range(400):
        lo, hi = hi, hi + step
        f_hi = excess(hi)
        if (f_hi > 0) != (f > 0):
            break
    else:
        raise NumericalBreakdownError("cannot bracket the power-exhausting multiplier")
    if f_hi == 0:
        return math.exp(hi)
    x = brentq(excess, min(lo, hi), max(lo, hi), xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(x)


def _complementary_lambda(oracle: _CovarianceOracle, lam: float, gap: float,
                          gamma_1: float, P_T: float) -> tuple[float, float]:
    """Solve ``tr(P* S) = gamma_1`` in ``lambda`` along the power-exhausting curve.

    Returns ``(lambda, gap)``.
    """
    S = oracle.S
    warm = [gap]

    def shortfall(l):
        warm[0] = _power_exhausting_gap(oracle, l, P_T, warm[0])
        P, _ = oracle.solve_gap(l, warm[0])
        return float(np.real(np.sum(P * S.T))) - gamma_1

    lo = hi = max(lam, 1e-300)
    f = shortfall(hi)
    if f < 0:
        while f < 0:
            lo, hi = hi, 2 * hi
            f = shortfall(hi)
    else:
        while f >= 0 and lo > 1e-300:
            hi, lo = lo, 0.5 * lo
            f = shortfall(lo)
        if f >= 0:
            return 0.0, _power_exhausting_gap(oracle, 0.0, P_T, warm[0])
    if lo != hi:
        lam = brentq(shortfall, min(lo, hi), max(lo, hi), xtol=1e-300, rtol=1e-13, maxiter=500)
    return lam, _power_exhausting_gap(oracle, lam, P_T, warm[0])


def _assemble(P, lam, mu, comm, sensing, gamma_1, P_T, constellation, noise, *,
              iterations=0, history=None) -> PrecoderSolution:
    w, U = np.linalg.eigh(_herm(P))
    order = np.argsort(-w, kind="stable")
    gamma = np.clip(w[order], 0.0, None)
    U = U[:, order]
    sigma = np.sqrt(gamma)
    G = comm.reconstruct()
    z_c = _herm(U.conj().T @ G @ U)
    objective = _inverse_trace(sigma, z_c)
    feasible = bool(objective <= sigma.size * constellation.beta / (3 * noise.sigma_c_sq))
    V = construct_v(sigma, z_c) if feasible else None

    S = sensing.reconstruct()
    sensed = float(np.real(np.sum(P * S.T)))
    power = float(np.real(np.trace(P)))
    kkt = {
        "sensing_trace": sensed,
        "power": power,
        "comp_slack_lambda": abs(lam * (sensed - gamma_1)),
        "comp_slack_mu": abs(mu * (power - P_T)),
    }
    if mu > 0 and np.all(gamma > 0):
        Pinv = U @ np.diag(1.0 / gamma) @ U.conj().T
        grad = lam * S + Pinv @ np.linalg.inv(G) @ Pinv - mu * np.eye(sigma.size)
        kkt["stationarity"] = float(np.linalg.norm(grad) / (mu * np.sqrt(sigma.size)))
    return PrecoderSolution(
        U=U, sigma=sigma, V=V, covariance=_herm(P), duals=(float(lam), float(mu)),
        feasible=feasible, objective=objective, iterations=iterations,
        history=history or [], kkt=kkt,
    )


def solve_algorithm1(h_c, h_dot, config: SolverConfig,
                     constellation: QamConstellation | None = None,
                     noise: NoiseModel | None = None) -> PrecoderSolution:
    """Dual-functional precoder by the dual ellipsoid method.

    Raises :class:`GammaRangeError` when the CRB target needs more than the
    power budget can provide and :class:`NonConvergenceError` when the
    iteration cap is hit. Targets already met by the BER-only design return
    that design directly with ``lambda = 0``.
    """
    constellation = constellation or QamConstellation(4)
    noise = noise or NoiseModel()
    P_T = float(config.P_T)
    gamma_1 = config.resolve_gamma_1(noise)
    comm, sensing = channel_bases(h_c, h_dot)
    gamma_min, gamma_max = gamma_range(comm, sensing, h_dot, P_T)
    if gamma_1 > gamma_max * (1 + 1e-12):
        raise GammaRangeError(gamma_1, gamma_min, gamma_max)

    oracle = _CovarianceOracle(comm, sensing)
    xi1 = sensing.top
    # lambda = 0 power-exhausting multiplier, closed form
    mu0 = (np.sum(comm.values ** -0.5) / P_T) ** 2

    if gamma_1 <= gamma_min:
        P, _ = oracle.solve(0.0, mu0)
        return _assemble(P, 0.0, mu0, comm, sensing, gamma_1, P_T, constellation, noise)
    if xi1 <= 0:
        raise UnboundedCrbError("sensing channel is zero")

    # ellipsoid over t = (lambda * Xi_1, mu); the stop test is invariant to this scaling
    lam0 = mu0 / 2
    rho = config.rho_scale * max(mu0, lam0)
    state = EllipsoidState(np.array([lam0, mu0]), rho * rho * np.eye(2))
    cap = config.iteration_cap(comm.size)
    history = []
    last = None
    for r in range(cap):
        lam_hat, mu = state.center
        if lam_hat < 0:
            state = ellipsoid_step(state, np.array([-1.0, 0.0]))
            continue
        if mu <= lam_hat:
            state = ellipsoid_step(state, np.array([1.0, -1.0]))
            continue
        lam = lam_hat / xi1
        P, obj = oracle.solve_gap(lam, mu - lam_hat)
        d = dual_subgradient(P, sensing, gamma_1, P_T)
        d_hat = np.array([d[0] / xi1, d[1]])
        lagrangian = obj + mu * d[1] + lam * d[0]
        crit = math.sqrt(max(float(d_hat @ state.shape_inverse @ d_hat), 0.0))
        history.append((r, lagrangian, lam, mu, crit))
        last = (lam, mu)
        if crit < config.xi_0:
            break
        # ascend the concave dual: cut with the subgradient of -D
        state = ellipsoid_step(state, -d_hat)
    else:
        raise NonConvergenceError(
            f"ellipsoid did not converge in {cap} iterations", state=state, history=history)

    lam, mu = last
    gap = mu - lam * xi1
    # the stop test bounds the dual gradient, not the primal gap; finish on the
    # KKT system where both constraints are active
    if config.polish:
        lam, gap = _complementary_lambda(oracle, lam, gap, gamma_1, P_T)
    else:
        gap = _power_exhausting_gap(oracle, lam, P_T, gap)
    P, _ = oracle.solve_gap(lam, gap)
    mu = lam * xi1 + gap
    log.debug("ellipsoid converged after %d iterations (lambda=%g, mu=%g)", len(history), lam, mu)
    return _assemble(P, lam, mu, comm, sensing, gamma_1, P_T, constellation, noise,
                     iterations=state.iteration, history=history)


# --------------------------------------------------------------------------
# single-symbol block
# --------------------------------------------------------------------------

def _phase(z: complex) -> complex:
    a = abs(z)
    return 1.0 + 0j if a == 0 else z / a


def single_symbol_precoder(comm: EigenBasis, sensing: EigenBasis, gamma_1: float, P_T: float,
                           degenerate_rtol: float = 1e-9) -> np.ndarray:
    """Best precoding vector when one OTFS block carries a single symbol.

    When the strongest communication eigenvalue is repeated, ``w_c1`` is taken
    as the direction of that eigenspace closest to the sensing direction.
    """
    xi1 = sensing.top
    if xi1 <= 0:
        raise UnboundedCrbError("sensing channel is zero")
    if gamma_1 > P_T * xi1 * (1 + 1e-12):
        raise GammaRangeError(gamma_1, 0.0, P_T * xi1)
    w_s = sensing.vectors[:, 0]
    top = comm.values >= comm.values[0] * (1 - degenerate_rtol)
    w_c = comm.vectors[:, 0]
    if np.count_nonzero(top) > 1:
        E = comm.vectors[:, top]
        proj = E @ (E.conj().T @ w_s)
        if np.linalg.norm(proj) > 1e-12:
            w_c = proj / np.linalg.norm(proj)

    inner = np.vdot(w_s, w_c)  # w_s^H w_c
    if P_T * abs(inner) ** 2 > gamma_1 / xi1:
        return np.sqrt(P_T) * w_c
    resid = w_c - inner * w_s
    norm = np.linalg.norm(resid)
    x_mag = math.sqrt(max(gamma_1, 0.0) / xi1)
    if norm < 1e-12:
        return np.sqrt(P_T) * _phase(inner) * w_s
    w_u = resid / norm
    y_mag = math.sqrt(max(P_T - gamma_1 / xi1, 0.0))
    return x_mag * _phase(inner) * w_s + y_mag * _phase(np.vdot(w_u, w_c)) * w_u
