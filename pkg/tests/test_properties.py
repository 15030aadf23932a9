"""Randomized invariants; each property runs on at least 100 generated cases."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ddisac.metrics import (
    NoiseModel,
    average_ber,
    ber_lower_bound,
    compute_crb,
    fisher_information,
    sinr_per_symbol,
)
from ddisac.qam import QamConstellation
from ddisac.solver import (
    EigenBasis,
    EllipsoidState,
    construct_v,
    eigen_basis,
    ellipsoid_step,
    single_symbol_precoder,
)

CASES = settings(max_examples=150, deadline=None)
seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(2, 6)
orders = st.sampled_from([4, 16, 64])


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_psd(rng, n, rank=None):
    A = crandn(rng, n, rank or n)
    return A @ A.conj().T


def random_unitary(rng, n):
    Q, _ = np.linalg.qr(crandn(rng, n, n))
    return Q


@CASES
@given(seeds, dims, orders, st.floats(0.01, 0.99))
def test_jensen_inside_convexity_gate(seed, n, order, frac):
    rng = np.random.default_rng(seed)
    c = QamConstellation(order)
    H, W = crandn(rng, n, n), crandn(rng, n, n)
    HW = H @ W
    inv_diag = np.real(np.diag(np.linalg.inv(HW.conj().T @ HW)))
    nm = NoiseModel(frac * c.beta / (3 * inv_diag.max()))
    exact = average_ber(sinr_per_symbol(W, H, nm), c)
    assert ber_lower_bound(W, H, nm, c) <= exact * (1 + 1e-12) + 1e-300


@CASES
@given(seeds, dims, st.floats(1e-3, 1e3))
def test_crb_power_scaling(seed, n, a):
    rng = np.random.default_rng(seed)
    W, D = crandn(rng, n, n), crandn(rng, n, n)
    nm = NoiseModel(1.0, float(rng.uniform(0.1, 10)))
    assert np.isclose(compute_crb(np.sqrt(a) * W, D, nm), compute_crb(W, D, nm) / a, rtol=1e-10)


@CASES
@given(seeds, dims, st.integers(1, 6), st.integers(1, 6))
def test_trace_inequality(seed, n, ra, rb):
    rng = np.random.default_rng(seed)
    A, B = random_psd(rng, n, min(ra, n)), random_psd(rng, n, min(rb, n))
    a = np.sort(np.linalg.eigvalsh(A))[::-1]
    b = np.sort(np.linalg.eigvalsh(B))[::-1]
    assert abs(np.trace(A @ B)) <= np.dot(a, b) + 1e-10 * max(1.0, np.dot(a, b))


@CASES
@given(seeds, st.integers(1, 30))
def test_ellipsoid_determinant_recurrence(seed, steps):
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((2, 2))
    state = EllipsoidState(rng.standard_normal(2), L @ L.T + 0.1 * np.eye(2))
    for _ in range(steps):
        before = np.linalg.det(state.shape_inverse)
        state = ellipsoid_step(state, rng.standard_normal(2))
        assert np.isclose(np.linalg.det(state.shape_inverse) / before, 16 / 27, rtol=1e-10)


@CASES
@given(seeds, dims, st.floats(0.0, 1.0), st.floats(0.1, 10.0))
def test_single_symbol_active_constraint_is_tight(seed, n, t, P_T):
    rng = np.random.default_rng(seed)
    comm = eigen_basis(random_psd(rng, n))
    sensing = eigen_basis(random_psd(rng, n))
    xi1 = sensing.top
    w_c, w_s = comm.vectors[:, 0], sensing.vectors[:, 0]
    lo = P_T * xi1 * abs(np.vdot(w_c, w_s)) ** 2
    gamma_1 = lo + t * (P_T * xi1 - lo)
    w = single_symbol_precoder(comm, sensing, gamma_1, P_T)
    assert np.isclose(np.vdot(w, w).real, P_T, rtol=1e-10)
    # the active branch puts exactly gamma_1 / Xi_1 on the sensing direction
    assert np.isclose(xi1 * abs(np.vdot(w_s, w)) ** 2, gamma_1, rtol=1e-9, atol=1e-12)


@CASES
@given(seeds, dims)
def test_fisher_invariant_to_right_unitary(seed, n):
    rng = np.random.default_rng(seed)
    W, D = crandn(rng, n, n), crandn(rng, n, n)
    nm = NoiseModel()
    assert np.isclose(fisher_information(W @ random_unitary(rng, n), D, nm), fisher_information(W, D, nm),
                      rtol=1e-10)


@CASES
@given(seeds, dims, st.floats(1e-3, 10.0))
def test_mmse_sinr_dominates_zf(seed, n, sigma_sq):
    rng = np.random.default_rng(seed)
    H, W = crandn(rng, n, n), crandn(rng, n, n)
    nm = NoiseModel(sigma_sq)
    zf = sinr_per_symbol(W, H, nm, "zf")
    mmse = sinr_per_symbol(W, H, nm, "mmse")
    assert np.all(mmse >= zf * (1 - 1e-9))


@CASES
@given(seeds, dims)
def test_construct_v_equalizes(seed, n):
    rng = np.random.default_rng(seed)
    Z = random_psd(rng, n) + 0.05 * np.eye(n)
    sigma = rng.uniform(0.1, 3.0, n)
    V = construct_v(sigma, Z)
    A_inv = np.linalg.inv(sigma[:, None] * Z * sigma[None, :])
    d = np.real(np.diag(V.conj().T @ A_inv @ V))
    assert np.ptp(d) <= 1e-8 * d.mean()


@CASES
@given(seeds, dims)
def test_eigen_basis_contract(seed, n):
    rng = np.random.default_rng(seed)
    G = random_psd(rng, n, int(rng.integers(1, n + 1)))
    b = eigen_basis(G)
    assert isinstance(b, EigenBasis)
    assert np.all(np.diff(b.values) <= 0) and np.all(b.values >= 0)
    assert np.linalg.norm(b.vectors.conj().T @ b.vectors - np.eye(n)) < 1e-10
    assert np.linalg.norm(b.reconstruct() - G) <= 1e-10 * np.linalg.norm(G)
