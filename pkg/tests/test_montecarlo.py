import numpy as np
import pytest

from ddisac.errors import InvalidDimensionError, SingularChannelError
from ddisac.metrics import NoiseModel, average_ber, qfunc, sinr_per_symbol
from ddisac.montecarlo import BerEstimate, SimConfig, block_rng, mmse_equalizer, simulate_ber, zf_equalizer
from ddisac.otfs import (
    OtfsGrid,
    dd_channel,
    doppler_derivative_channel,
    random_path_set,
    time_domain_channel,
)
from ddisac.qam import QamConstellation, qam_demap_hard, qam_map
from ddisac.solver import SolverConfig, channel_bases, gamma_range, solve_algorithm1

QPSK = QamConstellation(4)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def within_ci(est, expected, k=3.0):
    return abs(est.ber - expected) <= k * est.ci95_halfwidth


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(0)
    with pytest.raises(ValueError):
        SimConfig(10, equalizer="ml")
    with pytest.raises(ValueError):
        SimConfig(10, target_error_events=0)


def test_estimate_from_counts():
    est = BerEstimate.from_counts(25, 1000, 10)
    assert est.ber == 0.025
    assert est.ci95_halfwidth == pytest.approx(1.96 * np.sqrt(0.025 * 0.975 / 1000), rel=1e-3)
    assert BerEstimate.from_counts(0, 100, 1).ci95_halfwidth == 0.0


@pytest.mark.parametrize("equalizer", ["zf", "mmse"])
@pytest.mark.parametrize("order", [4, 16])
def test_noiseless_is_error_free(equalizer, order):
    rng = np.random.default_rng(order)
    H, W = crandn(rng, 16, 16), crandn(rng, 16, 16)
    sim = SimConfig(100, seed=1, equalizer=equalizer, constellation=QamConstellation(order),
                    noise=NoiseModel(1e-20))
    est = simulate_ber(H, W, sim)
    assert est.bit_errors == 0 and est.blocks == 100
    assert est.bits_total == 100 * 16 * QamConstellation(order).bits_per_symbol


def test_identity_link_matches_analytic():
    nm = NoiseModel(0.5)
    sim = SimConfig(7813, seed=3, noise=nm, target_error_events=None)
    est = simulate_ber(np.eye(64), np.eye(64), sim)
    assert est.bits_total >= 1_000_000
    expected = average_ber(sinr_per_symbol(np.eye(64), np.eye(64), nm), QPSK)
    assert expected == pytest.approx(QPSK.alpha * qfunc(np.sqrt(QPSK.beta * 2.0)))
    assert within_ci(est, expected)


def test_single_symbol_awgn():
    rng = np.random.default_rng(4)
    n = 1_000_000
    bits = rng.integers(0, 2, 2 * n)
    x = qam_map(bits, QPSK)
    sigma_sq = 0.5
    y = x + np.sqrt(sigma_sq / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    errors = int(np.count_nonzero(qam_demap_hard(y, QPSK) != bits))
    est = BerEstimate.from_counts(errors, bits.size, n)
    assert within_ci(est, QPSK.alpha * qfunc(np.sqrt(QPSK.beta / sigma_sq)))


def test_proposed_precoder_matches_analytic():
    grid = OtfsGrid(4, 4)
    rng = np.random.default_rng(5)
    h_c = dd_channel(random_path_set(rng, 3, 3, 1.5), grid)
    h_dot_paths = random_path_set(rng, 1, 3, 1.5)
    h_dot = doppler_derivative_channel(h_dot_paths[0], grid)
    comm, sensing = channel_bases(h_c, h_dot)
    P_T = 16.0
    lo, hi = gamma_range(comm, sensing, h_dot, P_T)
    cfg = SolverConfig(P_T, gamma_1=lo + 0.3 * (hi - lo))
    # every symbol sees SINR = MN / (sigma^2 tr) after equalization; target SINR 4
    objective = solve_algorithm1(h_c, h_dot, cfg, QPSK, NoiseModel(1e-9)).objective
    nm = NoiseModel(16 / (4.0 * objective))
    sol = solve_algorithm1(h_c, h_dot, cfg, QPSK, nm)
    assert sol.feasible
    expected = average_ber(sinr_per_symbol(sol.W, h_c.matrix, nm), QPSK)
    est = simulate_ber(h_c, sol.W, SimConfig(4000, seed=6, noise=nm, target_error_events=None))
    assert 1e-3 < expected < 0.2
    assert within_ci(est, expected)


class TestMmse:
    def test_zf_limit(self):
        rng = np.random.default_rng(7)
        H, W = crandn(rng, 6, 6), crandn(rng, 6, 6)
        Q = mmse_equalizer(H, W, NoiseModel(1e-12))
        assert np.allclose(Q @ H @ W, np.eye(6), atol=1e-6)

    def test_scalar_form(self):
        assert np.allclose(mmse_equalizer(np.eye(4), np.eye(4), NoiseModel(0.25)), np.eye(4) / 1.25)

    def test_local_optimality(self):
        rng = np.random.default_rng(8)
        H, W = crandn(rng, 4, 4), crandn(rng, 4, 4)
        nm = NoiseModel(0.3)
        HW = H @ W

        def mse(Q):
            # expected squared error for unit-power i.i.d. symbols
            E = Q @ HW - np.eye(4)
            return np.real(np.vdot(E, E)) + nm.sigma_c_sq * np.real(np.vdot(Q, Q))

        Q = mmse_equalizer(H, W, nm)
        base = mse(Q)
        for _ in range(100):
            assert mse(Q + 1e-3 * crandn(rng, 4, 4)) > base


class TestReproducibility:
    def setup_method(self):
        rng = np.random.default_rng(9)
        self.H, self.W = crandn(rng, 16, 16), np.eye(16)

    def test_deterministic(self):
        sim = SimConfig(300, seed=42, noise=NoiseModel(0.2))
        assert simulate_ber(self.H, self.W, sim) == simulate_ber(self.H, self.W, sim)

    def test_seed_changes_result(self):
        a = simulate_ber(self.H, self.W, SimConfig(300, seed=1, noise=NoiseModel(0.2)))
        b = simulate_ber(self.H, self.W, SimConfig(300, seed=2, noise=NoiseModel(0.2)))
        assert a != b

    @pytest.mark.parametrize("equalizer", ["zf", "mmse"])
    def test_batch_size_independent(self, equalizer):
        runs = [simulate_ber(self.H, self.W, SimConfig(200, seed=5, equalizer=equalizer, noise=NoiseModel(0.2),
                                                       target_error_events=None, batch=b))
                for b in (1, 7, 256)]
        assert runs[0] == runs[1] == runs[2]

    def test_block_rng_is_pure(self):
        assert np.array_equal(block_rng(3, 17).integers(0, 1 << 30, 8), block_rng(3, 17).integers(0, 1 << 30, 8))

    def test_early_stop(self):
        est = simulate_ber(self.H, self.W, SimConfig(5000, seed=5, noise=NoiseModel(0.5), target_error_events=100,
                                                     batch=8))
        assert est.bit_errors >= 100 and est.blocks < 5000


def test_time_domain_matches_dd_statistics():
    grid = OtfsGrid(4, 4)
    rng = np.random.default_rng(10)
    paths = random_path_set(rng, 3, 3, 1.5)
    H_T = time_domain_channel(paths, grid)
    H = dd_channel(paths, grid)
    W = np.eye(16)
    nm = NoiseModel(0.05)
    sim = SimConfig(3000, seed=11, noise=nm, target_error_events=None)
    dd = simulate_ber(H, W, sim)
    td = simulate_ber(H, W, sim, time_domain=(H_T, grid))
    assert 0.01 < dd.ber < 0.3
    assert abs(dd.ber - td.ber) < 3 * np.hypot(dd.ci95_halfwidth, td.ci95_halfwidth)
    # a different noise realisation, so not bit-identical
    assert dd.bit_errors != td.bit_errors


def test_errors():
    with pytest.raises(SingularChannelError):
        zf_equalizer(np.diag([1.0, 0.0]), np.eye(2))
    with pytest.raises(SingularChannelError):
        simulate_ber(np.diag([1.0, 0.0]), np.eye(2), SimConfig(1))
    with pytest.raises(InvalidDimensionError):
        simulate_ber(np.eye(4), np.eye(3), SimConfig(1))
    with pytest.raises(InvalidDimensionError):
        simulate_ber(np.eye(4), np.eye(4), SimConfig(1), time_domain=(np.eye(4), OtfsGrid(3, 3)))
