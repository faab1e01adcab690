import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from bjj.conditional import single_loss_conditional
from bjj.dynamics import BlockDensity, SectorDensity, formation_time, lossless_evolve
from bjj.fock import ModelParams, SectorState, angular_momentum_matrices, coherent_state
from bjj.metrics import (FisherMode, fidelity, husimi, husimi_local_maxima, qfi_matrix,
                         qfi_optimal, qfi_total, shot_noise_report)

T2 = math.pi / 2


def sd(state):
    return SectorDensity.from_state(state)


def cat(N):
    p = ModelParams.from_chis(1.0, -1.0)
    return lossless_evolve(coherent_state(N, math.pi / 2, 0), T2, p)


def random_density(N, rank, rng):
    X = rng.normal(size=(N + 1, rank)) + 1j * rng.normal(size=(N + 1, rank))
    m = X @ X.conj().T
    return m / np.trace(m).real


class TestQfiMatrix:
    @pytest.mark.parametrize("N", [1, 7, 40, 100])
    def test_coherent_state(self, N):
        res = qfi_optimal(sd(coherent_state(N, math.pi / 2, 0)))
        assert res.value == pytest.approx(N, rel=1e-10)
        assert abs(res.direction[0]) < 1e-9
        assert res.tie_broken
        np.testing.assert_allclose(res.direction, [0, 1, 0], atol=1e-9)

    def test_cat(self):
        assert qfi_optimal(sd(cat(100))).value == pytest.approx(1e4, rel=1e-6)

    def test_fock(self):
        a = np.zeros(11, dtype=complex)
        a[5] = 1
        assert qfi_optimal(sd(SectorState(10, a))).value == pytest.approx(60.0, rel=1e-12)

    def test_maximally_mixed(self):
        res = qfi_optimal(SectorDensity(6, np.eye(7) / 7))
        assert res.value == 0.0
        assert np.linalg.norm(res.direction) == pytest.approx(1.0, abs=1e-12)

    def test_non_hermitian_rejected(self):
        m = np.eye(3, dtype=complex) / 3
        m[0, 1] = 0.1
        with pytest.raises(ValueError):
            qfi_matrix(SectorDensity(2, m))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
    def test_symmetric_psd(self, N, rank, seed):
        F = qfi_matrix(SectorDensity(N, random_density(N, rank, np.random.default_rng(seed))))
        np.testing.assert_allclose(F, F.T, atol=1e-12)
        assert np.linalg.eigvalsh(F).min() >= -1e-9 * max(1.0, np.abs(F).max())

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 30), st.integers(0, 2 ** 32 - 1))
    def test_pure_state_covariance(self, N, seed):
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=N + 1) + 1j * rng.normal(size=N + 1)
        psi /= np.linalg.norm(psi)
        J = angular_momentum_matrices(N)
        mean = [np.vdot(psi, Ja @ psi) for Ja in J]
        cov = np.array([[np.vdot(psi, 0.5 * (Ja @ Jb + Jb @ Ja) @ psi).real - (ma * mb).real
                         for Jb, mb in zip(J, mean)] for Ja, ma in zip(J, mean)])
        F = qfi_matrix(SectorDensity(N, np.outer(psi, psi.conj())))
        np.testing.assert_allclose(F, 4 * cov, atol=1e-10 * max(1.0, N ** 2))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 4), st.floats(-math.pi, math.pi),
           st.integers(0, 2 ** 32 - 1))
    def test_rotation_covariance(self, N, rank, alpha, seed):
        rho = random_density(N, rank, np.random.default_rng(seed))
        Jz = angular_momentum_matrices(N)[2]
        U = scipy.linalg.expm(-1j * alpha * Jz)
        a = qfi_optimal(SectorDensity(N, rho))
        b = qfi_optimal(SectorDensity(N, U @ rho @ U.conj().T))
        assert b.value == pytest.approx(a.value, rel=1e-9, abs=1e-9)
        if not (a.tie_broken or b.tie_broken):
            c, s = math.cos(alpha), math.sin(alpha)
            R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
            rotated = R @ a.direction
            assert min(np.linalg.norm(rotated - b.direction),
                       np.linalg.norm(rotated + b.direction)) < 1e-6


class TestQfiTotal:
    def test_single_block(self):
        rho = BlockDensity.from_state(coherent_state(12, 1.0, 0.4))
        ref = qfi_optimal(rho.blocks[0]).value
        for mode in FisherMode:
            assert qfi_total(rho, mode).value == pytest.approx(ref)

    def test_cat(self):
        assert qfi_total(BlockDensity.from_state(cat(100))).value == pytest.approx(1e4, rel=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1))
    def test_per_sector_dominates(self, n0, seed):
        rng = np.random.default_rng(seed)
        ws = rng.dirichlet(np.ones(n0 // 2 + 1))
        blocks = [SectorDensity(N, w * random_density(N, 2, rng))
                  for N, w in zip(range(n0, -1, -2), ws)]
        rho = BlockDensity(blocks)
        shared = qfi_total(rho, FisherMode.SHARED)
        per = qfi_total(rho, "per_sector")
        assert per.value >= shared.value - 1e-9
        assert np.linalg.norm(shared.direction) == pytest.approx(1.0, abs=1e-12)
        assert shared.value == pytest.approx(sum(w * f for _, f, w in shared.per_sector), rel=1e-10)

    def test_empty_sector_skipped(self):
        rho = BlockDensity([sd(coherent_state(6, math.pi / 2, 0)), SectorDensity(4, np.zeros((5, 5)))])
        assert qfi_total(rho).value == pytest.approx(6.0)


class TestHusimi:
    def test_coherent_peak(self):
        g = husimi(sd(coherent_state(20, math.pi / 2, 0)), 91, 180)
        i, j = np.unravel_index(np.argmax(g.values), g.values.shape)
        assert g.theta_axis[i] == pytest.approx(math.pi / 2)
        assert g.phi_axis[j] == pytest.approx(0.0, abs=1e-12)
        assert g.values.max() == pytest.approx(1 / math.pi, rel=1e-12)
        assert g.values.min() >= 0

    @pytest.mark.parametrize("N", [4, 15])
    def test_normalization_refines(self, N):
        rho = SectorDensity(N, random_density(N, 3, np.random.default_rng(N)))
        coarse = abs(husimi(rho, 31, 60).normalization(N) - 1)
        fine = abs(husimi(rho, 301, 600).normalization(N) - 1)
        assert fine < 1e-4 and fine <= coarse

    def test_protected_two_peaks(self):
        p = ModelParams.from_chis(0.0, -2.0, gamma1=1 / (300 * math.pi))
        block, _ = single_loss_conditional(T2, p, 100)
        peaks = husimi_local_maxima(husimi(block, 91, 360))
        np.testing.assert_allclose(np.sort(peaks), [-math.pi / 2, math.pi / 2], atol=0.05)

    def test_symmetric_flat_profile(self):
        p = ModelParams.from_chis(1.0, -1.0, gamma1=1 / (200 * math.pi), gamma2=1 / (200 * math.pi))
        block, _ = single_loss_conditional(T2, p, 100)
        g = husimi(block, 91, 360)
        row = g.values[45]
        assert row.max() / row.min() < 1.5

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            husimi(sd(coherent_state(2, 1, 0)), 1, 10)


class TestShotNoise:
    def test_cat(self):
        rho = BlockDensity.from_state(cat(100))
        rep = shot_noise_report(rho, qfi_total(rho))
        assert rep["phase_precision"] == pytest.approx(0.01, rel=1e-6)
        assert rep["sub_shot_noise"] is True

    def test_coherent_boundary(self):
        rho = BlockDensity.from_state(coherent_state(30, math.pi / 2, 0))
        F = qfi_total(rho)
        F = type(F)(30.0, F.direction)  # exactly at the shot-noise limit
        assert shot_noise_report(rho, F)["sub_shot_noise"] is False

    def test_mixed(self):
        rho = BlockDensity([SectorDensity(4, np.eye(5) / 5)])
        rep = shot_noise_report(rho, qfi_total(rho))
        assert rep["F"] == 0 and rep["phase_precision"] == math.inf and not rep["sub_shot_noise"]


class TestFidelity:
    def test_pure(self):
        a, b = coherent_state(10, 1.0, 0.0), coherent_state(10, 1.2, 0.3)
        assert fidelity(a.density(), b.density()) == pytest.approx(abs(a.overlap(b)) ** 2, rel=1e-8)
