import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qtwins.cloner import PHASES
from qtwins.jointmeas import fourier_mub, joint_prob, phase_cycle, quasi_dist_direct
from qtwins.photonics import CountRecord, run_experiment
from qtwins.qmath import is_density_matrix, projector, random_density_matrix, random_ket
from qtwins.tomography import (
    ConvergenceError,
    PhaseReferenceError,
    density_from_dist,
    fidelity,
    linear_inversion,
    measurement_operators,
    mle_fit,
    wavefunction_from_dist,
)

from .oracles import D, H, V

R = (V + 1j * H) / np.sqrt(2)


def exact_dist(psi, d=2):
    mub = fourier_mub(d)
    return phase_cycle([joint_prob(psi, j, mub) for j in PHASES])


class TestWavefunction:
    def test_horizontal(self):
        wf = wavefunction_from_dist(exact_dist(H))
        assert_allclose(wf.amplitudes, [1, 0], atol=1e-14)
        assert wf.norm_constant > 0

    def test_circular(self):
        a = wavefunction_from_dist(exact_dist(R)).amplitudes
        assert_allclose(np.abs(a) ** 2, [0.5, 0.5], atol=1e-14)
        assert abs(abs(np.angle(a[1] / a[0])) - math.pi / 2) < 1e-12

    def test_diagonal_reference_row(self):
        # for x0 = d the amplitudes are D(d, y) / nu with nu real
        dist = exact_dist(R)
        wf = wavefunction_from_dist(dist, 0)
        nu = math.sqrt(abs(dist[0, 0]) ** 2 + abs(dist[0, 1]) ** 2)
        assert_allclose(wf.amplitudes, dist[0] / nu, atol=1e-14)

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_every_reference_row(self, rng, d):
        psi = random_ket(d, rng)
        dist = exact_dist(psi, d)
        phases = []
        for x0 in range(d):
            a = wavefunction_from_dist(dist, x0).amplitudes
            assert abs(abs(np.vdot(a, psi)) ** 2 - 1) < 1e-10
            assert_allclose(np.abs(a), np.abs(psi), atol=1e-10)
            phases.append(a / psi)
        # reference choices differ only by one global phase each
        for p in phases:
            assert np.ptp(np.angle(p * np.conj(p[0]))) < 1e-9

    def test_unusable_reference(self):
        # |a> is orthogonal to |d>: row x0 = d vanishes
        a_state = np.array([1, -1]) / np.sqrt(2)
        with pytest.raises(PhaseReferenceError, match="unusable phase reference"):
            wavefunction_from_dist(exact_dist(a_state), 0)


class TestDensityFromDist:
    def test_h_state(self):
        dist = np.array([[0.5, 0], [0.5, 0]])
        # qubit closed form [[dh+ah, dh-ah], [dv-av, dv+av]]
        closed = np.array([[dist[0, 0] + dist[1, 0], dist[0, 0] - dist[1, 0]], [dist[0, 1] - dist[1, 1], dist[0, 1] + dist[1, 1]]])
        assert_allclose(closed, [[1, 0], [0, 0]])
        assert_allclose(density_from_dist(dist), closed, atol=1e-15)

    def test_flat(self):
        assert_allclose(density_from_dist(np.full((2, 2), 0.25)), np.eye(2) / 2, atol=1e-15)

    def test_qubit_closed_form_random(self, rng):
        rho = random_density_matrix(2, rng)
        q = quasi_dist_direct(rho, fourier_mub(2))
        dh, dv, ah, av = q[0, 0], q[0, 1], q[1, 0], q[1, 1]
        assert_allclose(density_from_dist(q), [[dh + ah, dh - ah], [dv - av, dv + av]], atol=1e-14)

    @pytest.mark.parametrize("d", range(2, 9))
    def test_round_trip(self, rng, d):
        for _ in range(5):
            rho = random_density_matrix(d, rng)
            assert np.linalg.norm(density_from_dist(quasi_dist_direct(rho, fourier_mub(d))) - rho) < 1e-10

    def test_noisy_output_is_hermitian_not_projected(self, rng):
        noisy = quasi_dist_direct(projector(H), fourier_mub(2)) + 0.05 * rng.normal(size=(2, 2))
        raw = density_from_dist(noisy)
        assert_allclose(raw, raw.conj().T)


class TestFidelity:
    def test_self(self, rng):
        rho = random_density_matrix(3, rng)
        f = fidelity(rho, rho)
        assert abs(f.value - 1) < 1e-10 and f.kind == "mixed-vs-mixed"

    def test_clone_bound(self):
        f = fidelity(projector(H), np.diag([5 / 6, 1 / 6]))
        assert abs(f.value - 5 / 6) < 1e-14 and f.kind == "pure-vs-mixed"

    def test_orthogonal(self):
        assert fidelity(H, projector(V)).value == 0

    def test_uhlmann_commuting(self):
        # commuting states: (sum sqrt(p q))^2
        f = fidelity(np.diag([0.7, 0.3]), np.diag([0.4, 0.6])).value
        assert abs(f - (math.sqrt(0.28) + math.sqrt(0.18)) ** 2) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fidelity(np.eye(2) / 2, np.eye(3) / 3)


def expected_counts(rho, mub, scale):
    return run_experiment(rho, mub, scale, sampling=False)


class TestMeasurementOperators:
    @pytest.mark.parametrize("alpha_sq", [1.0, 0.4])
    def test_forward_model(self, rng, alpha_sq):
        mub = fourier_mub(3)
        rho = random_density_matrix(3, rng)
        ops = measurement_operators(mub, alpha_sq)
        for j in PHASES:
            p = np.real(np.einsum("xyab,ba->xy", ops[j], rho))
            assert_allclose(p, joint_prob(rho, j, mub, alpha_sq).probs, atol=1e-13)

    def test_sum_proportional_to_identity(self):
        mub = fourier_mub(4)
        total = sum(o.sum(axis=(0, 1)) for o in measurement_operators(mub, 0.7).values())
        assert_allclose(total, total[0, 0] * np.eye(4), atol=1e-12)


class TestMLE:
    def test_noiseless_h(self):
        mub = fourier_mub(2)
        est = mle_fit(expected_counts(projector(H), mub, 1e6), mub)
        assert np.real(H @ est @ H) > 0.9999

    def test_flat_counts(self):
        mub = fourier_mub(2)
        counts = [CountRecord(j, x, y, 100, 100) for j in PHASES for x in range(2) for y in range(2)]
        assert_allclose(mle_fit(counts, mub), np.eye(2) / 2, atol=1e-6)

    def test_physical_on_adversarial_counts(self, rng):
        mub = fourier_mub(3)
        for _ in range(10):
            n = rng.integers(0, 50, size=36)
            counts = [CountRecord(j, x, y, int(n[k]) + (k % 9 == 0), 0) for k, (j, x, y) in enumerate(
                (j, x, y) for j in PHASES for x in range(3) for y in range(3))]
            est = mle_fit(counts, mub)
            assert is_density_matrix(est)

    def test_deterministic(self, rng):
        mub = fourier_mub(2)
        counts = run_experiment(projector(R), mub, 500, seed=3)
        assert_allclose(mle_fit(counts, mub), mle_fit(counts, mub), atol=0)

    def test_sampled_qudit(self, rng):
        mub = fourier_mub(4)
        psi = random_ket(4, rng)
        est = mle_fit(run_experiment(projector(psi), mub, 1e5, rng=rng), mub)
        assert fidelity(psi, est).value > 0.97

    def test_partial_distinguishability_model(self, rng):
        mub = fourier_mub(2)
        counts = run_experiment(projector(R), mub, 1e6, visibility=0.6, sampling=False)
        est = mle_fit(counts, mub, alpha_sq=0.6)
        assert fidelity(R, est).value > 0.9999

    def test_linear_inversion_exact(self, rng):
        mub = fourier_mub(3)
        rho = random_density_matrix(3, rng)
        assert_allclose(linear_inversion(expected_counts(rho, mub, 1e3), mub), rho, atol=1e-12)

    def test_incomplete_counts(self):
        mub = fourier_mub(2)
        with pytest.raises(ValueError):
            mle_fit(expected_counts(projector(H), mub, 10)[:-1], mub)

    def test_non_convergence_reports_diagnostics(self, rng):
        mub = fourier_mub(3)
        counts = run_experiment(projector(random_ket(3, rng)), mub, 1e3, rng=rng)
        with pytest.raises(ConvergenceError) as err:
            mle_fit(counts, mub, max_iter=1, tol=0.0)
        assert err.value.iterations == 1

    def test_consistency_with_counts(self):
        mub = fourier_mub(2)
        rng = np.random.default_rng(7)
        levels = [1e2, 1e3, 1e4, 1e5]
        means = []
        for m in levels:
            fs = []
            for _ in range(50):
                psi = random_ket(2, rng)
                fs.append(fidelity(psi, mle_fit(run_experiment(projector(psi), mub, m, rng=rng), mub)).value)
            means.append(np.mean(fs))
        inversions = sum(b < a for a, b in zip(means, means[1:]))
        assert inversions <= 1, means
