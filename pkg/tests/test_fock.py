import numpy as np
import pytest

from cqm import (
    CutoffNotConverged,
    InvalidParams,
    ModelParams,
    RegimeError,
    StepTooLarge,
    TruncationLeak,
    auto_cutoff,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    build_squeezed_frame_hamiltonian,
    default_initial_state,
    effective_oscillator,
    evolve,
    evolve_grid,
    finite_frequency_discrepancy,
    generator_qfi,
    generator_qfi_grid,
    inverted_variance,
    optimal_times,
    qfi_g,
    qfi_overlap,
    quadrature_series,
    var_n,
    verify_reciprocal_relation,
    x_mean,
    x_variance,
)
from cqm.fock import HermitianOperator, JointState, quadratures, spin_down_state


def params(g, lam=0.0, omega=1.0, Omega=1e4):
    return ModelParams(omega=omega, Omega=Omega, g=g, lam=lam)


class TestBuilders:
    def test_decoupled_full_hamiltonian_is_diagonal(self):
        p = params(0.0, Omega=7.0, omega=2.0)
        h = build_full_hamiltonian(p, 5).matrix
        assert np.abs(h - np.diag(np.diag(h))).max() == 0.0
        fock_e = 2.0 * np.arange(5)
        expected = np.concatenate([fock_e - 3.5, fock_e + 3.5])
        assert np.allclose(np.diag(h).real, expected)

    def test_quadratic_only_ground_energy_converges_to_bogoliubov(self):
        # boson block of the g = 0 model: lowest eigenvalue -> (omega_bar - omega)/2
        lam = 0.3
        p = params(0.0, lam=lam)
        omega_bar = np.sqrt(1 + 4 * lam)
        errs = []
        for n_cut in (8, 16, 32, 64):
            h = build_full_hamiltonian(p, n_cut).matrix
            boson_block = h[:n_cut, :n_cut] + 0.5 * p.Omega * np.eye(n_cut)
            e0 = np.linalg.eigvalsh(boson_block)[0]
            errs.append(abs(e0 - (omega_bar - 1.0) / 2.0))
        assert errs[-1] < 1e-10
        assert errs[0] > errs[-1]  # convergence sweep actually improves

    def test_hermiticity_of_all_builders(self):
        p = params(0.7, lam=-0.1, Omega=321.0)
        for build in (build_full_hamiltonian, build_squeezed_frame_hamiltonian):
            h = build(p, 24).matrix
            assert np.abs(h - h.conj().T).max() < 1e-12

    def test_squeezed_frame_equals_lab_frame_without_quadratic_term(self):
        p = params(0.9, lam=0.0, Omega=100.0)
        a = build_full_hamiltonian(p, 16).matrix
        b = build_squeezed_frame_hamiltonian(p, 16).matrix
        assert np.abs(a - b).max() < 1e-12

    def test_effective_unit_stiffness_is_harmonic(self):
        h = build_effective_hamiltonian(params(0.0), 60)
        energies, _ = h.eig()
        assert np.allclose(energies[:10], np.arange(10) + 0.5, atol=1e-10)

    def test_effective_gaps_scale_with_sqrt_stiffness(self):
        p = params(0.9)
        eff = effective_oscillator(p)
        energies, _ = build_effective_hamiltonian(p, 120).eig()
        gaps = np.diff(energies[:8])
        assert np.allclose(gaps, eff.omega_bar * np.sqrt(eff.epsilon_g), rtol=1e-9)

    def test_effective_ground_state_is_squeezed_vacuum(self):
        p = params(0.9)
        eff = effective_oscillator(p)
        n_cut = 120
        h = build_effective_hamiltonian(p, n_cut)
        _, vecs = h.eig()
        ground = vecs[:, 0]
        x, _ = quadratures(n_cut)
        xx = ground @ (x @ x).real @ ground
        assert xx == pytest.approx(0.5 / np.sqrt(eff.epsilon_g), rel=1e-9)

    def test_effective_regime_dispatch(self):
        h = build_effective_hamiltonian(params(1.2), 16)  # superradiant: fine
        assert h.dim == 16
        with pytest.raises(RegimeError):
            build_effective_hamiltonian(params(1.0), 16)
        with pytest.raises(InvalidParams):
            build_effective_hamiltonian(params(0.9), 3)

    def test_hermitian_wrapper_rejects_nonhermitian(self):
        with pytest.raises(InvalidParams):
            HermitianOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestEvolve:
    def test_zero_time_identity(self):
        h = build_effective_hamiltonian(params(0.9), 32)
        psi = default_initial_state(32)
        out = evolve(h, psi, 0.0)
        assert np.allclose(out.amplitudes, psi.amplitudes)

    def test_diagonal_hamiltonian_only_rotates_phases(self):
        h = HermitianOperator(np.diag(np.arange(8, dtype=float)))
        amps = np.ones(8) / np.sqrt(8)
        # the uniform state deliberately fills the tail: disable the leak check
        out = evolve(h, amps, 0.37, leak_tol=1.0)
        assert np.allclose(np.abs(out), np.abs(amps))
        assert np.allclose(out, amps * np.exp(-1j * 0.37 * np.arange(8)))

    def test_norm_preserved_on_long_grid(self):
        h = build_effective_hamiltonian(params(0.9), 64)
        psi = default_initial_state(64)
        out = evolve_grid(h, psi, np.linspace(0, 100, 7))
        assert np.abs(np.linalg.norm(out, axis=0) - 1).max() < 1e-12

    def test_truncation_leak_raises(self):
        # strong anti-squeezing in a tiny basis must trip the tail check
        p = params(0.099, lam=-0.2475)
        h = build_effective_hamiltonian(p, 16)
        tau = float(optimal_times(p, 1)[0])
        with pytest.raises(TruncationLeak):
            evolve_grid(h, default_initial_state(16), [tau / 2])

    def test_joint_state_roundtrip(self):
        p = params(0.9, Omega=50.0)
        h = build_squeezed_frame_hamiltonian(p, 24)
        psi = spin_down_state(default_initial_state(), 24)
        out = evolve(h, psi, 1.0)
        assert isinstance(out, JointState)
        assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0, abs=1e-12)


class TestAutoCutoff:
    def test_doubles_until_converged(self):
        calls = []

        def run(n):
            calls.append(n)
            return np.array([1.0 + 4.0 / n])

        # successive values differ by 2/n; rtol 1e-2 is first met at 512
        n_cut, values = auto_cutoff(run, start=8, rtol=1e-2)
        assert calls[0] == 8 and calls == sorted(calls)
        assert n_cut == 512
        assert values[0] == pytest.approx(1.0 + 4.0 / 512)

    def test_raises_when_never_converges(self):
        with pytest.raises(CutoffNotConverged):
            auto_cutoff(lambda n: np.array([np.log(n)]), start=8, max_cut=64, rtol=1e-12)

    def test_leak_restarts_comparison(self):
        def run(n):
            if n < 32:
                raise TruncationLeak("too small")
            return np.array([2.0])

        n_cut, _ = auto_cutoff(run, start=8, rtol=1e-6)
        assert n_cut == 64  # 32 raises nothing; convergence checked at 64

    def test_doubling_changes_stay_below_tolerance_for_dynamics(self):
        # the accepted cutoff of a converged run is insensitive to doubling
        p = params(0.9)
        ts = np.linspace(0.0, 14.0, 9)
        series = quadrature_series(p, ts)
        bigger = quadrature_series(p, ts, n_cut=2 * series.n_cut)
        rel = np.abs(bigger.x_mean - series.x_mean).max() / np.abs(series.x_mean).max()
        assert rel < 1e-6


class TestQfiMethods:
    def test_overlap_zero_time(self):
        assert qfi_overlap(params(0.9), 0.0, dg=1e-4, n_cut=48) == 0.0

    def test_generator_zero_time(self):
        assert generator_qfi(params(0.9), 0.0, n_cut=48) == pytest.approx(0.0, abs=1e-20)

    def test_methods_agree(self):
        p = params(0.9)
        for t in (1.0, 5.0, 12.0):
            a = generator_qfi(p, t)
            b = qfi_overlap(p, t)
            assert b == pytest.approx(a, rel=1e-4)

    def test_overlap_step_halving_consistency(self):
        p = params(0.9)
        t = 5.0
        a = qfi_overlap(p, t, dg=2e-4, n_cut=96)
        b = qfi_overlap(p, t, dg=1e-4, n_cut=96)
        assert b == pytest.approx(a, rel=1e-3)

    def test_overlap_step_too_large(self):
        p = params(0.099, lam=-0.2475)
        with pytest.raises(StepTooLarge):
            qfi_overlap(p, 1000.0, dg=5e-3, n_cut=512)

    def test_generator_grid_matches_scalar(self):
        p = params(0.9)
        grid = generator_qfi_grid(p, [2.0, 5.0], n_cut=96)
        assert grid[0] == pytest.approx(generator_qfi(p, 2.0, n_cut=96), rel=1e-12)
        assert grid[1] == pytest.approx(generator_qfi(p, 5.0, n_cut=96), rel=1e-12)

    def test_generator_regime_guard(self):
        with pytest.raises(RegimeError):
            generator_qfi(params(1.2), 1.0)

    def test_closed_form_is_asymptotic_to_generator(self):
        # residual shrinks with distance to criticality at fixed sqrt(eps)*t
        state = default_initial_state()
        rels = []
        for eps_g_target, n_cut in ((0.08, 256), (0.02, 1024)):
            g = np.sqrt(1 - eps_g_target)
            p = params(g)
            eff = effective_oscillator(p)
            t = np.pi / np.sqrt(eff.epsilon)
            exact = generator_qfi(p, t, n_cut=n_cut)
            approx = qfi_g(p, t, var_n(state, p)).value
            rels.append(abs(approx - exact) / exact)
        assert rels[1] < rels[0]


class TestReciprocalRelation:
    def test_reference_point(self):
        assert verify_reciprocal_relation(params(0.9), 60) < 1e-9

    def test_free_oscillator_limit(self):
        assert verify_reciprocal_relation(params(0.0), 60) < 1e-9

    def test_tuned_point(self):
        assert verify_reciprocal_relation(params(0.09, lam=-0.2475), 60) < 1e-9

    def test_regime_guard(self):
        with pytest.raises(RegimeError):
            verify_reciprocal_relation(params(1.5), 40)


class TestCrossEngine:
    def test_x_mean_tracks_closed_form(self):
        p = params(0.9)
        tau = float(optimal_times(p, 1)[0])
        ts = np.linspace(0, 2 * tau, 25)
        series = quadrature_series(p, ts)
        assert np.abs(series.x_mean - x_mean(p, ts)).max() < 1e-8

    def test_variance_tracks_closed_form(self):
        p = params(0.9)
        ts = np.linspace(0, 12, 17)
        series = quadrature_series(p, ts)
        assert np.abs(series.x_var - x_variance(p, ts)).max() < 1e-8

    def test_inverted_variance_tracks_closed_form(self):
        p = params(0.9)
        ts = np.linspace(0.5, 12, 9)
        series = quadrature_series(p, ts)
        icl = inverted_variance(p, ts)
        assert np.abs(series.inv_var - icl).max() / np.abs(icl).max() < 1e-6


class TestFiniteFrequency:
    def test_discrepancy_shrinks_with_frequency_ratio(self):
        p = params(0.9)
        d_small = finite_frequency_discrepancy(p, 1e2)
        d_large = finite_frequency_discrepancy(p, 1e3)
        assert abs(d_large) < abs(d_small) < 1.0

    def test_eta_floor(self):
        with pytest.raises(InvalidParams):
            finite_frequency_discrepancy(params(0.9), 5.0)

    def test_full_model_tracks_closed_form_at_large_eta(self):
        # joint-space mean over the first period deviates by O(1/eta):
        # eta * deviation is a stable constant across a decade of eta
        p0 = params(0.9)
        tau1 = float(optimal_times(p0, 1)[0])
        ts = np.linspace(0.0, tau1, 13)
        closed = x_mean(p0, ts)
        rels = {}
        for eta in (1e3, 1e4):
            p = params(0.9, Omega=eta)
            series = quadrature_series(
                p, ts, builder=build_squeezed_frame_hamiltonian, joint=True
            )
            rels[eta] = np.abs(series.x_mean - closed).max() / np.abs(closed).max()
        assert rels[1e3] < 0.1
        assert 7.0 < rels[1e3] / rels[1e4] < 14.0


class TestClosedFormAsymptoticAtLongTime:
    def test_ten_percent_agreement_near_criticality(self):
        # tuned weak-coupling point at the long-time scale of the QFI curves
        from cqm import var_n as _var_n

        p = params(0.099, lam=-0.2475)
        state = default_initial_state()
        exact = generator_qfi(p, 1000.0, rtol=2e-3)
        approx = qfi_g(p, 1000.0, _var_n(state, p)).value
        assert abs(approx - exact) / exact < 0.10
