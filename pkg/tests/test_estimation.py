import numpy as np
import pytest
from _sim import cascade_setup, element_training, regression_coefficient

from risemi.channels import AgingProfile, gen_bs_ris
from risemi.config import InvalidConfigError, SystemConfig
from risemi.correlation import complex_normal, sample_correlated
from risemi.estimation import (
    aged_error_variances,
    build_pilots,
    compute_stats,
    despread,
    estimation_stats,
    mmse_cascade,
    mmse_direct,
    receive_pilot_cascade,
    receive_pilot_direct,
)

M16 = SystemConfig().replace(m=16)


def stats_kwargs(**over):
    base = dict(a_elem=0.005, beta_d=np.array([1e-9, 2e-9]), beta_r=np.array([1e-6, 3e-6]),
                beta_br=1e-5, kappa=10.0, sigma_e_sq=1e-7, trace_r_e=16.0, p_tau_p=1.2,
                sigma_d_sq=2.5e-13, sigma_c_sq=2.5e-13)
    base.update(over)
    return base


class TestPilots:
    @pytest.mark.parametrize("tau_p,k", [(4, 4), (4, 1), (8, 4), (5, 3)])
    def test_orthonormal(self, tau_p, k):
        psi = build_pilots(tau_p, k).psi
        assert psi.shape == (tau_p, k)
        assert np.allclose(psi.conj().T @ psi, np.eye(k), atol=1e-12, rtol=0)

    def test_too_few_pilots(self):
        with pytest.raises(InvalidConfigError):
            build_pilots(2, 3)


class TestDirect:
    def test_noiseless_single_ue(self, rng):
        pilots = build_pilots(4, 1)
        g = complex_normal(rng, (3, 1))
        y = receive_pilot_direct(g, pilots, 2.0, 0.0, rng)
        assert np.allclose(y, np.sqrt(2.0) * g @ pilots.psi.conj().T, rtol=0, atol=1e-15)

    def test_noiseless_despread_recovers(self, rng):
        pilots = build_pilots(4, 4)
        g = complex_normal(rng, (3, 4))
        y = receive_pilot_direct(g, pilots, 2.0, 0.0, rng)
        for k in range(4):
            assert np.allclose(despread(y, pilots.pilot(k), 2.0), g[:, k], atol=1e-14)

    def test_pure_noise(self, rng):
        pilots = build_pilots(4, 2)
        y = receive_pilot_direct(np.zeros((25_000, 1, 2)), pilots, 1.0, 3.0, rng)
        assert np.mean(np.abs(y) ** 2) == pytest.approx(3.0, rel=0.02)

    def test_despread_linear(self, rng):
        pilots = build_pilots(4, 2)
        y = complex_normal(rng, (3, 4))
        assert np.array_equal(despread(np.zeros((3, 4)), pilots.pilot(0), 1.0), np.zeros(3))
        assert np.allclose(despread(2.5 * y, pilots.pilot(1), 1.0),
                           2.5 * despread(y, pilots.pilot(1), 1.0))

    def test_shrinkage_limits(self):
        y = np.array([1.0 + 1.0j])
        assert mmse_direct(y, 2.0, 0.0, 1.0) == y
        assert mmse_direct(y, 2.0, 2.0, 1.0) == pytest.approx(y / 2)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidConfigError):
            mmse_direct(np.ones(1), 0.0, 1.0, 1.0)

    def test_mse_and_linear_optimality(self, rng):
        beta, sd, p = 2e-9, 2.5e-13, 1.2
        pilots = build_pilots(4, 4)
        g = np.sqrt(beta) * complex_normal(rng, (100_000, 1, 4))
        y = receive_pilot_direct(g, pilots, p, sd, rng)
        yt = despread(y, pilots.pilot(0), p)[:, 0]
        est = mmse_direct(yt, beta, sd, p)
        target = g[:, 0, 0]
        stats = compute_stats(**stats_kwargs(beta_d=np.array([beta]), beta_r=np.array([1e-6]),
                                             p_tau_p=p, sigma_d_sq=sd))
        mse = np.mean(np.abs(target - est) ** 2)
        assert mse == pytest.approx(stats.var_gtilde_d[0], rel=0.02)
        c = regression_coefficient(target, yt)
        best = np.mean(np.abs(target - c * yt) ** 2)
        assert mse <= best * (1 + 1e-3)
        assert c.real == pytest.approx(stats.shrink_d[0], rel=0.02)
        # decomposition and orthogonality
        err = target - est
        assert np.allclose(est + err, target, rtol=1e-10)
        rho = np.abs(np.mean(est * err.conj())) / np.sqrt(np.mean(np.abs(est) ** 2) * mse)
        assert rho < 0.02


class TestStats:
    def test_direct_budget(self):
        s = compute_stats(**stats_kwargs())
        assert np.allclose(s.var_ghat_d + s.var_gtilde_d, s.beta_d, rtol=1e-10)

    def test_cascade_budget(self):
        s = compute_stats(**stats_kwargs())
        residual = s.xi_ck * 2.5e-13 * 2.5e-13 / s.den_c
        assert np.allclose(s.var_ghat_c + s.var_gtilde_c + residual, s.xi_ck, rtol=1e-12)
        assert np.all(s.var_ghat_c <= s.xi_ck)

    def test_nonnegative(self):
        s = compute_stats(**stats_kwargs())
        for name in ("xi_ck", "sigma_e1_sq", "sigma_e2_sq", "sigma_e3_sq", "var_ghat_d",
                     "var_gtilde_d", "var_ghat_c", "var_gtilde_c"):
            assert np.all(getattr(s, name) >= 0)

    def test_q_linear(self):
        q = compute_stats(**stats_kwargs()).q
        assert compute_stats(**stats_kwargs(sigma_e_sq=3e-7)).q == pytest.approx(3 * q, rel=1e-12)
        assert compute_stats(**stats_kwargs(trace_r_e=32.0)).q == pytest.approx(2 * q, rel=1e-12)

    def test_unit_weight_switch(self):
        s = compute_stats(**stats_kwargs(nlos_weight="unit"))
        assert np.allclose(s.xi_ck, 0.005 * np.array([1e-6, 3e-6]) * 1e-5, rtol=1e-12)

    def test_cascade_shrink_limits(self):
        s = compute_stats(**stats_kwargs(sigma_e_sq=0.0, sigma_c_sq=1e-30, sigma_d_sq=1e-30))
        assert np.allclose(s.shrink_c, 1.0, rtol=1e-6)
        assert np.all(mmse_cascade(np.ones(3), compute_stats(**stats_kwargs(a_elem=0.0)).shrink_c[0]) == 0)

    def test_aged_limits(self):
        s = compute_stats(**stats_kwargs())
        d, c = aged_error_variances(s, AgingProfile(0.001), 0)
        assert np.allclose(d, s.var_gtilde_d)
        assert np.allclose(c, s.xi_ck - s.var_ghat_c)
        # first zero of J0 at 2.404825557695773
        n_zero = 2.404825557695773 / (2 * np.pi * 0.001)
        d, c = aged_error_variances(s, AgingProfile(0.001), n_zero)
        assert np.allclose(d, s.beta_d, rtol=1e-10)
        assert np.allclose(c, s.xi_ck, rtol=1e-10)


class TestCascadeTraining:
    def test_noiseless_perfect_direct(self, rng):
        pilots = build_pilots(4, 2)
        g_br = complex_normal(rng, (3, 5))
        g_r = complex_normal(rng, (5, 2))
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, 5))
        g_d = complex_normal(rng, (3, 2))
        out = receive_pilot_cascade(g_d, g_d, g_br, g_r, v, pilots, 1.5, 0.0,
                                    np.zeros((5, 4)), rng)
        assert np.allclose(out, (g_br * v) @ g_r, atol=1e-14)

    def test_no_ris(self, rng):
        pilots = build_pilots(4, 2)
        g_d, ghat = complex_normal(rng, (3, 2)), complex_normal(rng, (3, 2))
        out = receive_pilot_cascade(g_d, ghat, np.zeros((3, 0)), np.zeros((0, 2)),
                                    np.zeros(0), pilots, 1.5, 0.0, np.zeros((0, 4)), rng)
        assert np.allclose(out, g_d - ghat, atol=1e-14)

    def test_q_oracle(self, rng):
        cfg = M16
        ls, corr, stats = cascade_setup(cfg)
        batch, a = 100_000, cfg.a_elem
        pilots = build_pilots(cfg.tau_p, cfg.k_ue)
        g_br = gen_bs_ris(ls.beta_br, ls.kappa, cfg.los_phase_matrix(), rng, size=batch,
                          nlos_scale=a)
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, (batch, cfg.m)))
        emi = np.swapaxes(sample_correlated(a * cfg.emi_power(ls.beta_br), corr, rng,
                                            (batch, cfg.tau_p)), -1, -2)
        zeros = np.zeros((batch, cfg.n_t, cfg.k_ue))
        out = receive_pilot_cascade(zeros, zeros, g_br, np.zeros((batch, cfg.m, cfg.k_ue)), v,
                                    pilots, cfg.p_tau_p, 0.0, emi, rng)
        assert np.mean(np.abs(out[..., 0]) ** 2) == pytest.approx(stats.q, rel=0.03)

    def test_element_estimates(self, rng):
        setup = cascade_setup(M16)
        stats = setup[2]
        _, _, _, g_c, obs = element_training(M16, 0, 20_000, rng, setup)
        est = mmse_cascade(obs, stats.shrink_c[0])
        err = g_c - est
        assert np.mean(np.abs(est) ** 2) == pytest.approx(stats.var_ghat_c[0], rel=0.03)
        # the MSE equals the complement xi - var_ghat_c used by the closed forms
        assert np.mean(np.abs(err) ** 2) == pytest.approx(stats.xi_ck[0] - stats.var_ghat_c[0],
                                                         rel=0.03)
        rho = np.abs(np.mean(est * err.conj())) / np.sqrt(
            np.mean(np.abs(est) ** 2) * np.mean(np.abs(err) ** 2))
        assert rho < 0.02

    def test_aged_cascade_error(self, rng):
        cfg = M16
        setup = cascade_setup(cfg)
        ls, corr, stats = setup
        prof = AgingProfile(0.001)
        g_br, g_r, _, g_c, obs = element_training(cfg, 1, 20_000, rng, setup)
        est = mmse_cascade(obs, stats.shrink_c[1])
        r1 = float(prof.rho1(50))
        innov = sample_correlated(cfg.a_elem * ls.beta_r[1], corr, rng, g_r.shape[0])
        g_r_n = r1 * g_r + prof.complement(r1) * innov
        err = g_br * g_r_n[:, None, :] - r1 * est
        _, var_c = aged_error_variances(stats, prof, 50)
        assert np.mean(np.abs(err) ** 2) == pytest.approx(var_c[1], rel=0.03)

    def test_aged_direct_error(self, rng):
        s = estimation_stats(M16)
        prof = AgingProfile(0.001)
        beta = s.beta_d[0]
        g0 = np.sqrt(beta) * complex_normal(rng, 100_000)
        est = s.shrink_d[0] * (g0 + np.sqrt(M16.sigma_d_sq / M16.p_tau_p)
                               * complex_normal(rng, 100_000))
        r0 = float(prof.rho0(50))
        g_n = r0 * g0 + prof.complement(r0) * np.sqrt(beta) * complex_normal(rng, 100_000)
        var_d, _ = aged_error_variances(s, prof, 50)
        assert np.mean(np.abs(g_n - r0 * est) ** 2) == pytest.approx(var_d[0], rel=0.03)
