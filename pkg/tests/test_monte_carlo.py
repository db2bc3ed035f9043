import numpy as np
import pytest

from pspin import MixtureSpec, closed_form_1rsb
from pspin.errors import PreconditionError, ResourceCapError
from pspin.monte_carlo import (
    clt_check,
    coupled_ground_states,
    energy_gradient,
    eval_energy,
    ground_state,
    sample_disorder,
    sk_eigen_oracle,
    superconcentration_trend,
    variance_identity_check,
)


@pytest.fixture(scope="module")
def mixed_234():
    return MixtureSpec.from_squares({2: 0.5, 3: 0.2, 4: 0.1}, h=0.5)


class TestSampling:
    def test_bitwise_determinism(self, sk):
        d1 = sample_disorder(sk, 10, 1)
        d2 = sample_disorder(sk, 10, 1)
        assert np.array_equal(d1.tensors[2], d2.tensors[2])

    def test_seeds_differ(self, sk):
        d1 = sample_disorder(sk, 10, 1)
        d2 = sample_disorder(sk, 10, 2)
        assert not np.array_equal(d1.tensors[2], d2.tensors[2])

    def test_streams_disjoint(self, sk):
        from pspin.monte_carlo import TAG_COMMON, TAG_SYS1

        a = sample_disorder(sk, 10, 1, stream=TAG_COMMON)
        b = sample_disorder(sk, 10, 1, stream=TAG_SYS1)
        assert not np.array_equal(a.tensors[2], b.tensors[2])

    def test_moments(self, sk):
        d = sample_disorder(sk, 100, 0)
        g = d.tensors[2].ravel()
        assert abs(g.mean()) <= 0.05
        assert abs(g.var() - 1.0) <= 0.05

    def test_covariance_matches_mixture_function(self):
        # Cov(X(sigma), X(tau)) = N xi(R) over disorder draws
        m = MixtureSpec.from_squares({2: 0.5, 4: 1.0 / 24.0})
        N = 20
        rng = np.random.default_rng(5)
        sigma = rng.standard_normal(N)
        sigma *= np.sqrt(N) / np.linalg.norm(sigma)
        tau = rng.standard_normal(N)
        tau *= np.sqrt(N) / np.linalg.norm(tau)
        n_draws = 2000
        xs = np.empty((n_draws, 2))
        for s in range(n_draws):
            d = sample_disorder(m, N, s)
            xs[s] = [eval_energy(d, m, sigma), eval_energy(d, m, tau)]
        prods = xs[:, 0] * xs[:, 1]
        cov = prods.mean() - xs[:, 0].mean() * xs[:, 1].mean()
        se = prods.std(ddof=1) / np.sqrt(n_draws)
        r = float(sigma @ tau) / N
        assert abs(cov - N * m.xi(r, 0)) <= 3 * se

    def test_memory_cap_names_offender(self, mixed_234):
        with pytest.raises(ResourceCapError, match="p=4"):
            sample_disorder(mixed_234, 100, 0, max_scalars=2_000_000)
        with pytest.raises(ResourceCapError, match="p=3"):
            sample_disorder(mixed_234, 100, 0, max_scalars=500_000)


class TestEnergy:
    def test_sign_symmetry_even_mixture(self, sk):
        d = sample_disorder(sk, 30, 3)
        rng = np.random.default_rng(0)
        s = rng.standard_normal(30)
        s *= np.sqrt(30) / np.linalg.norm(s)
        assert eval_energy(d, sk, s) == pytest.approx(eval_energy(d, sk, -s), abs=1e-12)

    def test_p2_quadratic_form_identity(self):
        m = MixtureSpec.sk()
        N = 25
        d = sample_disorder(m, N, 2)
        g = d.tensors[2]
        A = m.coeffs[2] / np.sqrt(N) * (g + g.T)
        rng = np.random.default_rng(1)
        s = rng.standard_normal(N)
        s *= np.sqrt(N) / np.linalg.norm(s)
        assert eval_energy(d, m, s) == pytest.approx(0.5 * s @ A @ s, abs=1e-10)

    def test_field_linearity(self, sk):
        d = sample_disorder(sk, 30, 3)
        m1 = MixtureSpec.sk(h=1.0)
        rng = np.random.default_rng(0)
        s = rng.standard_normal(30)
        s *= np.sqrt(30) / np.linalg.norm(s)
        assert eval_energy(d, m1, s) - eval_energy(d, sk, s) == pytest.approx(
            float(np.sum(s)), abs=1e-10
        )

    def test_off_sphere_rejected(self, sk):
        d = sample_disorder(sk, 10, 0)
        with pytest.raises(PreconditionError):
            eval_energy(d, sk, np.ones(10) * 2.0)

    @pytest.mark.parametrize("k", range(5))
    def test_tangent_gradient_matches_finite_differences(self, mixed_234, k):
        N = 12
        d = sample_disorder(mixed_234, N, 7)
        rng = np.random.default_rng(k)
        x = rng.standard_normal(N)
        x *= np.sqrt(N) / np.linalg.norm(x)
        _, grad = energy_gradient(d, mixed_234, x)
        tangent = grad - (grad @ x / N) * x
        v = rng.standard_normal(N)
        v -= (v @ x / N) * x
        eps = 1e-6
        xp = x + eps * v
        xp *= np.sqrt(N) / np.linalg.norm(xp)
        xm = x - eps * v
        xm *= np.sqrt(N) / np.linalg.norm(xm)
        fd = (eval_energy(d, mixed_234, xp) - eval_energy(d, mixed_234, xm)) / (2 * eps)
        assert fd == pytest.approx(float(tangent @ v), rel=1e-5, abs=1e-7)


class TestGroundState:
    def test_matches_eigen_oracle(self, sk):
        for seed in range(3):
            d = sample_disorder(sk, 120, seed)
            oracle = sk_eigen_oracle(d, sk)
            res = ground_state(d, sk, restarts=4, max_iters=5000, grad_tol=1e-8)
            assert abs(res.energy - oracle) <= 1e-8

    def test_oracle_matches_lapack(self, sk):
        d = sample_disorder(sk, 150, 11)
        g = d.tensors[2]
        A = sk.coeffs[2] / np.sqrt(150) * (g + g.T)
        lapack = 150 * np.linalg.eigvalsh(A)[-1] / 2
        assert sk_eigen_oracle(d, sk) == pytest.approx(lapack, abs=1e-10)

    def test_oracle_requires_pure_sk(self, mixed_234):
        d = sample_disorder(mixed_234, 20, 0)
        with pytest.raises(PreconditionError):
            sk_eigen_oracle(d, mixed_234)

    def test_spectrum_sign_symmetry(self, sk):
        # lambda_max(-A) and lambda_max(A) agree in distribution for this ensemble
        from scipy import stats

        lam_pos, lam_neg = [], []
        for seed in range(50):
            d = sample_disorder(sk, 100, seed)
            g = d.tensors[2]
            A = sk.coeffs[2] / np.sqrt(100) * (g + g.T)
            ev = np.linalg.eigvalsh(A)
            lam_pos.append(ev[-1])
            lam_neg.append(-ev[0])
        assert stats.ks_2samp(lam_pos, lam_neg).statistic <= 0.2

    def test_restart_monotonicity(self, pure3):
        d = sample_disorder(pure3, 30, 5)
        e4 = ground_state(d, pure3, restarts=4, max_iters=800, grad_tol=1e-6).energy
        e16 = ground_state(d, pure3, restarts=16, max_iters=800, grad_tol=1e-6).energy
        assert e16 >= e4 - 1e-12

    def test_sphere_and_reeval_invariants(self, pure3):
        d = sample_disorder(pure3, 30, 5)
        res = ground_state(d, pure3, restarts=4, max_iters=800, grad_tol=1e-6)
        assert abs(float(res.sigma @ res.sigma) / 30 - 1.0) <= 1e-10
        assert res.energy == pytest.approx(eval_energy(d, pure3, res.sigma), rel=1e-10)

    def test_pure3_sanity_band(self, pure3):
        gs = closed_form_1rsb(3).gs_value
        vals = []
        for seed in range(4):
            d = sample_disorder(pure3, 50, seed)
            res = ground_state(d, pure3, restarts=32, max_iters=1500, grad_tol=1e-6)
            vals.append(res.energy_per_site)
        mean = float(np.mean(vals))
        assert gs - 0.15 <= mean <= gs + 0.05


class TestCoupled:
    def test_identical_systems_at_t_one(self, sk):
        res = coupled_ground_states(sk, 60, 1.0, 3, restarts=2, max_iters=2000)
        assert res["overlap"] == pytest.approx(1.0, abs=1e-6)
        assert res["L1"] == pytest.approx(res["L2"], abs=1e-12)

    def test_field_case_r_not_abs(self):
        m = MixtureSpec.sk(h=1.0)
        res = coupled_ground_states(m, 60, 0.5, 3, restarts=2, max_iters=2000)
        assert 0.0 < res["overlap"] < 1.0

    def test_odd_mixture_rejected(self, pure3):
        with pytest.raises(PreconditionError):
            coupled_ground_states(pure3, 20, 0.5, 0)

    def test_t_range(self, sk):
        with pytest.raises(PreconditionError):
            coupled_ground_states(sk, 20, 1.5, 0)


class TestEstimators:
    def test_variance_identity_smoke(self, sk):
        res = variance_identity_check(sk, N=2, n_seeds=6, t_grid=3, max_iters=300)
        assert np.isfinite(res["var_direct"])
        assert np.isfinite(res["var_via_identity"])

    def test_variance_identity_small_run(self, sk):
        res = variance_identity_check(sk, N=40, n_seeds=16, t_grid=4, max_iters=800)
        assert res["z_score"] <= 6.0

    def test_quadrature_stability(self, sk):
        res4 = variance_identity_check(sk, N=30, n_seeds=12, t_grid=4, max_iters=600)
        res8 = variance_identity_check(sk, N=30, n_seeds=12, t_grid=8, max_iters=600)
        assert abs(res4["var_via_identity"] - res8["var_via_identity"]) <= max(
            res4["se_identity"], res8["se_identity"], 0.3
        )

    def test_trend_single_n(self, sk):
        rows = superconcentration_trend(sk, [30], 8, max_iters=600)
        assert np.isfinite(rows[0]["var_over_N"])
        assert rows[0]["stderr"] > 0

    def test_trend_requires_even_no_field_enforced_upstream(self, pure3):
        with pytest.raises(PreconditionError):
            superconcentration_trend(pure3, [20], 4)

    def test_field_case_variance_floor(self):
        # with a field, Var/N does not trend to zero: it stays above a floor
        m = MixtureSpec.sk(h=1.0)
        rows = superconcentration_trend(m, [30, 60], 16, max_iters=800)
        assert all(r["var_over_N"] >= 0.05 for r in rows)

    def test_clt_preconditions(self, sk):
        with pytest.raises(PreconditionError):
            clt_check(sk, 20, 10, 0.25)  # h = 0

    def test_clt_shuffled_scale_control(self):
        # raw (un-normalized) energies are far from standard normal
        from scipy import stats

        m = MixtureSpec.sk(h=1.0)
        energies = np.array(
            [
                ground_state(sample_disorder(m, 40, s), m, 2, 600, 1e-6).energy
                for s in range(30)
            ]
        )
        ks_raw = stats.kstest(energies, "norm").statistic
        assert ks_raw >= 0.5

    def test_clt_scaled_distance_small(self):
        m = MixtureSpec.sk(h=1.0)
        res = clt_check(m, N=40, n_samples=60, chi_value=0.25, max_iters=800)
        assert res["ks_distance"] <= 0.25
        assert 0.7 <= res["scaled_std"] <= 1.3
