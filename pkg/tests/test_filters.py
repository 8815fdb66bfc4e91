import numpy as np
import pytest

from krrapsp import (
    Cgrrf,
    HalfSpace,
    KrrApsp,
    KrrParams,
    Nlms,
    Rls,
    SymMatrix,
    SysIdConfig,
    SysIdScenario,
    cg_solve,
    krylov_basis,
    project_half_space,
    project_subspace,
)
from krrapsp.linalg import BasisMatrix

from conftest import random_orthonormal, random_spd
from oracles import energy_norm_best_approx, least_squares_fit, reference_parallel_update


def drive_to_basis(filt, scenario_samples):
    """Feed samples until the filter owns a basis; returns remaining samples."""
    it = iter(scenario_samples)
    for s in it:
        filt.step(s.u, s.d)
        if filt.basis is not None:
            break
    return it


class TestKrrParams:
    def test_weight_validation(self):
        with pytest.raises(ValueError):
            KrrParams(rank=3, projections=2, weights=(0.7, 0.7))
        with pytest.raises(ValueError):
            KrrParams(rank=3, projections=2, weights=(1.0,))

    def test_step_size_range(self):
        with pytest.raises(ValueError):
            KrrParams(rank=3, step_size=2.5)

    def test_uniform_default(self):
        p = KrrParams(rank=3, projections=4)
        assert np.allclose(p.weights, 0.25)


class TestKrrApsp:
    def test_rank_exceeds_length(self):
        with pytest.raises(ValueError):
            KrrApsp(KrrParams(rank=60), 50)

    def test_passthrough_before_maturity(self):
        params = KrrParams(rank=2, projections=1, refresh_period=10 ** 6)
        filt = KrrApsp(params, 8)
        rng = np.random.default_rng(0)
        for _ in range(7):
            out = filt.step(rng.standard_normal(8), 1.0)
            assert out.y == 0.0 and not out.updated
            assert np.array_equal(out.h_full, np.zeros(8))
        assert filt.basis is None
        filt.step(rng.standard_normal(8), 1.0)
        assert filt.basis is not None

    def test_nlms_reduction_equivalence(self):
        # q=1, r=1, rho=0: the reduced update is the half-step NLMS recursion
        params = KrrParams(rank=4, projections=1, error_dim=1, rho=0.0,
                           refresh_period=10 ** 6, step_size=0.4)
        n = 20
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=15.0, seed=9))
        h_oracle = None
        worst = 0.0
        for s in scen.samples(400):
            pre_basis = filt.basis
            filt.step(s.u, s.d)
            if filt.basis is None:
                continue
            if pre_basis is None:
                # basis built this step: the update already ran in it
                basis_used = filt.basis
                h_oracle = np.zeros(basis_used.rank)
            else:
                basis_used = pre_basis
            ut = basis_used.matrix.T @ s.u
            err = s.d - float(ut @ h_oracle)
            energy = float(ut @ ut)
            if energy > 0.0 and err != 0.0:
                h_oracle = h_oracle + (params.step_size / 2.0) * (err / energy) * ut
            worst = max(worst, float(np.max(np.abs(h_oracle - filt.h_tilde))))
        assert worst <= 1e-12

    def test_all_within_rho_is_bitwise_noop(self):
        params = KrrParams(rank=3, projections=2, rho=1e9, refresh_period=10 ** 6)
        n = 10
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=15.0, seed=4))
        samples = list(scen.samples(40))
        for s in samples[:n + 1]:
            filt.step(s.u, s.d)
        frozen = filt.h_tilde.copy()
        for s in samples[n + 1:]:
            out = filt.step(s.u, s.d)
            assert not out.updated
            assert np.array_equal(filt.h_tilde, frozen)

    def test_matches_direct_projection_oracle(self, rng):
        # Table-style efficient path vs explicit subgradient projections
        for trial in range(25):
            n = int(rng.integers(6, 13))
            d = int(rng.integers(2, 5))
            q = int(rng.integers(1, 4))
            r = int(rng.integers(1, 3))
            rho = float(rng.uniform(0.0, 0.3))
            lam = float(rng.uniform(0.1, 1.9))
            params = KrrParams(rank=d, projections=q, error_dim=r, rho=rho,
                               refresh_period=10 ** 6, step_size=lam)
            filt = KrrApsp(params, n)
            ring = []
            for k in range(n + q + r + 6):
                u = rng.standard_normal(n)
                dv = float(rng.standard_normal())
                ring.insert(0, (u, dv))
                ring = ring[:q + r - 1]
                predicted = None
                if filt.basis is not None and len(ring) == q + r - 1:
                    cols = [filt.basis.matrix.T @ uu for uu, _ in ring]
                    dvals = [x for _, x in ring]
                    predicted, _, _ = reference_parallel_update(
                        filt.h_tilde, cols, dvals, q, r, rho, lam,
                        params.weights, project_half_space, HalfSpace)
                tag = filt.basis.build_tag if filt.basis is not None else None
                filt.step(u, dv)
                if predicted is not None and filt.basis.build_tag == tag:
                    assert np.max(np.abs(predicted - filt.h_tilde)) <= 1e-11

    def test_single_projection_relaxation_is_one(self):
        params = KrrParams(rank=3, projections=1, rho=0.0,
                           refresh_period=10 ** 6, step_size=1.0)
        n = 8
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=10.0, seed=2))
        for s in scen.samples(30):
            filt.step(s.u, s.d)
        assert filt.last_relaxation is not None
        assert abs(filt.last_relaxation - 1.0) <= 1e-12

    def test_relaxation_at_least_one(self, rng):
        params = KrrParams(rank=4, projections=3, rho=0.01,
                           refresh_period=10 ** 6, step_size=0.5)
        n = 12
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=10.0, seed=6))
        seen = 0
        for s in scen.samples(300):
            out = filt.step(s.u, s.d)
            if out.updated:
                seen += 1
                assert filt.last_relaxation >= 1.0 - 1e-12
        assert seen > 50

    def test_range_confinement(self):
        params = KrrParams(rank=4, projections=3, rho=0.05, refresh_period=7,
                           step_size=0.8)
        n = 16
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=15.0, seed=3))
        for s in scen.samples(200):
            pre_basis = filt.basis
            out = filt.step(s.u, s.d)
            if filt.basis is None:
                continue
            bound = 1e-9 * (1.0 + float(np.linalg.norm(filt.h_tilde)))
            # h_full is expressed in the basis active during the update
            basis_used = pre_basis if pre_basis is not None else filt.basis
            resid = out.h_full - project_subspace(out.h_full, basis_used)
            assert np.linalg.norm(resid) <= bound
            coeff = filt.coefficients
            resid2 = coeff - project_subspace(coeff, filt.basis)
            assert np.linalg.norm(resid2) <= bound

    def test_update_rate_is_exact_fraction(self):
        params = KrrParams(rank=3, projections=2, rho=0.05, refresh_period=10,
                           step_size=0.5)
        n = 10
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=10.0, seed=8))
        flags = []
        for s in scen.samples(150):
            flags.append(filt.step(s.u, s.d).updated)
        assert filt.update_rate == sum(flags) / len(flags)
        assert list(filt.update_flags) == flags

    def test_zero_direction_skip_diagnostic(self):
        # identical regressor with conflicting outputs: the subgradient
        # vanishes on a violated set and the index is skipped
        rho = 1.0e9
        params = KrrParams(rank=2, projections=1, error_dim=2, rho=rho,
                           refresh_period=10 ** 6, step_size=1.0)
        n = 6
        filt = KrrApsp(params, n)
        rng = np.random.default_rng(5)
        for _ in range(n + 2):
            filt.step(rng.standard_normal(n), float(rng.standard_normal()))
        assert filt.basis is not None
        assert np.array_equal(filt.h_tilde, np.zeros(filt.basis.rank))
        u = rng.standard_normal(n)
        delta = 30000.0  # single-sample error stays inside rho, the pair outside
        filt.step(u, -delta)
        before = filt.h_tilde.copy()
        out = filt.step(u, delta)
        assert filt.skipped_zero_direction == 1
        assert not out.updated
        assert np.array_equal(filt.h_tilde, before)

    def test_reduced_full_projection_consistency(self, rng):
        # projecting in reduced coordinates and in the full space through
        # the range projector give the same point
        for _ in range(20):
            n, d, r = 9, 4, 2
            basis = BasisMatrix(random_orthonormal(n, d, rng))
            h_t = rng.standard_normal(d)
            h = basis.matrix @ h_t
            u = rng.standard_normal((n, r))
            dv = rng.standard_normal(r)
            e = u.T @ h - dv
            g = float(e @ e)  # rho = 0
            if g <= 0:
                continue
            s_full = 2.0 * (u @ e)
            qs = project_subspace(s_full, basis)
            p_full = h - (g / float(qs @ qs)) * qs
            s_red = 2.0 * ((basis.matrix.T @ u) @ e)
            p_red = project_half_space(
                h_t, HalfSpace(normal=s_red, offset=g, anchor=h_t))
            assert np.max(np.abs(basis.matrix @ p_red - p_full)) <= 1e-10

    def test_h0_projected_into_first_basis(self):
        from krrapsp import CorrelationEstimator

        n = 8
        rng = np.random.default_rng(11)
        h0 = rng.standard_normal(n)
        # huge rho: no update fires, so h_tilde stays at its initialization
        params = KrrParams(rank=3, projections=1, refresh_period=10 ** 6, rho=1e9)
        filt = KrrApsp(params, n, h0=h0)
        ghost = CorrelationEstimator("toeplitz", n, params.forgetting)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=15.0, seed=12))
        for s in scen.samples(n + 2):
            ghost.update(s.u, s.d)
            filt.step(s.u, s.d)
            if filt.basis is not None:
                break
        expected_basis = krylov_basis(ghost.r_matrix(), ghost.p_vector(), 3)
        assert np.allclose(filt.basis.matrix, expected_basis.matrix, atol=1e-12)
        assert np.allclose(filt.h_tilde, expected_basis.matrix.T @ h0, atol=1e-12)


class TestRebase:
    def _mature_filter(self, n=10, rank=3):
        params = KrrParams(rank=rank, projections=2, refresh_period=10 ** 6,
                           rho=0.05, step_size=0.5)
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=15.0, seed=21))
        for s in scen.samples(n + 5):
            filt.step(s.u, s.d)
        assert filt.basis is not None
        return filt

    def test_same_basis_noop(self):
        filt = self._mature_filter()
        before = filt.h_tilde.copy()
        filt.rebase(filt.basis)
        assert np.max(np.abs(filt.h_tilde - before)) <= 1e-12

    def test_equal_rank_matches_transition_map(self, rng):
        filt = self._mature_filter()
        old = filt.basis
        h_full_old = old.matrix @ filt.h_tilde
        new = BasisMatrix(random_orthonormal(filt.n, old.rank, rng), build_tag=99)
        phi_image = new.matrix @ (old.matrix.T @ h_full_old)
        filt.rebase(new)
        assert np.max(np.abs(new.matrix @ filt.h_tilde - phi_image)) <= 1e-11

    def test_norm_never_grows(self, rng):
        filt = self._mature_filter()
        old_norm = np.linalg.norm(filt.basis.matrix @ filt.h_tilde)
        new = BasisMatrix(random_orthonormal(filt.n, filt.basis.rank, rng))
        filt.rebase(new)
        new_norm = np.linalg.norm(filt.basis.matrix @ filt.h_tilde)
        assert new_norm <= old_norm + 1e-12

    def test_rank_change_reembeds_by_projection(self, rng):
        filt = self._mature_filter(rank=3)
        old = filt.basis
        h_full_old = old.matrix @ filt.h_tilde
        bigger = BasisMatrix(random_orthonormal(filt.n, 4, rng))
        filt.rebase(bigger)
        assert filt.h_tilde.shape == (4,)
        expected = bigger.matrix.T @ h_full_old
        assert np.max(np.abs(filt.h_tilde - expected)) <= 1e-12


class TestCgrrf:
    def test_energy_norm_best_approx_oracle(self, rng):
        a = random_spd(7, rng)
        h_star = rng.standard_normal(7)
        p = a @ h_star
        for rank in (1, 2, 3, 5):
            ours = cg_solve(SymMatrix(a), p, iters=rank)
            oracle = energy_norm_best_approx(a, p, h_star, rank)
            assert np.max(np.abs(ours - oracle)) <= 1e-8

    def test_full_rank_exactness(self, rng):
        a = random_spd(6, rng)
        p = a @ rng.standard_normal(6)
        x = cg_solve(SymMatrix(a), p, iters=6)
        assert np.linalg.norm(a @ x - p) <= 1e-8 * np.linalg.norm(p)

    def test_held_between_refreshes(self):
        n = 8
        filt = Cgrrf(n, rank=3, refresh_period=10)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=15.0, seed=14))
        held = None
        changes = []
        for s in scen.samples(60):
            out = filt.step(s.u, s.d)
            if held is not None:
                changes.append(not np.array_equal(out.h_full, held))
            held = out.h_full
        assert sum(changes) <= 7  # solves only at the refresh cadence

    def test_cumulative_recovers_noiseless_system(self):
        n = 6
        rng = np.random.default_rng(3)
        h_star = rng.standard_normal(n)
        filt = Cgrrf(n, rank=n, refresh_period=1, mode="fullsym")
        for _ in range(80):
            u = rng.standard_normal(n)
            filt.step(u, float(u @ h_star))
        assert np.linalg.norm(filt.coefficients - h_star) <= 1e-6

    def test_exponential_estimator_option(self):
        filt = Cgrrf(6, rank=2, forgetting=0.99)
        assert filt.est.gamma == 0.99

    def test_init_vector_used(self):
        n = 6
        rng = np.random.default_rng(7)
        s_vec = rng.standard_normal(n)
        filt = Cgrrf(n, rank=1, refresh_period=10 ** 6, init_vector=s_vec)
        # rank-1 solve from s stays in the affine line s + span{residual dir}
        for _ in range(n + 1):
            u = rng.standard_normal(n)
            filt.step(u, float(rng.standard_normal()))
        assert filt._solved_once


class TestNlms:
    def test_zero_error_no_update(self, rng):
        filt = Nlms(5, step_size=0.5)
        u = rng.standard_normal(5)
        filt.h = rng.standard_normal(5)
        h_before = filt.h.copy()
        out = filt.step(u, float(filt.h @ u))
        assert not out.updated
        assert np.array_equal(filt.h, h_before)

    def test_one_step_closed_form(self, rng):
        filt = Nlms(4, step_size=1.0)
        u = rng.standard_normal(4)
        out = filt.step(u, 2.0)
        assert out.y == 0.0
        assert np.allclose(filt.h, (2.0 / float(u @ u)) * u, atol=1e-14)

    def test_zero_input_noop(self):
        filt = Nlms(3, step_size=0.5)
        out = filt.step(np.zeros(3), 1.0)
        assert not out.updated

    def test_mult_count_matches_closed_form(self, rng):
        n = 9
        filt = Nlms(n, step_size=0.7)
        out = filt.step(rng.standard_normal(n), 1.0)
        assert out.mults == 3 * n + 2


class TestRls:
    def test_noiseless_persistent_excitation(self, rng):
        n = 8
        h_star = rng.standard_normal(n)
        filt = Rls(n, forgetting=1.0, delta=1e-8)
        us, ds = [], []
        for _ in range(2 * n):
            u = rng.standard_normal(n)
            d = float(u @ h_star)
            us.append(u)
            ds.append(d)
            filt.step(u, d)
        assert np.linalg.norm(filt.coefficients - h_star) <= 1e-6
        ls = least_squares_fit(us, ds)
        assert np.linalg.norm(filt.coefficients - ls) <= 1e-6

    def test_auto_delta_from_first_sample(self, rng):
        filt = Rls(6)
        u = rng.standard_normal(6)
        filt.step(u, 1.0)
        assert abs(filt.delta - 0.01 * float(u @ u) / 6) <= 1e-15


class TestFullCoefficients:
    def test_krr_exposes_basis_times_reduced(self):
        params = KrrParams(rank=2, projections=1, refresh_period=10 ** 6)
        n = 6
        filt = KrrApsp(params, n)
        assert np.array_equal(filt.coefficients, np.zeros(n))
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=15.0, seed=1))
        for s in scen.samples(n + 3):
            out = filt.step(s.u, s.d)
        assert np.allclose(out.h_full, filt.basis.matrix @ filt.h_tilde, atol=1e-14)

    def test_full_rank_filters_return_h(self, rng):
        for filt in (Nlms(4, 0.5), Rls(4, 0.999, 0.01)):
            filt.step(rng.standard_normal(4), 1.0)
            assert np.array_equal(filt.coefficients, filt.h)


class TestMultCounting:
    def test_forced_update_per_step_share_exact(self):
        n, d, q, m = 24, 3, 4, 10 ** 6
        params = KrrParams(rank=d, projections=q, error_dim=1, rho=0.0,
                           refresh_period=m, step_size=0.5)
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=10.0, seed=3))
        expected = 4 * n + d * n + (4 * q + 2) * d + 8 * q + 2
        checked = 0
        for s in scen.samples(120):
            out = filt.step(s.u, s.d)
            if (filt.basis is not None and len(filt._us) == q and out.updated
                    and s.k > n + 2):
                assert out.mults == expected
                checked += 1
        assert checked > 50

    def test_skip_branch_strictly_below(self):
        n, d, q = 24, 3, 4
        params = KrrParams(rank=d, projections=q, error_dim=1, rho=1e9,
                           refresh_period=10 ** 6, step_size=0.5)
        filt = KrrApsp(params, n)
        scen = SysIdScenario(SysIdConfig(n=n, snr_db=10.0, seed=3))
        expected = 4 * n + d * n + (4 * q + 2) * d + 8 * q + 2
        for s in scen.samples(80):
            out = filt.step(s.u, s.d)
            if filt.basis is not None and s.k > n + 2:
                assert out.mults < expected
