import numpy as np
import pytest

from krrapsp import (
    TOL,
    BasisMatrix,
    DegenerateCrossCorrelationError,
    HalfSpace,
    SymMatrix,
    cg_solve,
    condition_number,
    krylov_basis,
    project_half_space,
    project_subspace,
    r_norm,
)

from conftest import random_orthonormal, random_spd
from oracles import (
    halfspace_projection_closed_form,
    jacobi_eigenvalues,
    naive_quadratic_form,
    qr_krylov_projector,
)


class TestSymMatrix:
    def test_toeplitz_expansion(self):
        m = SymMatrix(first_row=[2.0, 1.0, 0.0])
        expected = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]])
        assert np.array_equal(m.dense(), expected)

    def test_dense_symmetry_exact(self, rng):
        a = rng.standard_normal((6, 6))
        m = SymMatrix(a)
        d = m.dense()
        assert np.array_equal(d, d.T)

    def test_toeplitz_matvec_matches_dense(self, rng):
        row = rng.standard_normal(8)
        m = SymMatrix(first_row=row)
        x = rng.standard_normal(8)
        assert np.allclose(m.matvec(x), m.dense() @ x, atol=1e-14)

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            SymMatrix(np.ones((2, 3)))


class TestRNorm:
    def test_identity(self):
        assert r_norm([1.0, 0.0], SymMatrix(np.eye(2))) == 1.0

    def test_diagonal(self):
        m = SymMatrix(np.diag([2.0, 3.0]))
        assert abs(r_norm([1.0, 1.0], m) - np.sqrt(5.0)) < 1e-15

    def test_matches_naive_loop(self, rng):
        a = random_spd(5, rng)
        x = rng.standard_normal(5)
        expected = np.sqrt(naive_quadratic_form(x, a))
        assert abs(r_norm(x, SymMatrix(a)) - expected) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            r_norm([1.0, 2.0, 3.0], SymMatrix(np.eye(2)))

    def test_non_psd_rejected(self):
        m = SymMatrix(np.diag([1.0, -1.0]))
        with pytest.raises(ValueError):
            r_norm([0.0, 1.0], m)


class TestKrylovBasis:
    def test_identity_collapse(self):
        basis = krylov_basis(SymMatrix(np.eye(4)), [1.0, 0.0, 0.0, 0.0], 3)
        assert basis.rank == 1
        assert np.allclose(np.abs(basis.matrix[:, 0]), [1, 0, 0, 0], atol=1e-14)

    def test_diagonal_span(self):
        m = SymMatrix(np.diag([1.0, 2.0, 3.0]))
        p = np.ones(3)
        basis = krylov_basis(m, p, 3)
        assert basis.rank == 3
        v = p.copy()
        for _ in range(3):
            resid = v - project_subspace(v, basis)
            assert np.linalg.norm(resid) <= 1e-9
            v = m.matvec(v)

    def test_projector_matches_qr_oracle(self, rng):
        a = random_spd(8, rng)
        p = rng.standard_normal(8)
        basis = krylov_basis(SymMatrix(a), p, 5)
        gram = basis.matrix.T @ basis.matrix
        assert np.max(np.abs(gram - np.eye(5))) <= 1e-10
        oracle = qr_krylov_projector(a, p, 5)
        ours = basis.matrix @ basis.matrix.T
        assert np.max(np.abs(ours - oracle)) <= 1e-8

    def test_degenerate_seed_raises(self):
        with pytest.raises(DegenerateCrossCorrelationError):
            krylov_basis(SymMatrix(np.eye(3)), np.zeros(3), 2)

    def test_truncates_on_dependence(self, rng):
        # rank-2 Krylov space: A has two distinct eigenvalues
        q = random_orthonormal(5, 5, rng)
        a = q @ np.diag([2.0, 2.0, 2.0, 1.0, 1.0]) @ q.T
        p = rng.standard_normal(5)
        basis = krylov_basis(SymMatrix(a), p, 4)
        assert basis.rank == 2

    def test_orthonormality_random(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 12))
            d = int(rng.integers(1, n + 1))
            basis = krylov_basis(SymMatrix(random_spd(n, rng)),
                                 rng.standard_normal(n), d)
            gram = basis.matrix.T @ basis.matrix
            assert np.max(np.abs(gram - np.eye(basis.rank))) <= TOL.orthonormality

    def test_span_invariant(self, rng):
        for _ in range(10):
            n = 9
            a = random_spd(n, rng)
            p = rng.standard_normal(n)
            basis = krylov_basis(SymMatrix(a), p, 4)
            v = p.copy()
            for _ in range(basis.rank):
                resid = np.linalg.norm(v - project_subspace(v, basis))
                assert resid <= TOL.krylov_span_rel * np.linalg.norm(v)
                v = a @ v


class TestHalfSpaceProjection:
    def test_interior_point_unchanged(self, rng):
        x = rng.standard_normal(4)
        hs = HalfSpace(normal=rng.standard_normal(4), offset=-1.0, anchor=x)
        assert np.array_equal(project_half_space(x, hs), x)

    def test_one_dimensional_geometry(self):
        hs = HalfSpace(normal=[2.0, 0.0], offset=4.0, anchor=[0.0, 0.0])
        assert np.allclose(project_half_space([0.0, 0.0], hs), [-2.0, 0.0])

    def test_matches_closed_form_oracle(self, rng):
        for _ in range(30):
            x = rng.standard_normal(6)
            normal = rng.standard_normal(6)
            anchor = rng.standard_normal(6)
            offset = float(rng.standard_normal())
            hs = HalfSpace(normal=normal, offset=offset, anchor=anchor)
            expected = halfspace_projection_closed_form(x, normal, anchor, offset)
            assert np.max(np.abs(project_half_space(x, hs) - expected)) <= 1e-12

    def test_boundary_and_parallel_displacement(self, rng):
        for _ in range(20):
            anchor = rng.standard_normal(5)
            hs = HalfSpace(normal=rng.standard_normal(5),
                           offset=abs(rng.standard_normal()) + 0.1, anchor=anchor)
            proj = project_half_space(anchor, hs)
            assert abs(hs.violation(proj)) <= TOL.halfspace_boundary
            move = proj - anchor
            cross = move - (move @ hs.normal) * hs.normal / (hs.normal @ hs.normal)
            assert np.linalg.norm(cross) <= 1e-12

    def test_zero_normal_with_violation(self):
        hs = HalfSpace(normal=[0.0, 0.0], offset=1.0, anchor=[0.0, 0.0])
        with pytest.raises(ValueError):
            project_half_space([0.0, 0.0], hs)


class TestSubspaceProjection:
    def test_fixes_range(self, rng):
        basis = BasisMatrix(random_orthonormal(6, 3, rng))
        x = basis.matrix @ rng.standard_normal(3)
        assert np.max(np.abs(project_subspace(x, basis) - x)) <= 1e-10

    def test_coordinate_projection(self):
        basis = BasisMatrix(np.eye(3)[:, :1])
        assert np.allclose(project_subspace([1.0, 2.0, 3.0], basis), [1.0, 0.0, 0.0])

    def test_residual_orthogonality(self, rng):
        basis = BasisMatrix(random_orthonormal(8, 4, rng))
        x = rng.standard_normal(8)
        resid = x - project_subspace(x, basis)
        assert np.max(np.abs(basis.matrix.T @ resid)) <= 1e-10

    def test_contraction_and_pythagoras(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 10))
            d = int(rng.integers(1, n + 1))
            basis = BasisMatrix(random_orthonormal(n, d, rng))
            x = rng.standard_normal(n)
            px = project_subspace(x, basis)
            assert np.linalg.norm(px) <= np.linalg.norm(x) + 1e-12
            lhs = float(x @ x)
            rhs = float(px @ px) + float((x - px) @ (x - px))
            assert abs(lhs - rhs) <= TOL.pythagoras_rel * max(1.0, lhs)
            again = project_subspace(px, basis)
            assert np.max(np.abs(again - px)) <= 1e-12


class TestConditionNumber:
    def test_identity(self):
        assert condition_number(SymMatrix(np.eye(4))) == 1.0

    def test_diagonal(self):
        assert abs(condition_number(SymMatrix(np.diag([1.0, 4.0]))) - 4.0) < 1e-12

    def test_matches_jacobi_oracle(self, rng):
        a = random_spd(6, rng, lo=0.3, hi=5.0)
        eigs = jacobi_eigenvalues(a)
        expected = eigs[-1] / eigs[0]
        assert abs(condition_number(SymMatrix(a)) - expected) <= 1e-8 * expected

    def test_non_pd_rejected(self):
        with pytest.raises(ValueError):
            condition_number(SymMatrix(np.diag([1.0, 0.0])))


class TestBasisMatrix:
    def test_rejects_nonorthonormal(self, rng):
        m = rng.standard_normal((5, 2))
        with pytest.raises(ValueError):
            BasisMatrix(m)

    def test_rank_bounds(self, rng):
        with pytest.raises(ValueError):
            BasisMatrix(np.zeros((3, 0)))


class TestCgSolve:
    def test_solves_spd_system(self, rng):
        a = random_spd(7, rng)
        x_true = rng.standard_normal(7)
        b = a @ x_true
        x = cg_solve(SymMatrix(a), b, iters=7)
        assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)

    def test_identity_single_step(self, rng):
        b = rng.standard_normal(5)
        x = cg_solve(SymMatrix(np.eye(5)), b, iters=1)
        assert np.allclose(x, b, atol=1e-14)

    def test_breakdown_guard_on_singular(self, rng):
        # consistent singular system: iterates stay finite
        u = rng.standard_normal(4)
        a = np.outer(u, u)
        b = a @ rng.standard_normal(4)
        x = cg_solve(SymMatrix(a), b, iters=4)
        assert np.all(np.isfinite(x))
