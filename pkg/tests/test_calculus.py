import numpy as np
import pytest

from sicgram import calculus as cal
from sicgram import gramspace as gs

from conftest import random_phases


def fd_gradient(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


class TestGradients:
    @pytest.mark.parametrize("n", [2, 3])
    def test_matches_finite_differences(self, n, rng):
        pv = random_phases(n, rng)
        gf = cal.gradient_f(pv)
        gg = cal.gradient_g(pv)
        fdf = fd_gradient(lambda x: gs.trace_values(x, n)[0], pv.phases)
        fdg = fd_gradient(lambda x: gs.trace_values(x, n)[1], pv.phases)
        scale_f = max(np.abs(fdf).max(), 1e-3)
        scale_g = max(np.abs(fdg).max(), 1e-3)
        assert np.abs(gf - fdf).max() / scale_f < 1e-6
        assert np.abs(gg - fdg).max() / scale_g < 1e-6

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_routes_agree(self, n, rng):
        pv = random_phases(n, rng)
        assert np.allclose(cal.gradient_f(pv, "matrix"), cal.gradient_f(pv, "cosine"), atol=1e-12)
        assert np.allclose(cal.gradient_g(pv, "matrix"), cal.gradient_g(pv, "cosine"), atol=1e-12)

    def test_zero_at_solution(self, solution):
        out = solution(4)
        assert np.abs(cal.gradient_f(out.phase_vector)).max() < 1e-6
        assert np.abs(cal.gradient_g(out.phase_vector)).max() < 1e-6

    @pytest.mark.parametrize("n", [2, 3])
    def test_diagonal_shift_directions_flat(self, n, rng):
        # f and g are exactly invariant under phi_jk -> phi_jk - c_j + c_k
        for _ in range(50):
            pv = random_phases(n, rng)
            c = rng.normal(size=n * n)
            v = cal.gamma_direction(c, n)
            assert abs(cal.gradient_f(pv) @ v) < 1e-10
            assert abs(cal.gradient_g(pv) @ v) < 1e-10


class TestHessians:
    def test_symmetry(self, rng):
        H = cal.hessian_pair(random_phases(3, rng))
        assert np.abs(H.h_f - H.h_f.T).max() < 1e-12
        assert np.abs(H.h_g - H.h_g.T).max() < 1e-12

    def test_matches_second_differences_n2(self, rng):
        pv = random_phases(2, rng)
        H = cal.hessian_pair(pv)
        h = 1e-4
        for i in range(6):
            for j in range(6):
                ei = np.zeros(6); ei[i] = h
                ej = np.zeros(6); ej[j] = h
                fpp = gs.trace_values(pv.phases + ei + ej, 2)[0]
                fpm = gs.trace_values(pv.phases + ei - ej, 2)[0]
                fmp = gs.trace_values(pv.phases - ei + ej, 2)[0]
                fmm = gs.trace_values(pv.phases - ei - ej, 2)[0]
                fd = (fpp - fpm - fmp + fmm) / (4 * h * h)
                assert H.h_f[i, j] == pytest.approx(fd, abs=2e-5)

    @pytest.mark.parametrize("n", [2, 3])
    def test_matches_gradient_differences(self, n, rng):
        pv = random_phases(n, rng)
        H = cal.hessian_pair(pv)
        h = 1e-6
        M = gs.phase_count(n)
        for i in rng.choice(M, size=min(M, 10), replace=False):
            e = np.zeros(M); e[i] = h
            col_f = (cal.gradient_f(gs.PhaseVector(n, pv.phases + e))
                     - cal.gradient_f(gs.PhaseVector(n, pv.phases - e))) / (2 * h)
            col_g = (cal.gradient_g(gs.PhaseVector(n, pv.phases + e))
                     - cal.gradient_g(gs.PhaseVector(n, pv.phases - e))) / (2 * h)
            assert np.abs(H.h_f[:, i] - col_f).max() < 1e-5
            assert np.abs(H.h_g[:, i] - col_g).max() < 1e-5

    @pytest.mark.parametrize("n", [2, 3])
    def test_routes_agree(self, n, rng):
        pv = random_phases(n, rng)
        Hm = cal.hessian_pair_matrix(pv.phases, n)
        Hc = cal.hessian_pair_cosine(pv.phases, n)
        assert np.abs(Hm.h_f - Hc.h_f).max() < 1e-12
        assert np.abs(Hm.h_g - Hc.h_g).max() < 1e-12

    def test_shift_directions_in_null_space(self, solution, rng):
        out = solution(4)
        H = cal.hessian_pair(out.phase_vector)
        for _ in range(10):
            v = cal.gamma_direction(rng.normal(size=16), 4)
            assert np.abs(H.h_f @ v).max() < 1e-6
            assert np.abs(H.h_g @ v).max() < 1e-6


class TestNullSpaces:
    @pytest.mark.parametrize("n,expected", [(3, 10), (4, 15), (5, 24)])
    def test_intersection_dims(self, n, expected, solution, wh_reference):
        if n == 3:
            from sicgram import search
            _, _, pv = wh_reference(3)
            phases, _ = search._gn_polish(pv.phases, 3)
            pv = gs.PhaseVector(3, phases)
        else:
            pv = solution(n).phase_vector
        rep = cal.null_intersection_dim(cal.hessian_pair(pv))
        assert rep.dim_intersection == expected
        assert not rep.indeterminate
        assert rep.basis.shape[1] == expected

    def test_basis_is_null(self, solution):
        out = solution(4)
        H = cal.hessian_pair(out.phase_vector)
        rep = cal.null_intersection_dim(H)
        assert np.abs(H.h_f @ rep.basis).max() < 1e-5
        assert np.abs(H.h_g @ rep.basis).max() < 1e-5

    def test_indeterminate_flag(self):
        # singular values straddling the cutoff within a factor 10
        d = np.array([1.0, 1.0, 3e-6, 5e-7])
        H = cal.HessianPair(2, np.diag(np.concatenate([d, np.ones(2)])),
                            np.diag(np.concatenate([d, np.ones(2)])))
        rep = cal.null_intersection_dim(H, threshold=1e-6)
        assert rep.indeterminate

    def test_json_shape(self, solution):
        import json
        rep = cal.null_intersection_dim(cal.hessian_pair(solution(4).phase_vector))
        obj = json.loads(rep.to_json())
        assert set(obj) == {"n", "dim_f", "dim_g", "dim_intersection", "threshold"}


class TestKVectors:
    def test_sign_pattern(self):
        kv = cal.KVector(2, 1, 2, 3)
        dense = kv.to_dense()
        assert dense[gs.chi(1, 2, 2) - 1] == 1.0
        assert dense[gs.chi(2, 3, 2) - 1] == 1.0
        assert dense[gs.chi(1, 3, 2) - 1] == -1.0
        assert np.count_nonzero(dense) == 3

    def test_rejects_bad_indices(self):
        with pytest.raises(ValueError):
            cal.KVector(2, 2, 2, 3)

    @pytest.mark.parametrize("n,expected", [(2, 3), (3, 28), (4, 105), (5, 276), (6, 595)])
    def test_span_rank(self, n, expected):
        assert cal.k_span_rank(n) == expected
        assert expected == (n * n - 1) * (n * n - 2) // 2

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_corank_matches_shift_dimension(self, n):
        assert gs.phase_count(n) - cal.k_span_rank(n) == n * n - 1

    def test_four_index_decompositions(self, rng):
        # the three cosine families of g decompose into three-term vectors
        n = 3
        N = n * n

        def K(a, b, c):
            return cal.KVector(n, a + 1, b + 1, c + 1).to_dense()

        rows, cols = gs.pair_indices(N)

        def pair_vec(a, b):
            v = np.zeros(gs.phase_count(n))
            sign = 1.0
            if a > b:
                a, b = b, a
                sign = -1.0
            v[gs.chi(a + 1, b + 1, n) - 1] = sign
            return v

        for _ in range(20):
            a, b, c, d = sorted(rng.choice(N, size=4, replace=False))
            fam1 = pair_vec(a, b) + pair_vec(b, c) + pair_vec(c, d) - pair_vec(a, d)
            assert np.array_equal(fam1, K(a, b, c) + K(a, c, d))
            fam2 = pair_vec(a, b) + pair_vec(b, d) - pair_vec(c, d) - pair_vec(a, c)
            assert np.array_equal(fam2, K(a, b, c) - K(b, c, d))
            fam3 = pair_vec(a, c) - pair_vec(b, c) + pair_vec(b, d) - pair_vec(a, d)
            assert np.array_equal(fam3, K(a, b, d) - K(a, b, c))


class TestGammaProjection:
    def test_projection_removes_shift_component(self, rng):
        n = 3
        v = rng.normal(size=gs.phase_count(n))
        proj = cal.project_out_gamma(v, n)
        B = cal.gamma_basis(n)
        assert np.abs(B.T @ proj).max() < 1e-10

    def test_pure_shift_projects_to_zero(self, rng):
        n = 3
        v = cal.gamma_direction(rng.normal(size=9), n)
        assert np.abs(cal.project_out_gamma(v, n)).max() < 1e-12
