import itertools
import math

import numpy as np
import pytest

from sicgram import gramspace as gs
from sicgram import weyl


class TestDisplacements:
    def test_zero_is_identity(self):
        for n in (2, 3, 5):
            assert np.allclose(weyl.displacement((0, 0), n), np.eye(n))

    def test_unitary(self):
        for n in (2, 3, 4):
            for p1, p2 in itertools.product(range(n), repeat=2):
                D = weyl.displacement((p1, p2), n)
                assert np.abs(D @ D.conj().T - np.eye(n)).max() < 1e-13

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_commutation_identity(self, n):
        # D_p D_q = tau^(p2 q1 - p1 q2) D_(p+q), integer index addition
        t = weyl.tau(n)
        for p1, p2, q1, q2 in itertools.product(range(n), repeat=4):
            lhs = weyl.displacement((p1, p2), n) @ weyl.displacement((q1, q2), n)
            rhs = t ** (p2 * q1 - p1 * q2) * weyl.displacement((p1 + q1, p2 + q2), n)
            assert np.abs(lhs - rhs).max() < 1e-12

    def test_commutation_identity_spec_example(self):
        n = 3
        p = weyl.WHIndex(1, 0, n)
        q = weyl.WHIndex(0, 1, n)
        lhs = weyl.displacement(p, n) @ weyl.displacement(q, n)
        rhs = weyl.tau(n) ** p.symplectic(q) * weyl.displacement(p + q, n)
        assert np.abs(lhs - rhs).max() < 1e-12

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_trace_orthogonality(self, n):
        D = weyl.displacement_table(n)
        for r in range(n * n):
            for s in range(n * n):
                ip = np.trace(D[r].conj().T @ D[s])
                expected = n if r == s else 0.0
                assert abs(ip - expected) < 1e-12

    def test_index_reduction(self):
        p = weyl.WHIndex(7, -2, 5)
        assert (p.p1, p.p2) == (2, 3)


class TestZauner:
    @pytest.mark.parametrize("n", range(2, 8))
    def test_unitary_and_order_three(self, n):
        Z = weyl.zauner_matrix(n)
        assert np.abs(Z @ Z.conj().T - np.eye(n)).max() < 1e-12
        Z3 = Z @ Z @ Z
        # proportional to the identity; the built-in phase makes it exactly I
        assert np.abs(Z3 - np.eye(n) * Z3[0, 0]).max() < 1e-10
        assert abs(Z3[0, 0] - 1.0) < 1e-10

    @pytest.mark.parametrize("n", range(2, 13))
    def test_eigenspace_dimensions(self, n):
        dims = weyl.zauner_eigenspace_dims(n)
        expected = tuple((n + 3 - 2 * k) // 3 for k in range(3))
        assert dims == expected
        assert sum(dims) == n

    def test_eigenbasis_orthonormal(self):
        B = weyl.zauner_eigenbasis(5, 0)
        assert B.shape == (5, 2)
        assert np.abs(B.conj().T @ B - np.eye(2)).max() < 1e-12


class TestFramePotential:
    def test_bound_value_n3(self):
        assert weyl.frame_potential_bound(3) == pytest.approx(13.5)

    def test_random_vectors_above_bound(self, rng):
        n = 3
        for _ in range(100):
            psi = rng.normal(size=n) + 1j * rng.normal(size=n)
            psi /= np.linalg.norm(psi)
            assert weyl.frame_potential(psi) > weyl.frame_potential_bound(n) - 1e-12

    def test_fiducial_attains_bound(self, wh_reference):
        for n in (2, 3):
            fid, _, _ = wh_reference(n)
            assert weyl.frame_potential(fid) - weyl.frame_potential_bound(n) < 1e-10

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            weyl.frame_potential(np.array([1.0, 1.0]))


class TestFiducialSearch:
    def test_n2_overlaps(self, wh_reference):
        fid, _, _ = wh_reference(2)
        c = weyl._overlaps(fid.amplitudes, 2)
        assert np.abs(np.abs(c[1:]) ** 2 - 1.0 / 3.0).max() < 1e-8

    def test_n4_overlaps(self, wh_reference):
        fid, _, _ = wh_reference(4)
        c = weyl._overlaps(fid.amplitudes, 4)
        assert np.abs(np.abs(c[1:]) ** 2 - 0.2).max() < 1e-8

    def test_restricted_n5_parameter_count(self):
        B = weyl.zauner_eigenbasis(5, 0)
        assert B.shape[1] == (5 + 3) // 3 == 2
        fid = weyl.fiducial_search(5, seed=0, restrict_zauner=True)
        assert weyl.frame_potential(fid) - weyl.frame_potential_bound(5) < 1e-10

    def test_deterministic(self):
        f1 = weyl.fiducial_search(3, seed=7, restrict_zauner=True)
        f2 = weyl.fiducial_search(3, seed=7, restrict_zauner=True)
        assert np.allclose(f1.amplitudes, f2.amplitudes)

    def test_failure_reports_best(self):
        # unattainable tolerance forces the failure path
        with pytest.raises(weyl.FiducialSearchError) as exc:
            weyl.fiducial_search(4, seed=0, max_restarts=1, bound_tol=-1.0)
        assert exc.value.best_value is not None
        assert exc.value.best_value >= weyl.frame_potential_bound(4) - 1e-12

    def test_gauge_fixed(self, wh_reference):
        fid, _, _ = wh_reference(3)
        k = int(np.argmax(np.abs(fid.amplitudes)))
        assert abs(fid.amplitudes[k].imag) < 1e-12
        assert fid.amplitudes[k].real > 0

    def test_json_round_trip(self, wh_reference):
        fid, _, _ = wh_reference(2)
        back = weyl.Fiducial.from_json(fid.to_json())
        assert np.allclose(back.amplitudes, fid.amplitudes)


class TestWhGram:
    def test_d2_moduli(self, wh_reference):
        _, G, _ = wh_reference(2)
        rows, cols = gs.pair_indices(4)
        assert np.abs(np.abs(G.entries[rows, cols]) - 1 / (2 * math.sqrt(3))).max() < 1e-14

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_passes_sic_test(self, n, wh_reference):
        _, G, _ = wh_reference(n)
        assert gs.is_sic_gram(G, 1e-8)

    def test_rejects_non_fiducial(self):
        psi = np.zeros(3, dtype=complex)
        psi[0] = 1.0
        with pytest.raises(gs.GramFormError):
            weyl.wh_gram(weyl.Fiducial(3, psi))


class TestWelch:
    def test_sic_meets_m2_with_equality(self, wh_reference):
        fid, _, _ = wh_reference(3)
        V = weyl.wh_orbit(fid)
        lhs, bound, ok = weyl.welch_check(V, 2)
        assert ok
        assert lhs == pytest.approx(bound, abs=1e-8)

    def test_m1_tight_frame_identity(self, wh_reference):
        fid, _, _ = wh_reference(3)
        V = weyl.wh_orbit(fid)
        lhs, bound, ok = weyl.welch_check(V, 1)
        assert bound == pytest.approx(27.0)
        assert lhs == pytest.approx(27.0, abs=1e-10)

    def test_random_vectors_strict(self, rng):
        n = 3
        V = rng.normal(size=(n, n * n)) + 1j * rng.normal(size=(n, n * n))
        V /= np.linalg.norm(V, axis=0)
        lhs, bound, ok = weyl.welch_check(V, 2)
        assert ok
        assert lhs > bound + 1e-6

    def test_rejects_wrong_count(self, rng):
        V = rng.normal(size=(3, 5)) + 0j
        with pytest.raises(ValueError):
            weyl.welch_check(V, 1)


class TestCliffordOrder:
    @pytest.mark.parametrize(
        "n,expected", [(2, 24), (3, 216), (4, 768), (5, 3000), (6, 5184), (7, 16464)]
    )
    def test_values(self, n, expected):
        assert weyl.clifford_order(n) == expected

    def test_prime_formula(self):
        for p in (2, 3, 5, 7, 11):
            assert weyl.clifford_order(p) == p**3 * (p * p - 1)
