import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sicgram import gramspace as gs

from conftest import random_phases


class TestChi:
    def test_first_entry(self):
        assert gs.chi(1, 2, 2) == 1

    def test_last_entry_equals_phase_count(self):
        assert gs.chi(3, 4, 2) == 6 == gs.phase_count(2)

    def test_row_major_position(self):
        # enumerate the upper triangle row-major and match positions
        expected = {}
        m = 0
        for a in range(1, 5):
            for b in range(a + 1, 5):
                m += 1
                expected[(a, b)] = m
        assert gs.chi(2, 3, 2) == expected[(2, 3)] == 4

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_bijection(self, n):
        N = n * n
        values = sorted(gs.chi(a, b, n) for a in range(1, N) for b in range(a + 1, N + 1))
        assert values == list(range(1, gs.phase_count(n) + 1))

    def test_matches_triu_order(self):
        rows, cols = gs.pair_indices(9)
        for m, (a, b) in enumerate(zip(rows, cols)):
            assert gs.chi(a + 1, b + 1, 3) == m + 1

    @pytest.mark.parametrize("a,b", [(2, 2), (3, 2), (1, 5), (0, 1)])
    def test_rejects_bad_pairs(self, a, b):
        with pytest.raises(ValueError):
            gs.chi(a, b, 2)

    @given(st.integers(2, 6))
    @settings(max_examples=5, deadline=None)
    def test_count_formula(self, n):
        assert gs.phase_count(n) == n * n * (n * n - 1) // 2


class TestPhaseVector:
    def test_length_validation(self):
        with pytest.raises(ValueError):
            gs.PhaseVector(2, np.zeros(5))

    def test_canonical_range(self, rng):
        pv = gs.PhaseVector(2, rng.uniform(-20, 20, 6))
        red = pv.canonical()
        assert np.all(red.phases >= 0) and np.all(red.phases < 2 * np.pi)
        assert np.allclose(np.mod(red.phases - pv.phases, 2 * np.pi), 0, atol=1e-12)

    def test_json_round_trip(self, rng):
        pv = random_phases(3, rng)
        back = gs.PhaseVector.from_json(pv.to_json())
        assert back.n == 3
        assert np.array_equal(back.phases, pv.phases)

    def test_json_seventeen_digits(self):
        pv = gs.PhaseVector(2, np.full(6, np.pi / 7))
        obj = json.loads(pv.to_json())
        assert obj["phases"][0] == pv.phases[0]


class TestGramCandidate:
    def test_zero_phase_entries(self):
        pv = gs.PhaseVector(2, np.zeros(6))
        G = gs.gram_from_phases(pv)
        off = 1.0 / (2.0 * math.sqrt(3.0))
        assert np.allclose(np.diag(G.entries), 0.5)
        rows, cols = gs.pair_indices(4)
        assert np.allclose(G.entries[rows, cols], off)

    def test_phase_round_trip(self, rng):
        pv = random_phases(3, rng).canonical()
        back = gs.phases_of(gs.gram_from_phases(pv))
        assert np.allclose(back.phases, pv.phases, atol=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_first_two_traces_fixed(self, n, rng):
        # Tr(P) = n exactly and Tr(P^2) = n to machine precision, any phases
        pv = random_phases(n, rng)
        G = gs.gram_from_phases(pv)
        assert gs.trace_power(G, 1) == pytest.approx(n, abs=1e-13)
        assert gs.trace_power(G, 2) == pytest.approx(n, abs=1e-13)

    def test_diagonal_bit_exact(self, rng):
        G = gs.gram_from_phases(random_phases(2, rng))
        assert np.all(np.diag(G.entries) == 0.5)

    def test_offdiag_moduli(self, rng):
        G = gs.gram_from_phases(random_phases(4, rng))
        rows, cols = gs.pair_indices(16)
        r = gs.offdiag_modulus(4)
        assert np.abs(np.abs(G.entries[rows, cols]) - r).max() < 1e-15

    def test_rejects_non_hermitian(self):
        M = np.full((4, 4), 0.5, dtype=complex)
        with pytest.raises(gs.GramFormError):
            gs.GramCandidate(2, M + 1j * np.triu(np.ones((4, 4)), 1))

    def test_rejects_wrong_modulus(self):
        pv = gs.PhaseVector(2, np.zeros(6))
        M = gs.gram_from_phases(pv).entries.copy()
        M[0, 1] *= 1.5
        M[1, 0] *= 1.5
        with pytest.raises(gs.GramFormError):
            gs.GramCandidate(2, M)


class TestTraceFunctionals:
    def test_f_zero_phases_n2(self):
        # 2 + 6*C(4,3)/(8*3^{3/2}) = 2 + 1/sqrt(3), cross-checked vs matrix trace
        pv = gs.PhaseVector(2, np.zeros(6))
        expected = 2.0 + 1.0 / math.sqrt(3.0)
        assert gs.f_value(pv) == pytest.approx(expected, abs=1e-14)
        assert gs.f_value(pv) == pytest.approx(2.57735, abs=1e-5)
        G = gs.gram_from_phases(pv)
        assert gs.trace_power(G, 3) == pytest.approx(expected, abs=1e-14)

    def test_g_zero_phases_n2(self):
        # constant + three-index + four-index closed forms at zero phases
        pv = gs.PhaseVector(2, np.zeros(6))
        expected = 13.0 / 6.0 + 96.0 / (16.0 * 5.196152422706632) + 24.0 / 144.0
        assert gs.g_value(pv) == pytest.approx(expected, abs=1e-12)
        G = gs.gram_from_phases(pv)
        assert gs.trace_power(G, 4) == pytest.approx(gs.g_value(pv), abs=1e-13)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_matches_matrix_oracle(self, n, rng):
        for _ in range(25):
            pv = random_phases(n, rng)
            G = gs.gram_from_phases(pv)
            f3 = gs.trace_power(G, 3)
            f4 = gs.trace_power(G, 4)
            assert gs.f_value(pv) == pytest.approx(f3, rel=1e-12)
            assert gs.g_value(pv) == pytest.approx(f4, rel=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_cosine_and_matrix_routes_agree(self, n, rng):
        pv = random_phases(n, rng)
        assert gs.f_value(pv, "cosine") == pytest.approx(gs.f_value(pv, "matrix"), rel=1e-13)
        assert gs.g_value(pv, "cosine") == pytest.approx(gs.g_value(pv, "matrix"), rel=1e-13)

    def test_converged_solution_traces(self, solution):
        out = solution(4)
        assert abs(gs.f_value(out.phase_vector) - 4) < 1e-8
        assert abs(gs.g_value(out.phase_vector) - 4) < 1e-8


class TestObjective:
    def test_nonnegative(self, rng):
        for n in (2, 3):
            rep = gs.objective_S(random_phases(n, rng))
            assert rep.s >= 0.0
            assert rep.s == pytest.approx((rep.f - n) ** 2 + (rep.g - n) ** 2, rel=1e-12)

    def test_zero_phases_positive(self):
        rep = gs.objective_S(gs.PhaseVector(2, np.zeros(6)))
        assert rep.s > 0.1

    def test_sic_solution_small(self, solution):
        rep = gs.objective_S(solution(4).phase_vector)
        assert rep.s < 1e-16


class TestIsSicGram:
    def test_reference_true(self, wh_reference):
        _, G, _ = wh_reference(4)
        assert gs.is_sic_gram(G, 1e-8)

    def test_zero_phases_false(self):
        G = gs.gram_from_phases(gs.PhaseVector(2, np.zeros(6)))
        assert not gs.is_sic_gram(G, 1e-8)

    def test_eigenvalue_multiset(self, solution):
        out = solution(4)
        G = gs.gram_from_phases(out.phase_vector)
        w = np.sort(np.linalg.eigvalsh(G.entries))
        assert np.allclose(w[-4:], 1.0, atol=1e-7)
        assert np.allclose(w[:-4], 0.0, atol=1e-7)

    def test_projector_property(self, solution):
        out = solution(4)
        P = gs.gram_from_phases(out.phase_vector).entries
        assert np.abs(P @ P - P).max() < 1e-7  # 10 * tol with tol = 1e-8

    def test_projector_frobenius_identity(self, rng):
        # ||P^2 - P||_F^2 equals (Tr P^4 - n) - 2 (Tr P^3 - n) on the candidate space
        for n in (2, 3):
            pv = random_phases(n, rng)
            G = gs.gram_from_phases(pv)
            lhs = np.linalg.norm(G.entries @ G.entries - G.entries, "fro") ** 2
            rhs = (gs.g_value(pv) - n) - 2.0 * (gs.f_value(pv) - n)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)

    def test_rejects_malformed(self):
        with pytest.raises(gs.GramFormError):
            gs.is_sic_gram(np.eye(4), 1e-8)
