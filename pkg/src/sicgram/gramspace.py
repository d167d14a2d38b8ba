"""Candidate space of SIC Gram matrices parameterized by off-diagonal phases.

A candidate is a Hermitian n^2 x n^2 matrix with 1/n on the diagonal and
constant off-diagonal modulus 1/(n*sqrt(n+1)); the free data is the vector of
upper-triangle phases.  Tr(P) = n and Tr(P^2) = n hold for every candidate by
construction, so a candidate is the Gram matrix of a SIC-POVM exactly when
Tr(P^3) = n and Tr(P^4) = n as well.
"""

from dataclasses import dataclass
from functools import lru_cache
import json
import math

import numpy as np

TWO_PI = 2.0 * math.pi


class GramFormError(ValueError):
    """Matrix violates the fixed candidate form (not merely non-SIC)."""


def phase_count(n: int) -> int:
    """Number of free phases for dimension n: n^2(n^2-1)/2."""
    return n * n * (n * n - 1) // 2


def chi(a: int, b: int, n: int) -> int:
    """Flat 1-based index of the upper-triangle pair (a, b), 1 <= a < b <= n^2.

    chi(a, b) = (a-1) n^2 - a(a+1)/2 + b, which enumerates the upper triangle
    row-major and is a bijection onto 1..n^2(n^2-1)/2.
    """
    N = n * n
    if not (1 <= a < b <= N):
        raise ValueError(f"need 1 <= a < b <= n^2; got a={a}, b={b}, n^2={N}")
    return (a - 1) * N - a * (a + 1) // 2 + b


@lru_cache(maxsize=None)
def pair_indices(N: int):
    """0-based (row, col) arrays of the upper triangle in chi order."""
    rows, cols = np.triu_indices(N, 1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def _pair_position(N: int):
    """Lookup table: (a, b) upper-triangle pair -> 0-based flat position."""
    rows, cols = pair_indices(N)
    pos = np.full((N, N), -1, dtype=np.int64)
    pos[rows, cols] = np.arange(len(rows))
    pos.setflags(write=False)
    return pos


@lru_cache(maxsize=None)
def triple_indices(N: int):
    """Flat phase positions (ab, bc, ac) for every triple a<b<c of 0..N-1."""
    a, b, c = np.array(
        [(i, j, k) for i in range(N) for j in range(i + 1, N) for k in range(j + 1, N)],
        dtype=np.int64,
    ).T if N >= 3 else (np.empty(0, np.int64),) * 3
    pos = _pair_position(N)
    out = pos[a, b], pos[b, c], pos[a, c]
    for arr in out:
        arr.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def quad_indices(N: int):
    """Flat phase positions (ab, ac, ad, bc, bd, cd) for every a<b<c<d."""
    import itertools

    combos = np.array(list(itertools.combinations(range(N), 4)), dtype=np.int64)
    if combos.size == 0:
        return (np.empty(0, np.int64),) * 6
    a, b, c, d = combos.T
    pos = _pair_position(N)
    out = (pos[a, b], pos[a, c], pos[a, d], pos[b, c], pos[b, d], pos[c, d])
    for arr in out:
        arr.setflags(write=False)
    return out


def offdiag_modulus(n: int) -> float:
    return 1.0 / (n * math.sqrt(n + 1.0))


def reduce_phases(phases: np.ndarray) -> np.ndarray:
    """Map phases into the canonical range [0, 2*pi)."""
    out = np.mod(phases, TWO_PI)
    # mod can return 2*pi for tiny negative inputs
    out[out >= TWO_PI] = 0.0
    return out


@dataclass(frozen=True)
class PhaseVector:
    """Phases of the upper triangle of a candidate Gram matrix, in chi order.

    The stored values are radians and deliberately unreduced; call
    ``canonical()`` to get the representative in [0, 2*pi).
    """

    n: int
    phases: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension must be >= 2, got {self.n}")
        arr = np.asarray(self.phases, dtype=np.float64)
        M = phase_count(self.n)
        if arr.shape != (M,):
            raise ValueError(f"expected {M} phases for n={self.n}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("phases must be finite")
        object.__setattr__(self, "phases", arr)

    def canonical(self) -> "PhaseVector":
        return PhaseVector(self.n, reduce_phases(self.phases))

    def entry(self, a: int, b: int) -> float:
        """Phase at 1-based upper-triangle pair (a, b)."""
        return float(self.phases[chi(a, b, self.n) - 1])

    def to_json(self) -> str:
        vals = ", ".join(format(x, ".17g") for x in self.phases)
        return '{"n": %d, "phases": [%s]}' % (self.n, vals)

    @classmethod
    def from_json(cls, text: str) -> "PhaseVector":
        obj = json.loads(text)
        return cls(int(obj["n"]), np.array(obj["phases"], dtype=np.float64))


@dataclass(frozen=True)
class GramCandidate:
    """Hermitian candidate matrix of the fixed SIC-Gram form."""

    n: int
    entries: np.ndarray

    def __post_init__(self):
        n = self.n
        N = n * n
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.shape != (N, N):
            raise GramFormError(f"expected {N}x{N} matrix for n={n}")
        object.__setattr__(self, "entries", entries)
        if np.abs(entries - entries.conj().T).max() > 1e-12:
            raise GramFormError("matrix is not Hermitian")
        if np.abs(np.diag(entries) - 1.0 / n).max() > 1e-13:
            raise GramFormError("diagonal entries must equal 1/n")
        rows, cols = pair_indices(N)
        r = offdiag_modulus(n)
        moduli = np.abs(entries[rows, cols])
        if np.abs(moduli - r).max() > 1e-12 * r + 1e-14:
            raise GramFormError("off-diagonal moduli must equal 1/(n*sqrt(n+1))")

    @property
    def N(self) -> int:
        return self.n * self.n


def gram_from_phases(pv: PhaseVector) -> GramCandidate:
    """Assemble the candidate matrix for a phase vector."""
    n = pv.n
    N = n * n
    rows, cols = pair_indices(N)
    P = np.zeros((N, N), dtype=np.complex128)
    P[rows, cols] = offdiag_modulus(n) * np.exp(1j * pv.phases)
    P = P + P.conj().T
    P[np.diag_indices(N)] = 1.0 / n
    return GramCandidate(n, P)


def phases_of(G: GramCandidate) -> PhaseVector:
    """Upper-triangle phases of a candidate, reduced to [0, 2*pi)."""
    rows, cols = pair_indices(G.N)
    return PhaseVector(G.n, reduce_phases(np.angle(G.entries[rows, cols])))


def gram_matrix_from_raw(n: int, raw: np.ndarray) -> GramCandidate:
    """Project a nearly-valid Gram matrix onto the candidate space.

    Keeps the off-diagonal phases and snaps moduli/diagonal to their exact
    values.  Rejects matrices further than 1e-6 (relative) from the form.
    """
    N = n * n
    raw = np.asarray(raw, dtype=np.complex128)
    if raw.shape != (N, N):
        raise GramFormError(f"expected {N}x{N} matrix for n={n}")
    r = offdiag_modulus(n)
    rows, cols = pair_indices(N)
    moduli = np.abs(raw[rows, cols])
    if np.abs(moduli - r).max() > 1e-6 * r:
        raise GramFormError("off-diagonal moduli too far from 1/(n*sqrt(n+1))")
    if np.abs(np.diag(raw) - 1.0 / n).max() > 1e-6:
        raise GramFormError("diagonal too far from 1/n")
    if np.abs(raw - raw.conj().T).max() > 1e-6:
        raise GramFormError("matrix too far from Hermitian")
    phases = reduce_phases(np.angle(0.5 * (raw + raw.conj().T)[rows, cols]))
    return gram_from_phases(PhaseVector(n, phases))


# ---------------------------------------------------------------------------
# trace functionals

def _gram_array(phases: np.ndarray, n: int, dtype=np.complex128):
    N = n * n
    rows, cols = pair_indices(N)
    if dtype == np.complex128:
        r = 1.0 / (n * math.sqrt(n + 1.0))
        w = np.exp(1j * phases)
    else:
        r = 1.0 / (n * np.sqrt(np.longdouble(n + 1)))
        w = np.exp(1j * phases.astype(np.longdouble))
    P = np.zeros((N, N), dtype=dtype)
    P[rows, cols] = r * w
    P = P + P.conj().T
    P[np.diag_indices(N)] = 1.0 / np.array(n, dtype=P.real.dtype)
    return P


def trace_values(phases: np.ndarray, n: int, dtype=np.complex128):
    """(Tr P^3, Tr P^4) through explicit matrix powers."""
    P = _gram_array(phases, n, dtype)
    P2 = P @ P
    f = np.real(np.sum(P2 * P.T))
    g = np.sum(np.abs(P2) ** 2)  # Tr(P^4) = ||P^2||_F^2 for Hermitian P
    return f, g


def trace_values_cosine(phases: np.ndarray, n: int):
    """(Tr P^3, Tr P^4) through the explicit cosine sums."""
    N = n * n
    e_ab, e_bc, e_ac = triple_indices(N)
    s3 = np.cos(phases[e_ab] + phases[e_bc] - phases[e_ac]).sum()
    ab, ac, ad, bc, bd, cd = quad_indices(N)
    s4 = (
        np.cos(phases[ab] + phases[bc] + phases[cd] - phases[ad])
        + np.cos(phases[ab] + phases[bd] - phases[cd] - phases[ac])
        + np.cos(phases[ac] - phases[bc] + phases[bd] - phases[ad])
    ).sum()
    f = (3.0 * n - 2.0) / n + 6.0 / (n**3 * (n + 1.0) ** 1.5) * s3
    g = (
        2.0 * (n**3 + 2.0 * n**2 - n - 1.0) / (n**2 * (n + 1.0))
        + 24.0 / (n**4 * (n + 1.0) ** 1.5) * s3
        + 8.0 / (n**4 * (n + 1.0) ** 2) * s4
    )
    return f, g


def _choose_method(n: int, method: str) -> str:
    if method == "auto":
        return "cosine" if n <= 3 else "matrix"
    if method not in ("matrix", "cosine"):
        raise ValueError(f"unknown method {method!r}")
    return method


def f_value(pv: PhaseVector, method: str = "auto") -> float:
    """Tr(P^3) of the candidate with phases pv."""
    if _choose_method(pv.n, method) == "matrix":
        return float(trace_values(pv.phases, pv.n)[0])
    return float(trace_values_cosine(pv.phases, pv.n)[0])


def g_value(pv: PhaseVector, method: str = "auto") -> float:
    """Tr(P^4) of the candidate with phases pv."""
    if _choose_method(pv.n, method) == "matrix":
        return float(trace_values(pv.phases, pv.n)[1])
    return float(trace_values_cosine(pv.phases, pv.n)[1])


def trace_power(G: GramCandidate, k: int) -> float:
    """Tr(G^k) by repeated multiplication; oracle path for tests."""
    acc = np.eye(G.N, dtype=np.complex128)
    for _ in range(k):
        acc = acc @ G.entries
    return float(np.real(np.trace(acc)))


@dataclass(frozen=True)
class TraceReport:
    """Trace residual summary at a phase vector."""

    f: float
    g: float
    s: float
    gradient_norm: float


def objective_value(pv: PhaseVector) -> float:
    """S = (f-n)^2 + (g-n)^2."""
    f, g = trace_values(pv.phases, pv.n)
    return float((f - pv.n) ** 2 + (g - pv.n) ** 2)


def objective_S(pv: PhaseVector) -> TraceReport:
    """Full objective report; gradient_norm is the 2-norm of grad S."""
    from . import calculus

    f, g, gf, gg = calculus.value_and_grad(pv.phases, pv.n)
    df, dg = f - pv.n, g - pv.n
    gs = 2.0 * df * gf + 2.0 * dg * gg
    return TraceReport(
        f=float(f), g=float(g), s=float(df * df + dg * dg),
        gradient_norm=float(np.linalg.norm(gs)),
    )


def is_sic_gram(G: GramCandidate, tol: float = 1e-8) -> bool:
    """Theorem-level SIC test: |Tr(P^3)-n| <= tol and |Tr(P^4)-n| <= tol.

    The candidate form already fixes Tr(P) = Tr(P^2) = n, so these two trace
    conditions are equivalent to P being a rank-n projector.
    """
    if not isinstance(G, GramCandidate):
        raise GramFormError("is_sic_gram expects a GramCandidate")
    pv = phases_of(G)
    f, g = trace_values(pv.phases, G.n)
    return abs(f - G.n) <= tol and abs(g - G.n) <= tol
