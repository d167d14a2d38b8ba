"""Gradients and Hessians of the trace functionals, and their degeneracy structure.

Both functionals are invariant under the diagonal-unitary flow, which shifts
phases by c_k - c_j; those directions span an (n^2-1)-dimensional space that
sits in the null space of both Hessians at every point.  At a SIC solution the
common null space is exactly that space for n >= 4, which is the isolation
statement checked by ``null_intersection_dim``.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .gramspace import (
    PhaseVector,
    _gram_array,
    pair_indices,
    phase_count,
    quad_indices,
    triple_indices,
    _choose_method,
)


def value_and_grad(phases: np.ndarray, n: int, dtype=np.complex128):
    """(f, g, grad f, grad g) via matrix powers; the search hot path."""
    N = n * n
    rows, cols = pair_indices(N)
    P = _gram_array(phases, n, dtype)
    P2 = P @ P
    P3 = P2 @ P
    f = np.real(np.sum(P2 * P.T))
    g = np.sum(np.abs(P2) ** 2)
    if dtype == np.complex128:
        r = 1.0 / (n * math.sqrt(n + 1.0))
        w = np.exp(1j * phases)
    else:
        r = 1.0 / (n * np.sqrt(np.longdouble(n + 1)))
        w = np.exp(1j * phases.astype(np.longdouble))
    gf = -6.0 * r * np.imag(w * P2[cols, rows])
    gg = -8.0 * r * np.imag(w * P3[cols, rows])
    return f, g, gf, gg


def _grads_cosine(phases: np.ndarray, n: int):
    """(grad f, grad g) by differentiating the cosine sums directly."""
    N = n * n
    M = phase_count(n)
    e_ab, e_bc, e_ac = triple_indices(N)
    th3 = phases[e_ab] + phases[e_bc] - phases[e_ac]
    s3 = np.sin(th3)
    c3f = 6.0 / (n**3 * (n + 1.0) ** 1.5)
    c3g = 24.0 / (n**4 * (n + 1.0) ** 1.5)
    c4 = 8.0 / (n**4 * (n + 1.0) ** 2)

    gf = np.zeros(M)
    np.add.at(gf, e_ab, -c3f * s3)
    np.add.at(gf, e_bc, -c3f * s3)
    np.add.at(gf, e_ac, c3f * s3)

    gg = np.zeros(M)
    np.add.at(gg, e_ab, -c3g * s3)
    np.add.at(gg, e_bc, -c3g * s3)
    np.add.at(gg, e_ac, c3g * s3)

    ab, ac, ad, bc, bd, cd = quad_indices(N)
    for idx, signs in _QUAD_FAMILIES:
        ids = [(ab, ac, ad, bc, bd, cd)[i] for i in idx]
        theta = sum(s * phases[e] for s, e in zip(signs, ids))
        sn = np.sin(theta)
        for s, e in zip(signs, ids):
            np.add.at(gg, e, -c4 * s * sn)
    return gf, gg


# index order within (ab, ac, ad, bc, bd, cd); one entry per cosine family of g
_QUAD_FAMILIES = (
    ((0, 3, 5, 2), (1.0, 1.0, 1.0, -1.0)),   # ab + bc + cd - ad
    ((0, 4, 5, 1), (1.0, 1.0, -1.0, -1.0)),  # ab + bd - cd - ac
    ((1, 3, 4, 2), (1.0, -1.0, 1.0, -1.0)),  # ac - bc + bd - ad
)


def gradient_f(pv: PhaseVector, method: str = "auto") -> np.ndarray:
    if _choose_method(pv.n, method) == "matrix":
        return np.asarray(value_and_grad(pv.phases, pv.n)[2], dtype=np.float64)
    return _grads_cosine(pv.phases, pv.n)[0]


def gradient_g(pv: PhaseVector, method: str = "auto") -> np.ndarray:
    if _choose_method(pv.n, method) == "matrix":
        return np.asarray(value_and_grad(pv.phases, pv.n)[3], dtype=np.float64)
    return _grads_cosine(pv.phases, pv.n)[1]


# ---------------------------------------------------------------------------
# diagonal-shift (continuous symmetry) directions

def gamma_direction(c: np.ndarray, n: int) -> np.ndarray:
    """Phase-space direction of the diagonal shift phi_jk -> phi_jk - c_j + c_k."""
    N = n * n
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (N,):
        raise ValueError(f"need {N} diagonal parameters")
    rows, cols = pair_indices(N)
    return c[cols] - c[rows]


def gamma_basis(n: int) -> np.ndarray:
    """M x (n^2 - 1) matrix whose columns span the shift directions."""
    N = n * n
    cols = [gamma_direction(np.eye(N)[i], n) for i in range(1, N)]
    return np.stack(cols, axis=1)


def project_out_gamma(vec: np.ndarray, n: int) -> np.ndarray:
    """Component of a phase-space vector orthogonal to the shift directions.

    Closed form on the complete graph: the best-fitting diagonal parameters
    are column means of the antisymmetric extension of ``vec``.
    """
    N = n * n
    rows, cols = pair_indices(N)
    T = np.zeros((N, N), dtype=np.float64)
    T[rows, cols] = vec
    T -= T.T
    c = T.mean(axis=0)
    return vec - (c[cols] - c[rows])


# ---------------------------------------------------------------------------
# Hessians

@dataclass(frozen=True)
class HessianPair:
    """Second-derivative matrices of the two trace functionals at one point."""

    n: int
    h_f: np.ndarray
    h_g: np.ndarray


def _pair_term(A, B, a, b, Epp, Epm):
    """Tr(dP_beta A dP_alpha B) for all (beta, alpha), without the -r^2 factor.

    a, b are the 0-based upper-triangle index arrays; Epp[beta, alpha] =
    exp(i(phi_beta + phi_alpha)) and Epm[beta, alpha] = exp(i(phi_beta -
    phi_alpha)).
    """
    t = Epp * A[np.ix_(b, a)] * B[np.ix_(b, a)].T
    t -= Epm * A[np.ix_(b, b)] * B[np.ix_(a, a)].T
    t -= Epm.conj() * A[np.ix_(a, a)] * B[np.ix_(b, b)].T
    t += Epp.conj() * A[np.ix_(a, b)] * B[np.ix_(a, b)].T
    return t


def hessian_pair_matrix(phases: np.ndarray, n: int) -> HessianPair:
    N = n * n
    a, b = pair_indices(N)
    r = 1.0 / (n * math.sqrt(n + 1.0))
    P = _gram_array(phases, n)
    P2 = P @ P
    P3 = P2 @ P
    I = np.eye(N, dtype=np.complex128)
    w = np.exp(1j * phases)
    Epp = w[:, None] * w[None, :]
    Epm = w[:, None] * w.conj()[None, :]

    hf = 3.0 * (_pair_term(P, I, a, b, Epp, Epm) + _pair_term(I, P, a, b, Epp, Epm))
    hg = 4.0 * (
        _pair_term(P2, I, a, b, Epp, Epm)
        + _pair_term(P, P, a, b, Epp, Epm)
        + _pair_term(I, P2, a, b, Epp, Epm)
    )
    hf *= -(r * r)
    hg *= -(r * r)

    diag_f = -6.0 * r * np.real(w * P2[b, a])
    diag_g = -8.0 * r * np.real(w * P3[b, a])
    hf[np.diag_indices_from(hf)] += diag_f
    hg[np.diag_indices_from(hg)] += diag_g

    hf_r = np.real(hf)
    hg_r = np.real(hg)
    if max(np.abs(np.imag(hf)).max(), np.abs(np.imag(hg)).max()) > 1e-9:
        raise FloatingPointError("Hessian assembly produced a non-real matrix")
    return HessianPair(n, 0.5 * (hf_r + hf_r.T), 0.5 * (hg_r + hg_r.T))


def hessian_pair_cosine(phases: np.ndarray, n: int) -> HessianPair:
    """Hessians from the cosine sums; independent of the matrix route."""
    N = n * n
    M = phase_count(n)
    e_ab, e_bc, e_ac = triple_indices(N)
    th3 = phases[e_ab] + phases[e_bc] - phases[e_ac]
    c3 = np.cos(th3)
    c3f = 6.0 / (n**3 * (n + 1.0) ** 1.5)
    c3g = 24.0 / (n**4 * (n + 1.0) ** 1.5)
    c4 = 8.0 / (n**4 * (n + 1.0) ** 2)

    hf = np.zeros((M, M))
    hg = np.zeros((M, M))
    trip = ((e_ab, 1.0), (e_bc, 1.0), (e_ac, -1.0))
    for ei, si in trip:
        for ej, sj in trip:
            np.add.at(hf, (ei, ej), -c3f * si * sj * c3)
            np.add.at(hg, (ei, ej), -c3g * si * sj * c3)

    ab, ac, ad, bc, bd, cd = quad_indices(N)
    pairs = (ab, ac, ad, bc, bd, cd)
    for idx, signs in _QUAD_FAMILIES:
        ids = [pairs[i] for i in idx]
        theta = sum(s * phases[e] for s, e in zip(signs, ids))
        cs = np.cos(theta)
        for si, ei in zip(signs, ids):
            for sj, ej in zip(signs, ids):
                np.add.at(hg, (ei, ej), -c4 * si * sj * cs)
    return HessianPair(n, hf, hg)


def hessian_pair(pv: PhaseVector, method: str = "auto") -> HessianPair:
    """Hessians of f and g at pv; symmetric by construction."""
    if _choose_method(pv.n, method) == "matrix":
        return hessian_pair_matrix(pv.phases, pv.n)
    return hessian_pair_cosine(pv.phases, pv.n)


# ---------------------------------------------------------------------------
# null spaces

@dataclass(frozen=True)
class NullSpaceReport:
    n: int
    dim_f: int
    dim_g: int
    dim_intersection: int
    threshold: float
    basis: np.ndarray
    indeterminate: bool

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "n": self.n,
                "dim_f": self.dim_f,
                "dim_g": self.dim_g,
                "dim_intersection": self.dim_intersection,
                "threshold": self.threshold,
            }
        )


def _null_count(svals: np.ndarray, threshold: float):
    cut = threshold * svals.max()
    below = svals[svals < cut]
    above = svals[svals >= cut]
    # borderline spectra: largest dropped and smallest kept within a factor 10
    shaky = (
        below.size > 0
        and above.size > 0
        and above.min() < 10.0 * max(below.max(), np.finfo(float).tiny)
    )
    return int(below.size), bool(shaky)


def null_intersection_dim(H: HessianPair, threshold: float = 1e-6) -> NullSpaceReport:
    """Dimension and basis of null(H_f) intersect null(H_g), spectral cutoff.

    Each Hessian is normalized by its spectral norm and the pair is stacked,
    so the intersection is the null space of the stacked matrix.
    """
    sf = np.linalg.svd(H.h_f, compute_uv=False)
    sg = np.linalg.svd(H.h_g, compute_uv=False)
    dim_f, shaky_f = _null_count(sf, threshold)
    dim_g, shaky_g = _null_count(sg, threshold)

    stacked = np.vstack([H.h_f / sf.max(), H.h_g / sg.max()])
    _, s, vt = np.linalg.svd(stacked, full_matrices=True)
    cut = threshold * s.max()
    dim = int(np.sum(s < cut))
    below = s[s < cut]
    above = s[s >= cut]
    shaky = (
        below.size > 0
        and above.size > 0
        and above.min() < 10.0 * max(below.max(), np.finfo(float).tiny)
    )
    basis = vt[len(s) - dim:].T if dim > 0 else np.empty((H.h_f.shape[0], 0))
    return NullSpaceReport(
        n=H.n,
        dim_f=dim_f,
        dim_g=dim_g,
        dim_intersection=dim,
        threshold=threshold,
        basis=basis,
        indeterminate=bool(shaky or shaky_f or shaky_g),
    )


# ---------------------------------------------------------------------------
# three-term phase combination vectors

@dataclass(frozen=True)
class KVector:
    """Sparse sign pattern of one cosine argument: +1 at (a,b) and (b,c), -1 at (a,c)."""

    n: int
    a: int  # 1-based, a < b < c
    b: int
    c: int

    def __post_init__(self):
        if not (1 <= self.a < self.b < self.c <= self.n * self.n):
            raise ValueError("need 1 <= a < b < c <= n^2")

    def to_dense(self) -> np.ndarray:
        from .gramspace import chi

        v = np.zeros(phase_count(self.n))
        v[chi(self.a, self.b, self.n) - 1] = 1.0
        v[chi(self.b, self.c, self.n) - 1] = 1.0
        v[chi(self.a, self.c, self.n) - 1] = -1.0
        return v


@lru_cache(maxsize=None)
def k_matrix(n: int) -> np.ndarray:
    """All three-term combination vectors as rows, triples in lex order."""
    N = n * n
    e_ab, e_bc, e_ac = triple_indices(N)
    K = np.zeros((len(e_ab), phase_count(n)), dtype=np.int8)
    t = np.arange(len(e_ab))
    K[t, e_ab] = 1
    K[t, e_bc] = 1
    K[t, e_ac] = -1
    K.setflags(write=False)
    return K


def k_span_rank(n: int) -> int:
    """Rank of the span of all three-term combination vectors.

    Equals (n^2-1)(n^2-2)/2; the co-rank n^2-1 is the dimension of the
    continuous symmetry.
    """
    K = k_matrix(n).astype(np.float64)
    gram = K.T @ K
    w = np.linalg.eigvalsh(gram)
    return int(np.sum(w > 1e-9 * max(w.max(), 1.0)))
