"""Weyl-Heisenberg displacements, the order-3 Zauner unitary, and reference SICs.

Reference (group-covariant) solutions are orbits of a fiducial vector under
the n^2 displacement operators.  They pass through the same Gram-matrix
machinery as general search solutions and serve as classification anchors.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
import scipy.optimize

from .gramspace import (
    GramCandidate,
    GramFormError,
    PhaseVector,
    gram_matrix_from_raw,
    is_sic_gram,
    phases_of,
)


class FiducialSearchError(RuntimeError):
    """Search failed to reach the frame-potential bound; carries the best value."""

    def __init__(self, message, best_value=None, best_vector=None):
        super().__init__(message)
        self.best_value = best_value
        self.best_vector = best_vector


@dataclass(frozen=True)
class WHIndex:
    """Index (p1, p2) of a displacement operator; components live mod n."""

    p1: int
    p2: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "p1", self.p1 % self.n)
        object.__setattr__(self, "p2", self.p2 % self.n)

    def __add__(self, other: "WHIndex") -> "WHIndex":
        return WHIndex(self.p1 + other.p1, self.p2 + other.p2, self.n)

    def symplectic(self, other: "WHIndex") -> int:
        """<p, q> = p2 q1 - p1 q2, the phase exponent of the commutation rule."""
        return self.p2 * other.p1 - self.p1 * other.p2


def tau(n: int) -> complex:
    return -np.exp(1j * np.pi / n)


def shift_matrix(n: int) -> np.ndarray:
    X = np.zeros((n, n), dtype=np.complex128)
    X[(np.arange(n) + 1) % n, np.arange(n)] = 1.0
    return X


def clock_matrix(n: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * np.arange(n) / n))


def displacement(p, n: int) -> np.ndarray:
    """Displacement D_p = tau^(p1 p2) X^p1 Z^p2, with D_(0,0) = identity.

    Integer labels are NOT reduced in the tau exponent: for even n the
    operators are only 2n-periodic in their labels, and keeping the raw
    integers is what makes D_p D_q = tau^<p,q> D_(p+q) hold exactly for all
    integer index pairs.
    """
    if isinstance(p, WHIndex):
        p1, p2 = p.p1, p.p2
    else:
        p1, p2 = int(p[0]), int(p[1])
    k = np.arange(n)
    t = tau(n)
    # X^p1 Z^p2 maps |k> to omega^(p2 k) |k + p1>
    D = np.zeros((n, n), dtype=np.complex128)
    D[(k + p1) % n, k] = np.exp(2j * np.pi * p2 * k / n)
    return t ** (p1 * p2) * D


@lru_cache(maxsize=None)
def displacement_table(n: int):
    """All n^2 displacements in lexicographic (p1, p2) order."""
    ops = np.stack([displacement((p1, p2), n) for p1 in range(n) for p2 in range(n)])
    ops.setflags(write=False)
    return ops


def zauner_matrix(n: int) -> np.ndarray:
    """Order-3 unitary with entries e^(i lambda)/sqrt(n) tau^(2jk + j^2).

    lambda = pi (n-1)/12 makes the cube exactly the identity, so its
    eigenvalues are the cube roots of unity with multiplicities
    floor((n+3-2k)/3).
    """
    lam = np.pi * (n - 1) / 12.0
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(1j * lam) / np.sqrt(n) * tau(n) ** (2 * j * k + j * j)


def zauner_eigenspace_dims(n: int) -> tuple[int, int, int]:
    """Multiplicities of eigenvalues e^(2 pi i k/3), k = 0, 1, 2, computed numerically."""
    w = np.linalg.eigvals(zauner_matrix(n))
    dims = [0, 0, 0]
    for ev in w:
        k = int(np.round(np.angle(ev) / (2 * np.pi / 3))) % 3
        if abs(ev - np.exp(2j * np.pi * k / 3)) > 1e-9:
            raise FloatingPointError(f"eigenvalue {ev} is not a cube root of unity")
        dims[k] += 1
    return tuple(dims)


def zauner_eigenbasis(n: int, k: int = 0) -> np.ndarray:
    """Orthonormal columns spanning the e^(2 pi i k/3) eigenspace."""
    Z = zauner_matrix(n)
    w, V = np.linalg.eig(Z)
    target = np.exp(2j * np.pi * k / 3)
    sel = np.abs(w - target) < 1e-8
    B = V[:, sel]
    # eig does not return an orthonormal set within degenerate subspaces
    Q, _ = np.linalg.qr(B)
    return Q


@dataclass(frozen=True)
class Fiducial:
    """Unit vector whose displacement orbit forms a SIC."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        if amp.shape != (self.n,):
            raise ValueError(f"expected {self.n} amplitudes")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-14:
            raise ValueError("fiducial must have unit norm")
        object.__setattr__(self, "amplitudes", amp)

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "n": self.n,
                "re": [format(x, ".17g") for x in self.amplitudes.real],
                "im": [format(x, ".17g") for x in self.amplitudes.imag],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Fiducial":
        import json

        obj = json.loads(text)
        amp = np.array([float(r) for r in obj["re"]]) + 1j * np.array(
            [float(i) for i in obj["im"]]
        )
        return cls(int(obj["n"]), amp / np.linalg.norm(amp))


def _fix_gauge(psi: np.ndarray) -> np.ndarray:
    """Normalize and make the largest-modulus amplitude real positive."""
    psi = psi / np.linalg.norm(psi)
    k = int(np.argmax(np.abs(psi)))
    return psi * np.exp(-1j * np.angle(psi[k]))


def frame_potential_bound(n: int) -> float:
    return 2.0 * n**3 / (n + 1.0)


def _overlaps(psi: np.ndarray, n: int) -> np.ndarray:
    """c_r = <psi| D_r |psi> over all n^2 displacement labels."""
    D = displacement_table(n)
    return np.einsum("i,rij,j->r", psi.conj(), D, psi)


def frame_potential(psi) -> float:
    """Sum over all operator pairs of |<psi| D_p^dag D_q |psi>|^4.

    D_p^dag D_q is a phase times D_(q-p), so the double sum collapses to
    n^2 * sum_r |<psi| D_r |psi>|^4.  Never below 2 n^3/(n+1).
    """
    if isinstance(psi, Fiducial):
        n, amp = psi.n, psi.amplitudes
    else:
        amp = np.asarray(psi, dtype=np.complex128)
        n = amp.shape[0]
        if abs(np.linalg.norm(amp) - 1.0) > 1e-10:
            raise ValueError("frame_potential requires a unit vector")
    c = _overlaps(amp, n)
    return float(n * n * np.sum(np.abs(c) ** 4))


def _fp_value_grad(x: np.ndarray, n: int, basis=None):
    """Scale-invariant frame potential and gradient in stacked real coordinates."""
    m = x.size // 2
    z = x[:m] + 1j * x[m:]
    psi = basis @ z if basis is not None else z
    nrm2 = np.real(np.vdot(psi, psi))
    D = displacement_table(n)
    c = np.einsum("i,rij,j->r", psi.conj(), D, psi)
    ac2 = np.abs(c) ** 2
    val = n * n * np.sum(ac2**2) / nrm2**4
    # d/d(conj psi) of sum |c_r|^4 = 2 |c_r|^2 (conj(c_r) D_r psi + c_r D_r^dag psi)
    t1 = np.einsum("r,rij,j->i", ac2 * c.conj(), D, psi)
    t2 = np.einsum("r,rji,j->i", ac2 * c, D.conj(), psi)
    gpsi = n * n * (2.0 * (t1 + t2) / nrm2**4 - 4.0 * np.sum(ac2**2) / nrm2**5 * psi)
    gz = basis.conj().T @ gpsi if basis is not None else gpsi
    return float(val), np.concatenate([2.0 * gz.real, 2.0 * gz.imag])


def _overlap_residuals(x: np.ndarray, n: int, basis=None) -> np.ndarray:
    m = x.size // 2
    z = x[:m] + 1j * x[m:]
    psi = basis @ z if basis is not None else z
    nrm2 = np.real(np.vdot(psi, psi))
    c = _overlaps(psi, n)
    return (np.abs(c[1:]) ** 2) / nrm2**2 - 1.0 / (n + 1.0)


def fiducial_search(
    n: int,
    seed=None,
    restrict_zauner: bool = False,
    max_restarts: int = 200,
    bound_tol: float = 1e-10,
) -> Fiducial:
    """Minimize the frame potential from random starts until the bound is met.

    With ``restrict_zauner`` the vector is parameterized inside the k=0
    eigenspace of the Zauner matrix, cutting the parameter count to
    floor((n+3)/3) complex numbers.  Raises FiducialSearchError (carrying the
    best value reached) if no restart attains the bound within ``bound_tol``.
    """
    rng = np.random.default_rng(seed)
    basis = zauner_eigenbasis(n, 0) if restrict_zauner else None
    m = basis.shape[1] if restrict_zauner else n
    bound = frame_potential_bound(n)
    best = math.inf
    best_vec = None
    for _ in range(max_restarts):
        x0 = rng.standard_normal(2 * m)
        res = scipy.optimize.minimize(
            _fp_value_grad,
            x0,
            args=(n, basis),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 4000, "ftol": 1e-18, "gtol": 1e-12},
        )
        # squared-overlap polish: the frame potential exceeds the bound by
        # exactly n^2 * sum of squared overlap deviations, so zeroing the
        # deviations lands on the bound at machine precision
        ls = scipy.optimize.least_squares(
            _overlap_residuals,
            res.x,
            args=(n, basis),
            method="trf",
            xtol=3e-16,
            ftol=3e-16,
            gtol=3e-16,
        )
        z = ls.x[:m] + 1j * ls.x[m:]
        psi = _fix_gauge(basis @ z if restrict_zauner else z)
        fp = frame_potential(psi)
        if fp - bound <= bound_tol:
            return Fiducial(n, psi)
        if fp < best:
            best, best_vec = fp, psi
    raise FiducialSearchError(
        f"no fiducial found for n={n} after {max_restarts} restarts; "
        f"best frame potential {best:.6e} vs bound {bound:.6e}",
        best_value=best,
        best_vector=best_vec,
    )


def wh_orbit(psi: Fiducial) -> np.ndarray:
    """n x n^2 matrix whose columns are D_p |psi> in lexicographic order."""
    D = displacement_table(psi.n)
    return np.einsum("rij,j->ir", D, psi.amplitudes)


def wh_gram(psi: Fiducial):
    """(GramCandidate, PhaseVector) of the displacement orbit of a fiducial.

    The raw orbit Gram is projected onto the exact candidate form through its
    phases; inputs whose overlaps are not equiangular are rejected.
    """
    n = psi.n
    V = wh_orbit(psi)
    raw = (V.conj().T @ V) / n
    try:
        G = gram_matrix_from_raw(n, raw)
    except GramFormError as exc:
        raise GramFormError(f"orbit of a non-fiducial vector: {exc}") from exc
    if not is_sic_gram(G, 1e-8):
        raise GramFormError("orbit Gram fails the SIC trace conditions at 1e-8")
    return G, phases_of(G)


def welch_check(vectors: np.ndarray, m: int):
    """Compare sum_{j,k} |<v_j|v_k>|^(2m) with its lower bound.

    ``vectors`` holds n^2 unit columns in C^n.  Returns (lhs, bound,
    satisfied); equality at m = 1, 2 characterizes tight frames and 2-designs.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    V = np.asarray(vectors, dtype=np.complex128)
    n, K = V.shape
    if K != n * n:
        raise ValueError(f"expected n^2 = {n * n} vectors, got {K}")
    if np.abs(np.linalg.norm(V, axis=0) - 1.0).max() > 1e-10:
        raise ValueError("columns must be unit vectors")
    G = V.conj().T @ V
    lhs = float(np.sum(np.abs(G) ** (2 * m)))
    bound = float(
        n**4 * math.factorial(n - 1) * math.factorial(m) / math.factorial(n + m - 1)
    )
    return lhs, bound, lhs >= bound - 1e-8


def clifford_order(n: int) -> int:
    """Order n^5 prod_{p | n} (1 - p^-2) of the Clifford group mod phases."""
    if n < 2:
        raise ValueError("n must be >= 2")
    order = n**5
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            order = order // (p * p) * (p * p - 1)
            while m % p == 0:
                m //= p
        p += 1
    if m > 1:
        order = order // (m * m) * (m * m - 1)
    return order
