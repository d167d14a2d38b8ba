"""Recovery of SIC-POVM vectors from a Gram matrix.

A SIC Gram matrix is a rank-n projector, so an orthonormal basis of its
column space stacked as rows gives the n x n^2 synthesis map V with
V V^dag = I and V^dag V equal to the Gram matrix; the columns of sqrt(n) V
are the unit SIC vectors.
"""

from dataclasses import dataclass
import json

import numpy as np

from .gramspace import GramCandidate, gram_matrix_from_raw, is_sic_gram


class RankError(ValueError):
    """Effective rank of the Gram matrix is not n; carries the spectrum."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class NotSicGramError(ValueError):
    pass


@dataclass(frozen=True)
class VectorSystem:
    """Synthesis map whose columns, scaled by sqrt(n), are the SIC vectors."""

    n: int
    matrix: np.ndarray  # n x n^2

    def __post_init__(self):
        V = np.asarray(self.matrix, dtype=np.complex128)
        n = self.n
        if V.shape != (n, n * n):
            raise ValueError(f"expected shape ({n}, {n * n})")
        object.__setattr__(self, "matrix", V)
        if np.abs(V @ V.conj().T - np.eye(n)).max() > 1e-10:
            raise ValueError("rows are not orthonormal (V V^dag != I)")
        norms = np.linalg.norm(V, axis=0) * np.sqrt(n)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("columns scaled by sqrt(n) are not unit vectors")

    @property
    def vectors(self) -> np.ndarray:
        """Unit SIC vectors as columns."""
        return np.sqrt(self.n) * self.matrix

    def to_json(self) -> str:
        cols = [
            {
                "re": [format(x, ".17g") for x in self.matrix[:, k].real],
                "im": [format(x, ".17g") for x in self.matrix[:, k].imag],
            }
            for k in range(self.matrix.shape[1])
        ]
        return json.dumps({"n": self.n, "columns": cols})

    @classmethod
    def from_json(cls, text: str) -> "VectorSystem":
        obj = json.loads(text)
        n = int(obj["n"])
        cols = [
            np.array([float(v) for v in c["re"]]) + 1j * np.array([float(v) for v in c["im"]])
            for c in obj["columns"]
        ]
        return cls(n, np.stack(cols, axis=1))


def vectors_from_gram(G: GramCandidate, rank_tol: float = 1e-6) -> VectorSystem:
    """Orthonormalize the rank-n column space of a SIC Gram matrix.

    Greedy pivoted orthogonalization: at each step the column with the
    largest residual norm is normalized and removed from the rest.  Exactly n
    pivots must clear the rank threshold, otherwise the spectrum is attached
    to the rejection.
    """
    if not is_sic_gram(G, 1e-8):
        raise NotSicGramError("reconstruction requires a SIC Gram matrix (tol 1e-8)")
    n, N = G.n, G.N
    R = G.entries.copy()
    basis = []
    for _ in range(n):
        norms = np.linalg.norm(R, axis=0)
        p = int(np.argmax(norms))
        if norms[p] < rank_tol:
            raise RankError(
                f"column space collapsed after {len(basis)} pivots",
                spectrum=np.linalg.eigvalsh(G.entries),
            )
        q = R[:, p] / norms[p]
        basis.append(q)
        R -= np.outer(q, q.conj() @ R)
    residual = np.linalg.norm(R, axis=0).max()
    if residual > rank_tol:
        raise RankError(
            f"rank exceeds n: residual column norm {residual:.3e} after n pivots",
            spectrum=np.linalg.eigvalsh(G.entries),
        )
    V = np.stack([q.conj() for q in basis])
    sys = VectorSystem(n, V)
    if np.abs(V.conj().T @ V - G.entries).max() > 1e-8:
        raise RankError("reconstructed projector disagrees with the Gram matrix")
    return sys


def regram(sys: VectorSystem) -> GramCandidate:
    """Gram candidate of a vector system (projected onto the exact form)."""
    V = sys.matrix
    return gram_matrix_from_raw(sys.n, V.conj().T @ V)


def povm_elements(sys: VectorSystem):
    """Rank-1 positive operators E_k = |psi_k><psi_k| / n summing to identity."""
    V = sys.matrix
    return [np.outer(V[:, k], V[:, k].conj()) for k in range(V.shape[1])]
