"""Island identification and permutation equivalence of SIC Gram matrices.

Two Gram matrices related by a diagonal-unitary conjugation carry identical
triple-product phases, so that tensor labels a solution island.  Matching two
islands up to relabeling is an edge-colored-graph isomorphism problem: fixing
an anchor index turns the anchored triple phases into pairwise edge colors,
and the cocycle identity t(i,j,k) = t(a,i,j) + t(a,j,k) - t(a,i,k) guarantees
that matching all anchored triples matches the whole tensor.
"""

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
import hashlib
import itertools
import json
import math

import numpy as np

from .gramspace import (
    GramCandidate,
    PhaseVector,
    TWO_PI,
    gram_from_phases,
    is_sic_gram,
    pair_indices,
    phases_of,
    reduce_phases,
)


class NotSicError(ValueError):
    """Input Gram matrix does not pass the SIC trace test."""


class PermutationSearchCap(RuntimeError):
    """Backtracking node budget exhausted; result indeterminate, not negative."""


def circular_distance(x, y):
    d = np.mod(np.asarray(x) - np.asarray(y), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def _require_sic(G: GramCandidate, tol: float = 1e-8):
    if not is_sic_gram(G, tol):
        raise NotSicError("matrix fails the SIC trace conditions")


def _phase_matrix(G: GramCandidate) -> np.ndarray:
    """Antisymmetric matrix of upper-triangle phases (theta_jk = -theta_kj)."""
    rows, cols = pair_indices(G.N)
    pv = phases_of(G)
    T = np.zeros((G.N, G.N))
    T[rows, cols] = pv.phases
    return T - T.T


@dataclass(frozen=True)
class BargmannTensor:
    """Phases of triple products over i<j<k, the island invariant."""

    n: int
    values: np.ndarray  # length C(n^2, 3), lex order over triples, in [0, 2*pi)

    @property
    def N(self) -> int:
        return self.n * self.n

    def value(self, i, j, k) -> float:
        """Phase for an ordered triple of distinct 0-based indices."""
        idx = sorted([i, j, k])
        t = self.values[_triple_position(self.N)[idx[0], idx[1], idx[2]]]
        perm = (i, j, k)
        even = perm in (
            (idx[0], idx[1], idx[2]),
            (idx[1], idx[2], idx[0]),
            (idx[2], idx[0], idx[1]),
        )
        return float(t if even else (TWO_PI - t) % TWO_PI)


@lru_cache(maxsize=None)
def _triples(N: int):
    t = np.array(list(itertools.combinations(range(N), 3)), dtype=np.int64)
    t.setflags(write=False)
    return t


@lru_cache(maxsize=None)
def _triple_position(N: int):
    t = _triples(N)
    pos = np.full((N, N, N), -1, dtype=np.int64)
    pos[t[:, 0], t[:, 1], t[:, 2]] = np.arange(len(t))
    pos.setflags(write=False)
    return pos


def bargmann(G: GramCandidate) -> BargmannTensor:
    """Triple-product phases of a SIC Gram matrix.

    Entries with a repeated index are real non-negative (phase 0) and are
    excluded.  The tensor is unchanged by any diagonal-unitary conjugation of
    the Gram matrix.
    """
    _require_sic(G)
    T = _phase_matrix(G)
    t = _triples(G.N)
    i, j, k = t[:, 0], t[:, 1], t[:, 2]
    vals = reduce_phases(T[i, j] + T[j, k] - T[i, k])
    return BargmannTensor(G.n, vals)


def same_island(P: GramCandidate, Q: GramCandidate, tol: float = 1e-6) -> bool:
    """True iff the two Bargmann tensors agree entrywise within tol."""
    tp = bargmann(P)
    tq = bargmann(Q)
    if tp.N != tq.N:
        return False
    return bool(circular_distance(tp.values, tq.values).max() <= tol)


# ---------------------------------------------------------------------------
# generating sets

@dataclass(frozen=True)
class GeneratingSet:
    """Clustered distinct phases of the Bargmann tensor with multiplicities."""

    values: np.ndarray
    multiplicities: np.ndarray
    cluster_radius: float
    ambiguous: bool = False

    def __post_init__(self):
        if np.any(np.diff(self.values) <= 0):
            raise ValueError("generating-set values must be strictly increasing")
        if np.any(self.multiplicities <= 0):
            raise ValueError("multiplicities must be positive")

    @property
    def size(self) -> int:
        return len(self.values)


def _cluster_circle(values: np.ndarray, radius: float):
    """Single-linkage clustering of angles with wraparound at 2*pi."""
    order = np.argsort(values)
    v = values[order]
    gaps = np.diff(v)
    breaks = np.nonzero(gaps > radius)[0]
    segments = np.split(np.arange(len(v)), breaks + 1)
    # merge the first and last segment when they touch across 0 == 2*pi
    if len(segments) > 1 and (v[0] + TWO_PI) - v[-1] <= radius:
        segments[0] = np.concatenate([segments[-1], segments[0]])
        segments = segments[:-1]
    clusters = []
    for seg in segments:
        members = v[seg]
        # circular mean keeps wrapped clusters centered near 0
        center = math.atan2(np.sin(members).mean(), np.cos(members).mean()) % TWO_PI
        if circular_distance(center, 0.0) <= radius / 2:
            center = 0.0
        clusters.append((center, len(seg)))
    clusters.sort()
    return clusters


def generating_set(G: GramCandidate, cluster_tol: float = 1e-6) -> GeneratingSet:
    """Distinct clustered phases appearing in the Bargmann tensor, sorted ascending.

    A triple product read against the opposite orientation carries the
    negated phase, so the set is computed over both orientations of every
    triple and is closed under x -> 2*pi - x.  Repeated-index products are
    real non-negative and contribute the member 0.  Clusters closer than
    twice the clustering radius are flagged ambiguous.
    """
    tensor = bargmann(G)
    doubled = np.concatenate([tensor.values, reduce_phases(-tensor.values)])
    clusters = _cluster_circle(doubled, cluster_tol)
    vals = [c for c, _ in clusters]
    mult = [m for _, m in clusters]
    if circular_distance(vals[0], 0.0) > cluster_tol:
        vals.insert(0, 0.0)
        mult.insert(0, 0)
    # degenerate index pairs {i,i,j} all sit at phase 0
    mult[0] += G.N * (G.N - 1)
    vals = np.array(vals)
    mult = np.array(mult, dtype=np.int64)
    gaps = np.diff(np.concatenate([vals, [vals[0] + TWO_PI]])) if len(vals) > 1 else np.array([TWO_PI])
    return GeneratingSet(vals, mult, cluster_tol, ambiguous=bool((gaps < 2 * cluster_tol).any()))


def generating_sets_match(a: GeneratingSet, b: GeneratingSet, tol: float) -> bool:
    if a.size != b.size:
        return False
    return bool(circular_distance(a.values, b.values).max() <= tol)


def gram_frequencies(G: GramCandidate, anchor: int = 1, cluster_tol: float = 1e-6):
    """Frequency profile of generating phases over the anchored canonical Gram.

    Counts run over the full off-diagonal entry set (both triangles) of the
    Gram matrix canonicalized at ``anchor``; returned as (values,
    frequencies) sorted by value.
    """
    pv = canonicalize(phases_of(G), anchor)
    rows, cols = pair_indices(G.N)
    upper = pv.phases
    both = np.concatenate([upper, reduce_phases(-upper)])
    clusters = _cluster_circle(both, cluster_tol)
    vals = np.array([c for c, _ in clusters])
    freq = np.array([m for _, m in clusters], dtype=np.int64)
    return vals, freq


def island_hash(gen: GeneratingSet) -> str:
    """Stable first-filter key: generating set rounded to 1e-5, sorted, hashed."""
    rounded = tuple(round(float(v), 5) % round(TWO_PI, 5) for v in gen.values)
    digest = hashlib.sha256(repr(rounded).encode()).hexdigest()
    return digest[:16]


# ---------------------------------------------------------------------------
# canonical island representative

def canonicalize(pv: PhaseVector, anchor: int = 1) -> PhaseVector:
    """Island representative with all phases in row/column ``anchor`` (1-based) zeroed.

    Applies the diagonal shift with c_j = theta_(j,anchor), which maps
    phi_jk to phi_jk + phi_(a,j) - phi_(a,k); phases reduce to [0, 2*pi).
    """
    n = pv.n
    N = n * n
    if not (1 <= anchor <= N):
        raise ValueError(f"anchor must be in 1..{N}")
    a = anchor - 1
    rows, cols = pair_indices(N)
    T = np.zeros((N, N))
    T[rows, cols] = pv.phases
    T -= T.T
    shifted = T[rows, cols] + T[a, rows] - T[a, cols]
    return PhaseVector(n, reduce_phases(shifted))


# ---------------------------------------------------------------------------
# permutations

@dataclass(frozen=True)
class PermutationMap:
    """Bijection on 0..N-1 acting on Gram rows and columns."""

    mapping: tuple

    def __post_init__(self):
        m = tuple(int(v) for v in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ValueError("mapping is not a bijection on 0..N-1")
        object.__setattr__(self, "mapping", m)

    @property
    def size(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        return self.mapping[i]

    def compose(self, other: "PermutationMap") -> "PermutationMap":
        """self after other: (self o other)(i) = self(other(i))."""
        return PermutationMap(tuple(self.mapping[o] for o in other.mapping))

    def inverse(self) -> "PermutationMap":
        inv = [0] * self.size
        for i, v in enumerate(self.mapping):
            inv[v] = i
        return PermutationMap(tuple(inv))

    def is_identity(self) -> bool:
        return all(v == i for i, v in enumerate(self.mapping))

    def order(self) -> int:
        seen = [False] * self.size
        out = 1
        for i in range(self.size):
            if seen[i]:
                continue
            length = 0
            j = i
            while not seen[j]:
                seen[j] = True
                j = self.mapping[j]
                length += 1
            out = math.lcm(out, length)
        return out

    def fixed_points(self) -> tuple:
        return tuple(i for i, v in enumerate(self.mapping) if v == i)

    def to_one_based(self) -> list:
        return [v + 1 for v in self.mapping]

    @classmethod
    def identity(cls, N: int) -> "PermutationMap":
        return cls(tuple(range(N)))

    @classmethod
    def from_one_based(cls, seq) -> "PermutationMap":
        return cls(tuple(int(v) - 1 for v in seq))


def relabel_gram(G: GramCandidate, sigma: PermutationMap) -> GramCandidate:
    """Conjugation by the permutation matrix: entries (j,k) -> (sigma(j), sigma(k))."""
    if sigma.size != G.N:
        raise ValueError("permutation size does not match the Gram matrix")
    idx = np.array(sigma.mapping)
    return GramCandidate(G.n, G.entries[np.ix_(idx, idx)])


# ---------------------------------------------------------------------------
# anchored backtracking matcher

def _digitize_against(codebook: np.ndarray, values: np.ndarray, tol: float):
    """Map each value to the index of the codebook entry within tol, else -1."""
    ext = np.concatenate([codebook, codebook + TWO_PI, codebook - TWO_PI])
    labels = np.concatenate([np.arange(len(codebook))] * 3)
    order = np.argsort(ext)
    ext, labels = ext[order], labels[order]
    pos = np.searchsorted(ext, values)
    out = np.full(len(values), -1, dtype=np.int64)
    for shift in (0, -1):
        cand = np.clip(pos + shift, 0, len(ext) - 1)
        ok = np.abs(ext[cand] - values) <= tol
        out[ok & (out < 0)] = labels[cand[ok & (out < 0)]]
    return out


def _anchored_colors(T: np.ndarray, anchor: int, codebook: np.ndarray, tol: float):
    """Color matrix C[u, v] = code of t(anchor, u, v) for u != v, both != anchor.

    Returns None when some anchored phase is not in the codebook.
    """
    N = T.shape[0]
    others = np.array([v for v in range(N) if v != anchor])
    sub = T[anchor, others][:, None] + T[np.ix_(others, others)] - T[anchor, others][None, :]
    vals = reduce_phases(sub)
    codes = _digitize_against(codebook, vals.ravel(), tol).reshape(len(others), len(others))
    np.fill_diagonal(codes, -2)
    if (codes == -1).any():
        return None, others
    return codes, others


def _vertex_signature(colors: np.ndarray, row: int):
    return tuple(sorted(Counter(colors[row].tolist()).items()))


class _Matcher:
    """Backtracking assignment of reference vertices onto source vertices."""

    def __init__(self, src_colors, ref_colors, node_cap):
        self.src = src_colors
        self.ref = ref_colors
        self.node_cap = node_cap
        self.nodes = 0
        k = ref_colors.shape[0]
        self.src_sig = [_vertex_signature(src_colors, i) for i in range(k)]
        self.ref_sig = [_vertex_signature(ref_colors, i) for i in range(k)]
        # process rare color signatures first; rarity prunes hardest
        sig_freq = Counter(self.ref_sig)
        self.order = sorted(range(k), key=lambda v: (sig_freq[self.ref_sig[v]], v))

    def compatible(self):
        return Counter(self.src_sig) == Counter(self.ref_sig)

    def solve(self, find_all=False):
        k = self.ref.shape[0]
        assignment = [-1] * k
        used = [False] * k
        solutions = []

        def extend(depth):
            self.nodes += 1
            if self.nodes > self.node_cap:
                raise PermutationSearchCap(f"node cap {self.node_cap} exceeded")
            if depth == len(self.order):
                solutions.append(list(assignment))
                return not find_all
            v = self.order[depth]
            for u in range(k):
                if used[u] or self.src_sig[u] != self.ref_sig[v]:
                    continue
                ok = True
                for w in self.order[:depth]:
                    if self.src[assignment[w], u] != self.ref[w, v]:
                        ok = False
                        break
                if not ok:
                    continue
                assignment[v] = u
                used[u] = True
                if extend(depth + 1):
                    return True
                assignment[v] = -1
                used[u] = False
            return False

        extend(0)
        return solutions


def find_permutation(
    P: GramCandidate,
    Q: GramCandidate,
    tol: float = 1e-6,
    node_cap: int = 10**6,
):
    """Permutation sigma with relabel(P, sigma) in the island of Q, or None.

    The generating sets are compared first; different sets exclude unitary
    equivalence outright.  Raises PermutationSearchCap if the backtracking
    budget is exhausted before a definite answer.
    """
    _require_sic(P)
    _require_sic(Q)
    if P.N != Q.N:
        return None
    gen_p = generating_set(P)
    gen_q = generating_set(Q)
    if not generating_sets_match(gen_p, gen_q, max(tol, 10 * gen_q.cluster_radius)):
        return None
    codebook = gen_q.values
    tp = _phase_matrix(P)
    tq = _phase_matrix(Q)
    ref_colors, ref_others = _anchored_colors(tq, 0, codebook, tol)
    if ref_colors is None:
        return None
    nodes_spent = 0
    for a in range(P.N):
        src_colors, src_others = _anchored_colors(tp, a, codebook, tol)
        if src_colors is None:
            continue
        matcher = _Matcher(src_colors, ref_colors, node_cap - nodes_spent)
        if not matcher.compatible():
            continue
        sols = matcher.solve(find_all=False)
        nodes_spent += matcher.nodes
        if sols:
            mapping = [0] * P.N
            mapping[0] = a
            for v_idx, u_idx in enumerate(sols[0]):
                mapping[ref_others[v_idx]] = src_others[u_idx]
            sigma = PermutationMap(tuple(mapping))
            if same_island(relabel_gram(P, sigma), Q, max(tol, 1e-6)):
                return sigma
    return None


def automorphisms_fixing(
    G: GramCandidate,
    anchor: int,
    tol: float = 1e-6,
    node_cap: int = 10**6,
):
    """Nontrivial island automorphisms fixing the 1-based ``anchor`` index.

    Every returned permutation sigma satisfies sigma(anchor) = anchor and
    maps the island to itself (equal Bargmann tensors).
    """
    _require_sic(G)
    a = anchor - 1
    gen = generating_set(G)
    T = _phase_matrix(G)
    colors, others = _anchored_colors(T, a, gen.values, tol)
    if colors is None:
        return []
    matcher = _Matcher(colors, colors, node_cap)
    sols = matcher.solve(find_all=True)
    out = []
    for sol in sols:
        mapping = [0] * G.N
        mapping[a] = a
        for v_idx, u_idx in enumerate(sol):
            mapping[others[v_idx]] = others[u_idx]
        sigma = PermutationMap(tuple(mapping))
        if sigma.is_identity():
            continue
        if same_island(relabel_gram(G, sigma), G, max(tol, 1e-6)):
            out.append(sigma)
    return out


# ---------------------------------------------------------------------------
# permutation groups

class GroupClosureError(RuntimeError):
    pass


@dataclass(frozen=True)
class PermutationGroup:
    elements: tuple
    order_census: tuple  # sorted (order, count) pairs
    h_subgroup: tuple
    h_order_divisor: int  # the divisor d with h^d = identity for all h in H

    @property
    def order(self) -> int:
        return len(self.elements)

    def census_dict(self) -> dict:
        return {k: v for k, v in self.order_census}


def group_closure(generators, size_cap: int = 10**6) -> PermutationGroup:
    """Closure of permutation generators under composition, with an H-scan.

    The scan looks for the subgroup of elements whose order divides n (then
    2n as a fallback), reporting it when it is closed and of size n^2; that
    is the translation-group fingerprint at the permutation level.
    """
    gens = [g if isinstance(g, PermutationMap) else PermutationMap(tuple(g)) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    N = gens[0].size
    if any(g.size != N for g in gens):
        raise ValueError("generators act on different index sets")
    ident = tuple(range(N))
    seen = {ident}
    frontier = [ident]
    gen_tuples = [g.mapping for g in gens]
    while frontier:
        nxt = []
        for e in frontier:
            for g in gen_tuples:
                prod = tuple(g[i] for i in e)
                if prod not in seen:
                    seen.add(prod)
                    nxt.append(prod)
                    if len(seen) > size_cap:
                        raise GroupClosureError(f"closure exceeded size cap {size_cap}")
        frontier = nxt
    elements = tuple(PermutationMap(e) for e in sorted(seen))
    census = Counter(e.order() for e in elements)

    n = math.isqrt(N)
    h_sub, divisor = (), 0
    for d in (n, 2 * n):
        cand = [e for e in elements if d % e.order() == 0]
        if len(cand) == N and _is_closed(cand):
            h_sub, divisor = tuple(cand), d
            break
    return PermutationGroup(
        elements=elements,
        order_census=tuple(sorted(census.items())),
        h_subgroup=h_sub,
        h_order_divisor=divisor,
    )


def _is_closed(elements) -> bool:
    pool = {e.mapping for e in elements}
    for x in elements:
        for y in elements:
            if tuple(x.mapping[i] for i in y.mapping) not in pool:
                return False
    return True


# ---------------------------------------------------------------------------
# report assembly

def classification_report(
    G: GramCandidate,
    reference: GramCandidate | None = None,
    with_automorphisms: bool = True,
    tol: float = 1e-6,
) -> dict:
    """Full classification of one solution as a JSON-ready dict."""
    gen = generating_set(G)
    vals, freq = gram_frequencies(G)
    out = {
        "island_hash": island_hash(gen),
        "gen_set": [float(v) for v in gen.values],
        "frequencies": [int(v) for v in freq],
        "matched_reference": False,
        "permutation": None,
    }
    if reference is not None:
        sigma = find_permutation(G, reference, tol=tol)
        if sigma is not None:
            out["matched_reference"] = True
            out["permutation"] = sigma.to_one_based()
    if with_automorphisms:
        gens = []
        for anchor in range(1, G.N + 1):
            gens.extend(automorphisms_fixing(G, anchor, tol=tol))
        if gens:
            group = group_closure(gens)
            out["aut_group_order"] = group.order
            out["H_order"] = len(group.h_subgroup)
            out["element_order_census"] = {str(k): v for k, v in group.order_census}
        else:
            out["aut_group_order"] = 1
            out["H_order"] = 0
            out["element_order_census"] = {"1": 1}
    return out


def report_to_json(report: dict) -> str:
    return json.dumps(report)
