"""Random-restart minimization of S = (f-n)^2 + (g-n)^2 over phase vectors.

The descent is Polak-Ribiere conjugate gradient with a Wolfe line search,
restarted on loss of descent.  S vanishes to fourth order at a solution (the
solutions are critical points of both f and g), so once the iterate is inside
the solution basin a Gauss-Newton finisher on the two-component residual
(f - n, g - n) takes over and drives the residual to the arithmetic floor in
a handful of steps.  Extended-precision refinement of a found solution is a
separate operation built on the same residual system.
"""

from dataclasses import dataclass, field
import math
import warnings

import mpmath as mp
import numpy as np
from scipy.optimize import line_search

from .calculus import project_out_gamma, value_and_grad
from .gramspace import (
    PhaseVector,
    gram_from_phases,
    is_sic_gram,
    pair_indices,
    phase_count,
    quad_indices,
    triple_indices,
    TraceReport,
)

CONVERGED = "converged"
LOCAL_MINIMUM = "local_minimum"
BUDGET_EXHAUSTED = "budget_exhausted"


class RefinementError(RuntimeError):
    """Refinement diverged; ``best`` holds the best iterate reached."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class SearchConfig:
    n: int
    max_iterations: int = 20000
    gradient_tolerance: float = 1e-12
    s_success_threshold: float = 1e-16
    s_local_min_threshold: float = 1e-10
    restart_budget: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.s_success_threshold < self.s_local_min_threshold:
            raise ValueError("s_success_threshold must be below s_local_min_threshold")


@dataclass(frozen=True)
class SearchOutcome:
    status: str
    phase_vector: PhaseVector
    report: TraceReport
    iterations: int
    seed: object = None

    def __post_init__(self):
        if self.status == CONVERGED:
            assert self.report.s <= 1e-16, "converged outcome with large residual"


def random_phase_vector(n: int, rng) -> PhaseVector:
    """Uniform i.i.d. phases on [0, 2*pi); reproducible from the generator seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return PhaseVector(n, rng.uniform(0.0, 2.0 * math.pi, phase_count(n)))


def _objective(x: np.ndarray, n: int):
    f, g, gf, gg = value_and_grad(x, n)
    df, dg = f - n, g - n
    return df * df + dg * dg, 2.0 * df * gf + 2.0 * dg * gg


def _gn_polish(x: np.ndarray, n: int, max_steps: int = 500):
    """Damped Gauss-Newton on (f-n, g-n) in extended machine precision.

    Levenberg-Marquardt in the two-dimensional residual space: the step is
    -J^T (J J^T + lambda I)^-1 r, so heavy damping degrades gracefully to
    steepest descent.  Damping is essential near solution manifolds with
    soft transverse directions (n = 2, 3), where the plain Gauss-Newton step
    far exceeds its validity region.  Monotone: steps are kept only when the
    objective drops, so the loop is a no-op at the arithmetic floor.
    """
    x = x.astype(np.longdouble)

    def ev(z):
        f, g, gf, gg = value_and_grad(z, n, dtype=np.clongdouble)
        return f, g, gf.astype(np.longdouble), gg.astype(np.longdouble)

    f, g, gf, gg = ev(x)
    s = (f - n) ** 2 + (g - n) ** 2
    lam = 0.0
    rejects = 0
    for _ in range(max_steps):
        J = np.stack([gf, gg]).astype(np.float64)
        r = np.array([float(f - n), float(g - n)])
        A = J @ J.T
        scale = np.trace(A)
        if scale == 0.0:
            break
        accepted = False
        for _ in range(25):
            try:
                lam_vec = np.linalg.solve(A + lam * scale * np.eye(2), r)
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-14)
                continue
            step = -(J.T @ lam_vec).astype(np.longdouble)
            xn = x + step
            f2, g2, gf2, gg2 = ev(xn)
            s2 = (f2 - n) ** 2 + (g2 - n) ** 2
            if s2 < s:
                x, f, g, gf, gg, s = xn, f2, g2, gf2, gg2, s2
                lam = lam / 5.0 if lam > 1e-14 else 0.0
                accepted = True
                break
            lam = max(lam * 10.0, 1e-14)
            if lam > 1e8:
                break
        if not accepted:
            rejects += 1
            if rejects >= 2:
                break
        else:
            rejects = 0
    return x.astype(np.float64), float(s)


def _chord_polish(x: np.ndarray, n: int, max_steps: int = 12):
    """Frozen-Newton iteration on the gradient system in extended precision.

    The stacked Hessian pair at the entry point is pseudo-inverted once (the
    diagonal-shift null directions are cut off) and applied to the exact
    gradients; each step contracts the distance to the solution manifold by
    roughly the entry distance.  This is what pins solutions near manifolds
    with soft transverse directions (n = 2, 3), where first-order polishing
    levels off far above the arithmetic floor.
    """
    from .calculus import hessian_pair_matrix

    H = hessian_pair_matrix(x, n)
    stacked = np.vstack([H.h_f, H.h_g])
    U, sv, Vt = np.linalg.svd(stacked, full_matrices=False)
    keep = sv > 1e-6 * sv.max()
    pinv = (Vt[keep].T / sv[keep]) @ U[:, keep].T

    def state(z):
        f, g, gf, gg = value_and_grad(z, n, dtype=np.clongdouble)
        s = float((f - n) ** 2 + (g - n) ** 2)
        grad = np.concatenate([gf, gg]).astype(np.longdouble)
        return s, grad

    x = x.astype(np.longdouble)
    s, grad = state(x)
    best = (s, x, float(np.abs(grad).max()))
    for _ in range(max_steps):
        x = x - (pinv.astype(np.longdouble) @ grad)
        s, grad = state(x)
        gmax = float(np.abs(grad).max())
        if s < best[0] or (s <= best[0] * 4 and gmax < best[2]):
            best = (s, x.copy(), gmax)
        else:
            break
    return best[1].astype(np.float64), best[0]


def minimize(phi0: PhaseVector, config: SearchConfig, callback=None) -> SearchOutcome:
    """Conjugate-gradient descent on S with a Gauss-Newton finisher.

    Terminates on the success threshold, on gradient stall, or at the
    iteration cap; the objective is non-increasing across accepted steps.
    Stalled runs with S above the local-minimum threshold are triaged as
    local minima of the trace surfaces.
    """
    n = config.n
    x = phi0.phases.copy()
    s, gs = _objective(x, n)
    if not (np.isfinite(s) and np.all(np.isfinite(gs))):
        raise FloatingPointError(f"non-finite objective at the start point (s={s})")

    if s <= config.s_success_threshold:
        # already at a solution; report it untouched
        return _outcome(x, n, 0, config)

    switch = max(1e-9, config.s_success_threshold * 1e6)
    it = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # scipy warns when the Wolfe search fails
        for _ in range(4):
            s_before = s
            x, s, gs, it, stalled = _cg_phase(x, s, gs, n, it, switch, config, callback)
            x2, s2 = _gn_polish(x, n)
            polished = s2 < s
            if polished:
                x, s = x2, s2
            if s <= 1e-6 and s > 1e-26:
                x3, s3 = _chord_polish(x, n)
                if s3 < s:
                    x, s = x3, s3
                    polished = True
            if s <= config.s_success_threshold:
                break
            if stalled and not polished:
                break  # no route forward: triage by the residual level
            if it >= config.max_iterations:
                break
            if s > 0.25 * s_before:
                break  # a whole round without real progress
            # finisher could not land; demand a deeper descent before retrying
            switch = max(s * 1e-4, 1e-28)
            s, gs = _objective(x, n)
    return _outcome(x, n, it, config)


def _cg_phase(x, s, gs, n, it, switch, config, callback):
    """Polak-Ribiere descent until s crosses ``switch`` or progress stalls."""
    d = -gs
    old_s = None
    while it < config.max_iterations:
        if s <= switch:
            return x, s, gs, it, False
        if math.sqrt(float(gs @ gs)) < config.gradient_tolerance:
            return x, s, gs, it, True
        if float(gs @ d) >= 0.0:
            d = -gs
        alpha = line_search(
            lambda z: _objective(z, n)[0],
            lambda z: _objective(z, n)[1],
            x, d, gfk=gs, old_fval=s, old_old_fval=old_s, c2=0.1, maxiter=30,
        )[0]
        if alpha is None:
            if np.array_equal(d, -gs):
                return x, s, gs, it, True
            d = -gs
            continue
        old_s = s
        x = x + alpha * d
        g_prev = gs
        s, gs = _objective(x, n)
        if not (np.isfinite(s) and np.all(np.isfinite(gs))):
            raise FloatingPointError(f"non-finite objective at iteration {it}")
        beta = max(0.0, float(gs @ (gs - g_prev)) / float(g_prev @ g_prev))
        d = -gs + beta * d
        it += 1
        if callback is not None:
            callback(it, s)
    return x, s, gs, it, False


def _outcome(x: np.ndarray, n: int, iterations: int, config: SearchConfig) -> SearchOutcome:
    f, g, gf, gg = value_and_grad(x, n)
    df, dg = f - n, g - n
    s = df * df + dg * dg
    grad_s = 2.0 * df * gf + 2.0 * dg * gg
    report = TraceReport(float(f), float(g), float(s), float(np.linalg.norm(grad_s)))
    pv = PhaseVector(n, x)
    if s <= config.s_success_threshold and is_sic_gram(gram_from_phases(pv), 1e-8):
        status = CONVERGED
    elif s >= config.s_local_min_threshold:
        status = LOCAL_MINIMUM
    else:
        status = BUDGET_EXHAUSTED
    return SearchOutcome(status, pv, report, iterations, seed=config.seed)


# ---------------------------------------------------------------------------
# extended-precision refinement

def _mp_trace_state(phases, n):
    """f, g and both gradients from the cosine sums in mpmath arithmetic."""
    N = n * n
    M = phase_count(n)
    e_ab, e_bc, e_ac = triple_indices(N)
    ab, ac, ad, bc, bd, cd = quad_indices(N)
    one = mp.mpf(1)
    c3f = 6 / (mp.mpf(n) ** 3 * (n + one) ** mp.mpf("1.5"))
    c3g = 24 / (mp.mpf(n) ** 4 * (n + one) ** mp.mpf("1.5"))
    c4 = 8 / (mp.mpf(n) ** 4 * (n + one) ** 2)

    f = mp.mpf(3 * n - 2) / n
    g = 2 * (mp.mpf(n) ** 3 + 2 * n**2 - n - 1) / (mp.mpf(n) ** 2 * (n + 1))
    gf = [mp.mpf(0)] * M
    gg = [mp.mpf(0)] * M
    for i in range(len(e_ab)):
        t = phases[e_ab[i]] + phases[e_bc[i]] - phases[e_ac[i]]
        ct, st = mp.cos(t), mp.sin(t)
        f += c3f * ct
        g += c3g * ct
        gf[e_ab[i]] -= c3f * st
        gf[e_bc[i]] -= c3f * st
        gf[e_ac[i]] += c3f * st
        gg[e_ab[i]] -= c3g * st
        gg[e_bc[i]] -= c3g * st
        gg[e_ac[i]] += c3g * st
    fams = (
        ((ab, bc, cd, ad), (1, 1, 1, -1)),
        ((ab, bd, cd, ac), (1, 1, -1, -1)),
        ((ac, bc, bd, ad), (1, -1, 1, -1)),
    )
    for ids, signs in fams:
        for i in range(len(ab)):
            t = mp.mpf(0)
            for sgn, e in zip(signs, ids):
                t += sgn * phases[e[i]]
            ct, st = mp.cos(t), mp.sin(t)
            g += c4 * ct
            for sgn, e in zip(signs, ids):
                gg[e[i]] -= c4 * sgn * st
    return f, g, gf, gg


def mp_trace_values(phases, n, dps: int = 60):
    """(Tr P^3, Tr P^4) in mpmath through explicit matrix powers (oracle path)."""
    with mp.workdps(dps):
        N = n * n
        rows, cols = pair_indices(N)
        r = 1 / (n * mp.sqrt(n + 1))
        P = mp.zeros(N, N)
        for m_, (a, b) in enumerate(zip(rows, cols)):
            w = r * mp.expjpi(phases[m_] / mp.pi)
            P[a, b] = w
            P[b, a] = mp.conj(w)
        for i in range(N):
            P[i, i] = mp.mpf(1) / n
        P2 = P * P
        P3 = P2 * P
        f = mp.re(sum(P3[i, i] for i in range(N)))
        g = mp.re(sum((P2 * P2)[i, i] for i in range(N)))
        return f, g


def _mp_project_out_gamma(vec, n):
    N = n * n
    rows, cols = pair_indices(N)
    colsum = [mp.mpf(0)] * N
    for m_, (a, b) in enumerate(zip(rows, cols)):
        colsum[b] += vec[m_]
        colsum[a] -= vec[m_]
    c = [v / N for v in colsum]
    return [vec[m_] - (c[b] - c[a]) for m_, (a, b) in enumerate(zip(rows, cols))]


@dataclass(frozen=True)
class RefinedSolution:
    """Phase vector polished in arbitrary precision.

    ``mp_phases`` carries the full-precision values; ``phase_vector`` is the
    float64 downcast used everywhere else in the pipeline.
    """

    n: int
    mp_phases: tuple
    residual: float
    target_digits: int

    @property
    def phase_vector(self) -> PhaseVector:
        return PhaseVector(self.n, np.array([float(p) for p in self.mp_phases]))


def refine(pv: PhaseVector, target_digits: int = 30, max_steps: int = 60) -> RefinedSolution:
    """Newton-type polish of a solution to ``target_digits`` residual digits.

    Chord iteration on the gradient system: the stacked Hessian pair at the
    (double-polished) start is pseudo-inverted once in machine precision and
    applied to the exact mpmath gradients each step.  The frozen operator is
    accurate to the start point's distance from the solution manifold, so
    every step multiplies the error by roughly that distance.  Converged
    means |f-n|, |g-n| and both gradients projected on the span of the
    three-term combination vectors are all below 10^-target_digits.
    """
    n = pv.n
    if not is_sic_gram(gram_from_phases(pv), 1e-6):
        raise ValueError("refine requires a candidate passing the SIC test at 1e-6")
    from .calculus import hessian_pair_matrix

    x0, _ = _gn_polish(pv.phases.copy(), n)
    H = hessian_pair_matrix(x0, n)
    stacked = np.vstack([H.h_f, H.h_g])
    U, sv, Vt = np.linalg.svd(stacked, full_matrices=False)
    keep = sv > 1e-6 * sv.max()  # drop the diagonal-shift null directions
    pinv = (Vt[keep].T / sv[keep]) @ U[:, keep].T  # M x 2M

    target = mp.mpf(10) ** (-target_digits)
    with mp.workdps(int(target_digits * 2.2) + 25):
        x = [mp.mpf(float(p)) for p in x0]

        def residual_state(z):
            f, g, gf, gg = _mp_trace_state(z, n)
            pf = _mp_project_out_gamma(gf, n)
            pg = _mp_project_out_gamma(gg, n)
            rho = max(abs(f - n), abs(g - n), max(abs(v) for v in pf), max(abs(v) for v in pg))
            return f, g, gf, gg, rho

        f, g, gf, gg, rho = residual_state(x)
        best = (rho, list(x))
        grew = 0
        M = phase_count(n)
        for _ in range(max_steps):
            if rho <= target:
                break
            grad = gf + gg  # concatenated residual, length 2M
            x = [
                xi - mp.fsum(mp.mpf(pinv[i, j]) * grad[j] for j in range(2 * M) if pinv[i, j])
                for i, xi in enumerate(x)
            ]
            f, g, gf, gg, rho = residual_state(x)
            if rho >= best[0]:
                grew += 1
                if grew >= 3:
                    raise RefinementError(
                        f"refinement stopped improving at residual {mp.nstr(best[0], 6)}",
                        best=RefinedSolution(n, tuple(best[1]), float(best[0]), target_digits),
                    )
            else:
                grew = 0
                best = (rho, list(x))
        if rho > target:
            raise RefinementError(
                f"residual {mp.nstr(rho, 6)} above target after {max_steps} steps",
                best=RefinedSolution(n, tuple(best[1]), float(best[0]), target_digits),
            )
        reduced = [mp.fmod(xi, 2 * mp.pi) for xi in x]
        reduced = [xi + 2 * mp.pi if xi < 0 else xi for xi in reduced]
        return RefinedSolution(n, tuple(reduced), float(rho), target_digits)


# ---------------------------------------------------------------------------
# batch harness

@dataclass
class BatchSummary:
    n: int
    trials: int
    converged: int = 0
    local_minima: int = 0
    budget_exhausted: int = 0
    distinct_islands: int = 0
    matched_to_reference: int = 0
    stored: int = 0
    duplicates: int = 0
    island_hashes: list = field(default_factory=list)


def batch_search(n, trials, config=None, store=None, reference=None, workers: int = 1):
    """Run ``trials`` independent searches, classify and persist the hits.

    Per-trial generators derive from (config.seed, trial index), so serial
    results are reproducible and worker count does not change any outcome.
    Classification results are appended to ``store`` (an Atlas) when given.
    """
    from . import classify as cls
    from . import store as store_mod

    config = config or SearchConfig(n=n)
    if config.n != n:
        raise ValueError("config.n disagrees with n")
    summary = BatchSummary(n=n, trials=trials)
    if trials == 0:
        return summary

    outcomes = _run_trials(n, trials, config, workers)

    ref_gram = None
    if reference is not None:
        ref_gram = reference if hasattr(reference, "entries") else reference[0]

    island_cache = {}
    for trial, outcome in enumerate(outcomes):
        if outcome.status == LOCAL_MINIMUM:
            summary.local_minima += 1
            continue
        if outcome.status == BUDGET_EXHAUSTED:
            summary.budget_exhausted += 1
            continue
        summary.converged += 1
        record = store_mod.build_record(
            outcome.phase_vector,
            reference=ref_gram,
            provenance={"master_seed": config.seed, "trial_index": trial},
            island_cache=island_cache,
        )
        if record.matched_reference is not None:
            summary.matched_to_reference += 1
        if record.island_hash not in summary.island_hashes:
            summary.island_hashes.append(record.island_hash)
        if store is not None:
            verdict = store.append(record)
            if verdict == "duplicate":
                summary.duplicates += 1
            else:
                summary.stored += 1
    summary.distinct_islands = len(summary.island_hashes)
    return summary


def run_single_trial(n: int, master_seed: int, trial: int, config: SearchConfig) -> SearchOutcome:
    rng = np.random.default_rng([master_seed, trial])
    phi0 = random_phase_vector(n, rng)
    return minimize(phi0, config)


def _run_trials(n, trials, config, workers):
    if workers <= 1:
        return [run_single_trial(n, config.seed, t, config) for t in range(trials)]
    import concurrent.futures

    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run_single_trial, n, config.seed, t, config) for t in range(trials)
        ]
        return [f.result() for f in futures]
