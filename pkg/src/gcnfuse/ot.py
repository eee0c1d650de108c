"""Discrete optimal-transport solvers.

Three solvers plus a test oracle:

- emd: the exact Kantorovich LP. Uniform equal-size marginals go through a
  linear-assignment solver and come back as a (1/n)-scaled permutation
  coupling; everything else goes through an LP with tightened feasibility
  tolerances.
- sinkhorn_unbalanced: entropy-regularized OT with KL marginal penalties,
  solved by damped alternating scaling with log-domain absorption so that
  epsilon down to 5e-5 survives.
- fgw_distance: fused Gromov-Wasserstein via fixed-point iteration over a
  linearized cost, multi-started and solved in both directions so identity
  and symmetry hold to tight tolerance.
- brute_force_ot: exhaustive minimum over permutation couplings, the oracle
  exact EMD is checked against.

All solvers are pure functions of their inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.optimize import linear_sum_assignment, linprog

from .errors import DimensionMismatchError, InvalidSpecError, NumericalError, SolverError

MARGINAL_TOL = 1e-9
_BRUTE_FORCE_MAX = 8


def _histogram(weights, name: str) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InvalidSpecError(f"{name} must be a nonempty 1-d weight vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidSpecError(f"{name} entries must be finite and >= 0")
    return w


def _cost(cost, n: int, m: int) -> np.ndarray:
    C = np.asarray(cost, dtype=np.float64)
    if C.shape != (n, m):
        raise DimensionMismatchError(f"cost matrix shape {C.shape} != ({n}, {m})")
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise InvalidSpecError("cost entries must be finite and >= 0")
    return C


def uniform_weights(n: int) -> np.ndarray:
    """Uniform histogram 1/n; the measure every fusion layer uses."""
    if n < 1:
        raise InvalidSpecError("histogram size must be >= 1")
    return np.ones(n) / n


@dataclass(frozen=True)
class TransportPlan:
    """A coupling with its objective and solver diagnostics.

    ``objective`` is <coupling, cost> for the linear solvers and the fused
    objective for fgw_distance. ``history`` carries per-iteration objective
    values where the solver is iterative (the full unbalanced functional for
    Sinkhorn, the fused objective for FGW).
    """

    coupling: np.ndarray
    objective: float
    converged: bool = True
    iterations: int = 0
    history: tuple[float, ...] = ()

    def __post_init__(self):
        T = np.asarray(self.coupling, dtype=np.float64)
        if T.ndim != 2:
            raise InvalidSpecError("coupling must be a matrix")
        if not np.all(np.isfinite(T)) or np.any(T < 0):
            raise NumericalError("coupling entries must be finite and >= 0")
        T = np.array(T)
        T.setflags(write=False)
        object.__setattr__(self, "coupling", T)

    @property
    def row_marginal(self) -> np.ndarray:
        return self.coupling.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.coupling.sum(axis=0)

    def marginal_error(self, alpha, beta) -> float:
        a = np.asarray(alpha, dtype=np.float64)
        b = np.asarray(beta, dtype=np.float64)
        return float(max(
            np.max(np.abs(self.row_marginal - a)),
            np.max(np.abs(self.col_marginal - b)),
        ))

    def as_permutation(self) -> np.ndarray | None:
        """Column index per row if the coupling is a scaled permutation, else None."""
        n, m = self.coupling.shape
        if n != m or np.count_nonzero(self.coupling) != n:
            return None
        cols = np.argmax(self.coupling != 0.0, axis=1)
        if len(set(cols.tolist())) != n:
            return None
        return cols


def identity_plan(alpha) -> TransportPlan:
    """diag(alpha): the do-nothing coupling used for untransported layers."""
    a = _histogram(alpha, "alpha")
    return TransportPlan(coupling=np.diag(a), objective=0.0, converged=True, iterations=0)


def _assignment_coupling(a: np.ndarray, C: np.ndarray) -> np.ndarray:
    rows, cols = linear_sum_assignment(C)
    T = np.zeros_like(C)
    T[rows, cols] = a
    return T


def emd(alpha, beta, cost) -> TransportPlan:
    """Exact solution of min <T, C> over couplings with marginals alpha, beta.

    Masses must balance within 1e-9. Uniform square instances are solved by
    linear assignment and return a (1/n)-scaled permutation coupling; the
    rest go through an LP (dual simplex) with tightened feasibility
    tolerances so the 1e-9 marginal guarantee holds with slack.
    """
    a = _histogram(alpha, "alpha")
    b = _histogram(beta, "beta")
    C = _cost(cost, a.size, b.size)
    if abs(a.sum() - b.sum()) > MARGINAL_TOL:
        raise InvalidSpecError(
            f"input masses differ: {a.sum():.12g} vs {b.sum():.12g}"
        )
    uniform_square = (
        a.size == b.size
        and np.all(a == a[0]) and np.all(b == b[0])
        and abs(a[0] - b[0]) <= MARGINAL_TOL
    )
    if uniform_square:
        T = _assignment_coupling(a, C)
    else:
        T = _emd_linprog(a, b, C)
    plan = TransportPlan(coupling=T, objective=float(np.sum(T * C)))
    if plan.marginal_error(a, b) > MARGINAL_TOL:
        raise SolverError(
            f"solved plan violates marginals by {plan.marginal_error(a, b):.3g}"
        )
    return plan


def _emd_linprog(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> np.ndarray:
    n, m = C.shape
    # row i constraint touches variables i*m..i*m+m-1; column j touches j, j+m, ...
    row_idx = np.repeat(np.arange(n), m)
    col_idx = np.tile(np.arange(m), n) + n
    var_idx = np.arange(n * m)
    A_eq = scipy.sparse.coo_matrix(
        (np.ones(2 * n * m), (np.concatenate([row_idx, col_idx]), np.concatenate([var_idx, var_idx]))),
        shape=(n + m, n * m),
    )
    res = linprog(
        C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
        method="highs-ds",
        options={
            # 1e-10 is the tightest HiGHS accepts; simplex vertex solutions
            # land at machine precision anyway
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if res.status != 0:
        raise SolverError(f"LP solver failed: {res.message}")
    return np.maximum(res.x.reshape(n, m), 0.0)


def brute_force_ot(alpha, beta, cost) -> TransportPlan:
    """Exhaustive minimum over permutation couplings; n = m <= 8, uniform only.

    The winning permutation's objective is recomputed with the same
    arithmetic emd uses (np.sum over the dense coupling), so the two agree
    bit-for-bit whenever they pick the same permutation.
    """
    a = _histogram(alpha, "alpha")
    b = _histogram(beta, "beta")
    n = a.size
    if b.size != n:
        raise InvalidSpecError("brute force requires square instances")
    if n > _BRUTE_FORCE_MAX:
        raise InvalidSpecError(f"brute force capped at n = {_BRUTE_FORCE_MAX}, got {n}")
    if not (np.all(a == a[0]) and np.all(b == b[0])):
        raise InvalidSpecError("brute force requires uniform marginals")
    C = _cost(cost, n, n)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    scores = C[np.arange(n), perms].sum(axis=1)
    best = perms[int(np.argmin(scores))]
    T = np.zeros((n, n))
    T[np.arange(n), best] = a
    return TransportPlan(
        coupling=T, objective=float(np.sum(T * C)),
        converged=True, iterations=len(perms),
    )


@dataclass(frozen=True)
class SinkhornParams:
    """Knobs for the unbalanced entropic solver.

    epsilon scales the KL(T || alpha beta^T) entropy term; rho_alpha and
    rho_beta scale the KL penalties on the two marginals. Scalings whose
    magnitude passes absorption_threshold get absorbed into log-domain
    potentials, which is what keeps epsilon = 5e-5 from overflowing.
    The full unbalanced functional is logged every history_every
    iterations (it needs a log over the whole plan, which would dominate
    the solve if computed every single step).
    """

    epsilon: float
    rho_alpha: float = 1.0
    rho_beta: float = 1.0
    max_iters: int = 10000
    tol: float = 1e-9
    absorption_threshold: float = 1e5
    history_every: int = 10

    def __post_init__(self):
        if self.epsilon <= 0 or self.rho_alpha <= 0 or self.rho_beta <= 0:
            raise InvalidSpecError("epsilon and rho values must be > 0")
        if self.tol <= 0 or self.max_iters < 1:
            raise InvalidSpecError("tol must be > 0 and max_iters >= 1")
        if self.history_every < 1:
            raise InvalidSpecError("history_every must be >= 1")

    def with_epsilon(self, epsilon: float) -> "SinkhornParams":
        return SinkhornParams(
            epsilon=epsilon, rho_alpha=self.rho_alpha, rho_beta=self.rho_beta,
            max_iters=self.max_iters, tol=self.tol,
            absorption_threshold=self.absorption_threshold,
            history_every=self.history_every,
        )


def _generalized_kl(x: np.ndarray, y: np.ndarray) -> float:
    """KL for unnormalized measures: sum x log(x/y) - x + y, with 0 log 0 = 0."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    pos = x > 0
    if np.any(y[pos] == 0):
        return float("inf")
    terms = x[pos] * np.log(x[pos] / y[pos])
    return float(terms.sum() - x.sum() + y.sum())


def unbalanced_objective(T, alpha, beta, cost, params: SinkhornParams) -> float:
    """<T,C> + rho_a KL(T1||a) + rho_b KL(T^T1||b) + eps KL(T||ab^T)."""
    T = np.asarray(T, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    C = np.asarray(cost, dtype=np.float64)
    return (
        float(np.sum(T * C))
        + params.rho_alpha * _generalized_kl(T.sum(axis=1), a)
        + params.rho_beta * _generalized_kl(T.sum(axis=0), b)
        + params.epsilon * _generalized_kl(T, np.outer(a, b))
    )


def sinkhorn_unbalanced(alpha, beta, cost, params: SinkhornParams) -> TransportPlan:
    """Damped alternating scaling for unbalanced entropic OT.

    Minimizes <T,C> + rho_a KL(T1||a) + rho_b KL(T^T1||b) + eps KL(T||ab^T)
    via u/v scaling updates with exponent rho/(rho+eps). Absorption moves
    the full scaling vectors into log potentials, which preserves the plan
    exactly rather than restarting it. Each update is an exact block
    minimization whenever the kernel has no hard underflow, so the
    objective history is non-increasing outside the extreme-epsilon
    revival phase (where rows of exp(-C/eps) start at exactly zero and get
    absorbed back to life). Non-convergence returns converged=False;
    non-finite scalings after absorption raise NumericalError.
    """
    a = _histogram(alpha, "alpha")
    b = _histogram(beta, "beta")
    C = _cost(cost, a.size, b.size)
    if np.any(a == 0) or np.any(b == 0):
        raise InvalidSpecError("sinkhorn requires strictly positive weights")
    eps = params.epsilon
    # cost shifted by the KL reference: K = exp(-M0/eps) = exp(-C/eps) * ab^T
    M0 = C - eps * (np.log(a)[:, None] + np.log(b)[None, :])
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    K = np.exp(-M0 / eps)
    u = np.ones(a.size)
    v = np.ones(b.size)
    damp_a = params.rho_alpha / (params.rho_alpha + eps)
    damp_b = params.rho_beta / (params.rho_beta + eps)
    history: list[float] = []
    converged = False
    iterations = 0
    for it in range(1, params.max_iters + 1):
        iterations = it
        u_prev, v_prev = u, v
        Kv = K @ v
        u = (a / (Kv + 1e-16)) ** damp_a * np.exp(-f / (eps + params.rho_alpha))
        Ktu = K.T @ u
        v = (b / (Ktu + 1e-16)) ** damp_b * np.exp(-g / (eps + params.rho_beta))
        absorbing = False
        if np.max(u) > params.absorption_threshold or np.max(v) > params.absorption_threshold:
            # absorb the whole vectors: T is unchanged, only reparameterized
            absorbing = True
            f = f + eps * np.log(np.maximum(u, 1e-300))
            g = g + eps * np.log(np.maximum(v, 1e-300))
            K = np.exp((f[:, None] + g[None, :] - M0) / eps)
            u = np.ones(a.size)
            v = np.ones(b.size)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(np.isfinite(K))):
            raise NumericalError(f"sinkhorn scalings overflowed at iteration {it}")
        if it % params.history_every == 0 or it == 1:
            T = u[:, None] * K * v[None, :]
            history.append(unbalanced_objective(T, a, b, C, params))
        if not absorbing:
            change = max(
                float(np.max(np.abs(u - u_prev))),
                float(np.max(np.abs(v - v_prev))),
            )
            if change < params.tol:
                converged = True
                break
    T = u[:, None] * K * v[None, :]
    return TransportPlan(
        coupling=T, objective=float(np.sum(T * C)),
        converged=converged, iterations=iterations, history=tuple(history),
    )


@dataclass(frozen=True)
class FgwProblem:
    """A fused Gromov-Wasserstein instance.

    structure_a and structure_b are symmetric zero-diagonal intra-graph
    distance matrices; feature_cost compares vertex features across the
    graphs. trade_off weights the feature term (1 = pure feature OT,
    0 = pure structure). inner=None solves each linearized step exactly
    with emd; a SinkhornParams switches the inner solver.
    """

    structure_a: np.ndarray
    structure_b: np.ndarray
    feature_cost: np.ndarray
    trade_off: float
    alpha: np.ndarray
    beta: np.ndarray
    inner: SinkhornParams | None = None
    outer_tol: float = 1e-7
    outer_max_iters: int = 100

    def __post_init__(self):
        a = _histogram(self.alpha, "alpha")
        b = _histogram(self.beta, "beta")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        Ca = self._structure(self.structure_a, a.size, "structure_a")
        Cb = self._structure(self.structure_b, b.size, "structure_b")
        object.__setattr__(self, "structure_a", Ca)
        object.__setattr__(self, "structure_b", Cb)
        F = _cost(self.feature_cost, a.size, b.size)
        object.__setattr__(self, "feature_cost", F)
        if not 0.0 <= self.trade_off <= 1.0:
            raise InvalidSpecError(f"trade_off must be in [0, 1], got {self.trade_off}")
        if self.outer_tol <= 0 or self.outer_max_iters < 1:
            raise InvalidSpecError("outer_tol must be > 0 and outer_max_iters >= 1")

    @staticmethod
    def _structure(mat, size: int, name: str) -> np.ndarray:
        M = np.asarray(mat, dtype=np.float64)
        if M.shape != (size, size):
            raise DimensionMismatchError(f"{name} shape {M.shape} != ({size}, {size})")
        if not np.all(np.isfinite(M)) or np.any(M < 0):
            raise InvalidSpecError(f"{name} entries must be finite and >= 0")
        if np.any(np.diag(M) != 0):
            raise InvalidSpecError(f"{name} must have a zero diagonal")
        if not np.array_equal(M, M.T):
            raise InvalidSpecError(f"{name} must be symmetric")
        return M

    def transposed(self) -> "FgwProblem":
        return FgwProblem(
            structure_a=self.structure_b, structure_b=self.structure_a,
            feature_cost=self.feature_cost.T, trade_off=self.trade_off,
            alpha=self.beta, beta=self.alpha, inner=self.inner,
            outer_tol=self.outer_tol, outer_max_iters=self.outer_max_iters,
        )


def _gromov_linearized(C1: np.ndarray, C2: np.ndarray, T: np.ndarray) -> np.ndarray:
    """tens[i,j] = sum_kl (C1[i,k] - C2[j,l])^2 T[k,l], using T's actual marginals."""
    row = T.sum(axis=1)
    col = T.sum(axis=0)
    return (C1 ** 2) @ row[:, None] + ((C2 ** 2) @ col)[None, :] - 2.0 * (C1 @ T) @ C2.T


def fused_objective(problem: FgwProblem, T: np.ndarray) -> float:
    """trade_off * <F,T> + (1 - trade_off) * sum (C1_ik - C2_jl)^2 T_ij T_kl."""
    feature = float(np.sum(problem.feature_cost * T))
    structure = float(np.sum(_gromov_linearized(problem.structure_a, problem.structure_b, T) * T))
    return problem.trade_off * feature + (1.0 - problem.trade_off) * structure


def _fgw_fixed_point(problem: FgwProblem, start: np.ndarray) -> tuple[np.ndarray, bool, int]:
    T = start
    for it in range(1, problem.outer_max_iters + 1):
        lin = problem.trade_off * problem.feature_cost
        if problem.trade_off < 1.0:
            tens = _gromov_linearized(problem.structure_a, problem.structure_b, T)
            lin = lin + (1.0 - problem.trade_off) * tens
        # tiny negatives from cancellation would trip the cost validator
        lin = np.maximum(lin, 0.0)
        if problem.inner is None:
            plan = emd(problem.alpha, problem.beta, lin)
        else:
            plan = sinkhorn_unbalanced(problem.alpha, problem.beta, lin, problem.inner)
        T_new = plan.coupling
        change = float(np.max(np.abs(T_new - T)))
        T = T_new
        if change < problem.outer_tol:
            return T, True, it
    return T, False, problem.outer_max_iters


def _fgw_starts(problem: FgwProblem) -> list[np.ndarray]:
    starts = [np.outer(problem.alpha, problem.beta)]
    if problem.alpha.size == problem.beta.size and np.array_equal(problem.alpha, problem.beta):
        starts.append(np.diag(problem.alpha))
    return starts


def fgw_distance(problem: FgwProblem) -> tuple[float, TransportPlan]:
    """Fixed-point iteration on the linearized fused cost; returns (distance, plan).

    Each outer step solves linear OT on
    trade_off * feature_cost + (1 - trade_off) * tens(T) and stops when the
    plan moves less than outer_tol. Runs from the product and (when square)
    identity couplings, and again on the transposed problem, keeping the
    best fused objective; this makes the identity and symmetry properties
    hold by construction rather than by luck of the start point.
    """
    best: tuple[float, np.ndarray, bool, int] | None = None
    for prob, mirror in ((problem, False), (problem.transposed(), True)):
        for start in _fgw_starts(prob):
            T, converged, iters = _fgw_fixed_point(prob, start)
            if mirror:
                T = T.T
            obj = fused_objective(problem, T)
            if best is None or obj < best[0]:
                best = (obj, T, converged, iters)
    obj, T, converged, iters = best
    distance = max(obj, 0.0)
    plan = TransportPlan(
        coupling=T, objective=distance, converged=converged,
        iterations=iters, history=(distance,),
    )
    return distance, plan
