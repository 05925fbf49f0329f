"""Sparse polynomial chaos expansions over uniform inputs.

Univariate basis: Legendre polynomials normalized against the Uniform(-1, 1)
density. Multivariate basis functions are tensor products selected by a
hyperbolic q-norm truncation. Coefficients come from ordinary least squares,
optionally preceded by a least-angle-regression ranking whose path prefixes
are refit and compared by the analytic leave-one-out error.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .doe import PriorSpec
from .errors import (
    AllModelsDegenerate,
    DegenerateTarget,
    DimensionMismatch,
    OutOfSupport,
    RankDeficient,
)

_CONDITION_LIMIT = 1e12
# Computed LOO errors at rounding-noise scale are reported as exactly zero so
# that exact-reproduction ties resolve deterministically.
_LOO_FLOOR = 1e-14


def legendre_orthonormal(k: int, u):
    """psi_k(u) = sqrt(2k + 1) P_k(u), orthonormal w.r.t. Uniform(-1, 1).

    Evaluated by the three-term recurrence
    (n + 1) P_{n+1} = (2n + 1) u P_n - n P_{n-1}.
    """
    if k < 0:
        raise DimensionMismatch(f"degree must be nonnegative, got {k}")
    u = np.asarray(u, dtype=float)
    p_prev = np.ones_like(u)
    if k == 0:
        return p_prev * 1.0
    p = u.copy()
    for n in range(1, k):
        p, p_prev = ((2 * n + 1) * u * p - n * p_prev) / (n + 1), p
    return np.sqrt(2 * k + 1) * p


def _legendre_table(u: np.ndarray, k_max: int) -> np.ndarray:
    """(len(u), k_max + 1) table of psi_0..psi_{k_max} at each u."""
    table = np.empty((u.size, k_max + 1))
    table[:, 0] = 1.0
    if k_max >= 1:
        table[:, 1] = u
    for n in range(1, k_max):
        table[:, n + 1] = ((2 * n + 1) * u * table[:, n] - n * table[:, n - 1]) / (n + 1)
    return table * np.sqrt(2 * np.arange(k_max + 1) + 1)


@dataclass(frozen=True)
class MultiIndexSet:
    """Graded-lexicographically ordered multi-indices under a q-norm bound."""

    indices: tuple[tuple[int, ...], ...]
    max_degree: int
    q_norm: float

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def dimension(self) -> int:
        return len(self.indices[0])


def gen_multi_indices(M: int, p: int, q: float) -> MultiIndexSet:
    """All alpha in N^M with (sum_j alpha_j^q)^(1/q) <= p.

    For q <= 1 the q-norm dominates the total degree, so enumeration over
    |alpha| <= p is exhaustive. Ordering is by total degree, then
    lexicographic with the first dimension varying slowest.
    """
    if M < 1 or p < 0 or not 0.0 < q <= 1.0:
        raise DimensionMismatch(f"invalid multi-index parameters M={M}, p={p}, q={q}")
    accepted = []
    for degree in range(p + 1):
        for slots in combinations_with_replacement(range(M), degree):
            alpha = [0] * M
            for s in slots:
                alpha[s] += 1
            qnorm = float(np.sum(np.power(alpha, q, dtype=float)) ** (1.0 / q))
            # tolerance absorbs float round-off for exact boundary members
            if qnorm <= p * (1.0 + 1e-12) + 1e-12:
                accepted.append(tuple(alpha))
    accepted = sorted(set(accepted), key=lambda a: (sum(a), tuple(-x for x in a)))
    return MultiIndexSet(tuple(accepted), p, q)


def to_unit_interval(X, prior: PriorSpec) -> np.ndarray:
    """Affine map of physical inputs onto [-1, 1]^M per uniform marginal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != prior.dimension:
        raise DimensionMismatch(
            f"inputs have {X.shape[1]} columns, prior has {prior.dimension}"
        )
    lows, highs = prior.bounds
    U = 2.0 * (X - lows) / (highs - lows) - 1.0
    if np.any(np.abs(U) > 1.0 + 1e-9):
        raise OutOfSupport("input outside the prior box")
    return np.clip(U, -1.0, 1.0)


def design_matrix(X, prior: PriorSpec, index_set: MultiIndexSet) -> np.ndarray:
    """K x |A| matrix of tensor-product basis evaluations."""
    U = to_unit_interval(X, prior)
    if index_set.dimension != U.shape[1]:
        raise DimensionMismatch("index set dimension does not match inputs")
    k_max = index_set.max_degree
    tables = [_legendre_table(U[:, j], k_max) for j in range(U.shape[1])]
    Psi = np.ones((U.shape[0], len(index_set)))
    for col, alpha in enumerate(index_set.indices):
        for j, a in enumerate(alpha):
            if a:
                Psi[:, col] *= tables[j][:, a]
    return Psi


def fit_ols(Psi: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Least-squares coefficients via orthogonal decomposition."""
    Psi = np.asarray(Psi, dtype=float)
    z = np.asarray(z, dtype=float)
    if Psi.shape[0] < Psi.shape[1]:
        raise RankDeficient(
            f"underdetermined system: {Psi.shape[0]} rows for {Psi.shape[1]} columns"
        )
    s = np.linalg.svd(Psi, compute_uv=False)
    if s[-1] <= 0.0 or s[0] / s[-1] > _CONDITION_LIMIT:
        raise RankDeficient(f"condition number {s[0] / max(s[-1], 1e-300):.3e}")
    coef, *_ = np.linalg.lstsq(Psi, z, rcond=None)
    return coef


def loo_error(Psi: np.ndarray, z: np.ndarray, coef: np.ndarray) -> float:
    """Analytic leave-one-out error of an OLS fit, normalized by var(z).

    epsilon = mean( ((z - Psi c) / (1 - h))^2 ) / var(z) with h the hat-matrix
    diagonal; +inf when any 1 - h falls below 1e-12 (saturated fit).
    """
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    z = np.asarray(z, dtype=float)
    resid = z - Psi @ np.asarray(coef, dtype=float)
    scale = max(1.0, float(np.max(np.abs(z))) if z.size else 1.0)
    variance = float(np.var(z, ddof=1)) if z.size > 1 else 0.0
    if variance == 0.0:
        if np.all(np.abs(resid) <= 1e-12 * scale):
            return 0.0
        raise DegenerateTarget("constant target with nonzero residuals")
    q, _ = np.linalg.qr(Psi)
    h = np.sum(q**2, axis=1)
    if np.any(1.0 - h <= 1e-12):
        return float("inf")
    err = float(np.mean((resid / (1.0 - h)) ** 2)) / variance
    return 0.0 if err <= _LOO_FLOOR else err


def _lars_order(Psi: np.ndarray, z: np.ndarray, rankable: np.ndarray, cap: int) -> list[int]:
    """Column entry order of the least-angle regression path.

    Works on centred, unit-norm copies of the rankable columns and the
    centred target; returns original column indices in selection order.
    """
    Xs = Psi[:, rankable] - Psi[:, rankable].mean(axis=0)
    norms = np.linalg.norm(Xs, axis=0)
    usable = norms > 1e-12 * max(1.0, float(norms.max(initial=0.0)))
    cols = rankable[usable]
    Xs = Xs[:, usable] / norms[usable]
    zc = z - z.mean()
    z_scale = max(1.0, float(np.max(np.abs(zc))) if zc.size else 1.0)

    order: list[int] = []
    active: list[int] = []
    mu = np.zeros_like(zc)
    while len(active) < min(cap, Xs.shape[1]):
        c = Xs.T @ (zc - mu)
        c_inactive = c.copy()
        c_inactive[active] = 0.0
        j = int(np.argmax(np.abs(c_inactive)))
        c_max = abs(c_inactive[j])
        if c_max <= 1e-12 * z_scale:
            break
        active.append(j)
        order.append(int(cols[j]))
        signs = np.sign(c[active])
        try:
            g_inv_s = np.linalg.solve(Xs[:, active].T @ Xs[:, active], signs)
        except np.linalg.LinAlgError:
            break
        a_norm = float(signs @ g_inv_s) ** -0.5
        u = Xs[:, active] @ (a_norm * g_inv_s)
        corr_u = Xs.T @ u
        gamma = c_max / a_norm
        for k in range(Xs.shape[1]):
            if k in active:
                continue
            for num, den in ((c_max - c[k], a_norm - corr_u[k]),
                             (c_max + c[k], a_norm + corr_u[k])):
                if den > 1e-12 and 0.0 < num / den < gamma:
                    gamma = num / den
        mu = mu + gamma * u
    return order


def fit_lars(Psi: np.ndarray, z: np.ndarray, max_terms: int | None = None):
    """Hybrid LARS: rank columns by least-angle regression, refit every path
    prefix by OLS, keep the prefix with the smallest leave-one-out error.

    Constant columns never enter the ranking and belong to every prefix.
    Returns ``(active, coefficients, loo)`` with inactive coefficients
    exactly zero.

    The prefix active-set size is capped at ``min(max_terms, K - 1)``.
    """
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    z = np.asarray(z, dtype=float)
    K, B = Psi.shape
    if K < 2:
        raise DimensionMismatch(f"need at least 2 samples, got {K}")
    if z.shape != (K,):
        raise DimensionMismatch(f"target length {z.shape} does not match {K} rows")

    spread = Psi.max(axis=0) - Psi.min(axis=0)
    constant = spread <= 1e-12 * np.maximum(1.0, np.abs(Psi).max(axis=0))
    const_cols = np.flatnonzero(constant)
    # cap applies to the whole active set, constant columns included
    cap = K - 1 if max_terms is None else min(max_terms, K - 1)
    path_cap = max(cap - const_cols.size, 0)
    order = _lars_order(Psi, z, np.flatnonzero(~constant), path_cap) if path_cap > 0 else []

    best = None
    degenerate = None
    for size in range(len(order) + 1):
        cols = np.concatenate([const_cols, np.asarray(order[:size], dtype=int)])
        cols = np.sort(cols).astype(int)
        if cols.size == 0:
            continue
        try:
            coef = fit_ols(Psi[:, cols], z)
            loo = loo_error(Psi[:, cols], z, coef)
        except RankDeficient:
            continue
        except DegenerateTarget as exc:
            degenerate = exc
            continue
        if best is None or loo < best[0]:
            best = (loo, cols, coef)
    if best is None:
        if degenerate is not None:
            raise degenerate
        raise RankDeficient("no prefix produced a well-posed least-squares fit")

    loo, cols, coef = best
    active = np.zeros(B, dtype=bool)
    active[cols] = True
    coefficients = np.zeros(B)
    coefficients[cols] = coef
    return active, coefficients, loo


@dataclass(frozen=True)
class PceModel:
    """Fitted expansion: basis, sparse coefficients, and its LOO error."""

    index_set: MultiIndexSet
    coefficients: np.ndarray
    active: np.ndarray
    prior: PriorSpec
    loo_error: float

    @property
    def degree(self) -> int:
        return self.index_set.max_degree


def eval_pce(model: PceModel, X) -> np.ndarray | float:
    """Evaluate the expansion at physical input(s)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    active_set = MultiIndexSet(
        tuple(a for a, keep in zip(model.index_set.indices, model.active) if keep),
        model.index_set.max_degree,
        model.index_set.q_norm,
    )
    Psi = design_matrix(np.atleast_2d(X), model.prior, active_set)
    values = Psi @ model.coefficients[model.active]
    return float(values[0]) if single else values


def adapt_degree(X, z, prior: PriorSpec, p_candidates=(1, 2, 3, 4, 5, 6),
                 q: float = 0.75, max_terms: int | None = None) -> PceModel:
    """Fit one hybrid-LARS model per candidate degree and keep the one with
    the smallest finite leave-one-out error; ties go to the smaller degree."""
    if not p_candidates:
        raise DimensionMismatch("p_candidates must be nonempty")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = np.asarray(z, dtype=float)
    best = None
    for p in p_candidates:
        index_set = gen_multi_indices(prior.dimension, p, q)
        Psi = design_matrix(X, prior, index_set)
        try:
            active, coefficients, loo = fit_lars(Psi, z, max_terms)
        except (RankDeficient, DegenerateTarget):
            continue
        if not np.isfinite(loo):
            continue
        if best is None or loo < best.loo_error or (loo == best.loo_error and p < best.degree):
            best = PceModel(index_set, coefficients, active, prior, loo)
    if best is None:
        raise AllModelsDegenerate(
            f"no candidate degree in {tuple(p_candidates)} produced a finite LOO error"
        )
    return best
