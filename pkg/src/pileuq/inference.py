"""Bayesian calibration engine.

Gaussian likelihood over surrogate predictions with an inferred residual
variance, affine-invariant ensemble MCMC (Goodman-Weare stretch move with
split-ensemble updates), MAP extraction, empirical predictive intervals,
and a truncated product-Gaussian KDE that turns each stage's posterior into
the next stage's prior. The augmented parameter vector is (x^M, sigma2).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

from .doe import PriorSpec
from .errors import (
    DimensionMismatch,
    EmptyChain,
    EmptySamples,
    InsufficientSamples,
    InvalidInit,
    IoFailure,
)

logger = logging.getLogger(__name__)

# Posterior sample cap for KDE centres and predictive push-forwards; keeps
# stage-to-stage density evaluation O(cap) per point.
KDE_MAX_SUPPORT = 2000


@dataclass(frozen=True)
class AugmentedPoint:
    """Forward-model parameters plus the residual variance."""

    x_m: np.ndarray
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "x_m", np.asarray(self.x_m, dtype=float))
        if self.sigma2 < 0:
            raise DimensionMismatch(f"sigma2 must be nonnegative, got {self.sigma2}")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x_m, [self.sigma2]])


@dataclass(frozen=True)
class ObservationSet:
    """Repeated measured output vectors for one loading stage."""

    vectors: np.ndarray
    stage_id: int
    v_G: float

    def __post_init__(self):
        object.__setattr__(
            self, "vectors", np.atleast_2d(np.asarray(self.vectors, dtype=float))
        )
        if self.vectors.shape[0] < 1:
            raise DimensionMismatch("need at least one observation vector")

    @property
    def n_obs(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class ChainEnsemble:
    """Raw MCMC output: per-step, per-walker states and log posteriors."""

    samples: np.ndarray
    log_posts: np.ndarray
    acceptance_rate: float
    seed: int


@dataclass(frozen=True)
class StagePosterior:
    """Everything one calibration stage hands to reporting and to the next
    stage: flattened post-burn-in samples, the MAP point, the stage's own
    99% posterior predictive band, and the KDE over x^M."""

    stage_id: int
    post_samples: np.ndarray
    post_log_posts: np.ndarray
    x_map: AugmentedPoint
    predictive_lo: np.ndarray
    predictive_hi: np.ndarray
    kde: "TruncatedKde"
    acceptance_rate: float
    autocorr_times: np.ndarray
    seed: int
    chains: ChainEnsemble


def log_likelihood(surrogate, obs: ObservationSet, p: AugmentedPoint) -> float:
    """Independent Gaussian residuals with covariance sigma2 * I:
    sum_i [-(N/2) ln 2 pi - (N/2) ln sigma2 - ||y_i - predict(x)||^2 / (2 sigma2)].
    Returns -inf outside the supported region instead of raising."""
    values = _log_likelihood_batch(
        surrogate, obs, p.x_m[None, :], np.array([p.sigma2])
    )
    return float(values[0])


def _log_likelihood_batch(surrogate, obs: ObservationSet,
                          X: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    out = np.full(X.shape[0], -np.inf)
    valid = sigma2 > 0
    lows, highs = surrogate.prior.bounds
    valid &= np.all((X >= lows) & (X <= highs), axis=1)
    if not np.any(valid):
        return out
    preds = np.atleast_2d(surrogate.predict(X[valid]))
    sq = np.sum((obs.vectors[None, :, :] - preds[:, None, :]) ** 2, axis=(1, 2))
    N = obs.vectors.shape[1]
    m = obs.n_obs
    s2 = sigma2[valid]
    out[valid] = m * (-0.5 * N * np.log(2 * np.pi) - 0.5 * N * np.log(s2)) \
        - sq / (2 * s2)
    return out


def log_posterior(prior_density, sigma2_prior_max: float, surrogate,
                  obs: ObservationSet, p: AugmentedPoint) -> float:
    """prior logpdf + ln U(sigma2; 0, sigma2_prior_max) + log likelihood."""
    batch = _log_posterior_batch(prior_density, sigma2_prior_max, surrogate, obs,
                                 p.as_vector()[None, :])
    return float(batch[0])


def _log_posterior_batch(prior_density, sigma2_prior_max: float, surrogate,
                         obs: ObservationSet, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    X, sigma2 = pts[:, :-1], pts[:, -1]
    out = np.full(pts.shape[0], -np.inf)
    prior_term = np.atleast_1d(prior_density.logpdf(X))
    s2_ok = (sigma2 > 0) & (sigma2 <= sigma2_prior_max)
    valid = np.isfinite(prior_term) & s2_ok
    if not np.any(valid):
        return out
    like = _log_likelihood_batch(surrogate, obs, X[valid], sigma2[valid])
    out[valid] = prior_term[valid] - np.log(sigma2_prior_max) + like
    return out


def sigma2_prior_upper(obs: ObservationSet) -> float:
    """Upper bound of the flat residual-variance prior: the largest entry
    of the observed vectors."""
    return float(np.max(obs.vectors))


def make_log_posterior(prior_density, surrogate, obs: ObservationSet):
    """Batch-callable closure over (x^M, sigma2) rows."""
    s2max = sigma2_prior_upper(obs)

    def logpost(pts: np.ndarray) -> np.ndarray:
        return _log_posterior_batch(prior_density, s2max, surrogate, obs, pts)

    return logpost


def _draw_stretch(rng: np.random.Generator, a: float, size: int) -> np.ndarray:
    """z with density proportional to 1/sqrt(z) on [1/a, a]."""
    lo, hi = 1.0 / np.sqrt(a), np.sqrt(a)
    return (lo + rng.uniform(size=size) * (hi - lo)) ** 2


def aies_sample(logpost, init: np.ndarray, n_steps: int,
                stretch_a: float = 2.0, seed: int = 0) -> ChainEnsemble:
    """Affine-invariant ensemble sampler, split-ensemble stretch move.

    ``logpost`` must accept an (n, d) batch and return n values. Each step
    updates the two walker halves in turn; proposals for one half draw
    partners only from the complementary half, so the accept decision for
    walker j is Y = X_k + z (X_j - X_k) with probability
    min(1, z^(d-1) exp(logpost(Y) - logpost(X_j))).
    """
    init = np.atleast_2d(np.asarray(init, dtype=float))
    W, d = init.shape
    if W % 2 != 0 or W < 2 * d:
        raise DimensionMismatch(
            f"walker count must be even and at least {2 * d}, got {W}"
        )
    if n_steps < 1:
        raise DimensionMismatch(f"need at least one step, got {n_steps}")
    if stretch_a <= 1.0:
        raise DimensionMismatch(f"stretch parameter must exceed 1, got {stretch_a}")
    current_lp = np.asarray(logpost(init), dtype=float)
    if not np.all(np.isfinite(current_lp)):
        raise InvalidInit("every initial walker needs a finite log posterior")

    rng = np.random.default_rng(seed)
    state = init.copy()
    half = W // 2
    blocks = (np.arange(half), np.arange(half, W))
    samples = np.empty((n_steps, W, d))
    log_posts = np.empty((n_steps, W))
    accepted = 0
    for step in range(n_steps):
        for own, other in (blocks, blocks[::-1]):
            partners = state[other][rng.integers(0, half, size=half)]
            z = _draw_stretch(rng, stretch_a, half)
            proposals = partners + z[:, None] * (state[own] - partners)
            prop_lp = np.asarray(logpost(proposals), dtype=float)
            log_ratio = (d - 1) * np.log(z) + prop_lp - current_lp[own]
            accept = np.log(rng.uniform(size=half)) < log_ratio
            state[own[accept]] = proposals[accept]
            current_lp[own[accept]] = prop_lp[accept]
            accepted += int(np.sum(accept))
        samples[step] = state
        log_posts[step] = current_lp
    return ChainEnsemble(samples, log_posts, accepted / (n_steps * W), seed)


def burn_in(chains: ChainEnsemble, fraction: float = 0.70) -> np.ndarray:
    """Drop the first ceil(fraction * steps) steps and flatten the rest."""
    if not 0.0 <= fraction < 1.0:
        raise DimensionMismatch(f"burn-in fraction must be in [0, 1), got {fraction}")
    steps = chains.samples.shape[0]
    discard = math.ceil(fraction * steps)
    if discard >= steps:
        raise EmptyChain(
            f"burn-in of {discard} steps leaves nothing from {steps}"
        )
    return chains.samples[discard:].reshape(-1, chains.samples.shape[2])


def retained_log_posts(chains: ChainEnsemble, fraction: float = 0.70) -> np.ndarray:
    """Log posteriors aligned with :func:`burn_in` output."""
    steps = chains.log_posts.shape[0]
    discard = math.ceil(fraction * steps)
    if discard >= steps:
        raise EmptyChain(
            f"burn-in of {discard} steps leaves nothing from {steps}"
        )
    return chains.log_posts[discard:].reshape(-1)


def map_estimate(samples: np.ndarray, log_posts: np.ndarray) -> AugmentedPoint:
    """Retained sample with the highest recorded log posterior; earliest
    index wins ties."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    log_posts = np.asarray(log_posts, dtype=float)
    if samples.shape[0] == 0:
        raise EmptyChain("no samples to maximise over")
    if samples.shape[0] != log_posts.shape[0]:
        raise DimensionMismatch("samples and log posteriors differ in length")
    best = int(np.argmax(log_posts))
    return AugmentedPoint(samples[best, :-1], float(samples[best, -1]))


def predictive_interval(surrogate, param_samples: np.ndarray,
                        level: float = 0.99, sample_cap: int = KDE_MAX_SUPPORT,
                        sigma2_samples: np.ndarray | None = None,
                        seed: int = 0):
    """Empirical predictive band: push parameter draws through the
    surrogate and take per-output quantiles at (1 -/+ level)/2.

    With ``sigma2_samples`` (posterior predictive) independent Gaussian
    noise of the paired variance is added to every pushed profile first.
    """
    param_samples = np.atleast_2d(np.asarray(param_samples, dtype=float))
    n = param_samples.shape[0]
    if n == 0:
        raise EmptySamples("no parameter samples for the predictive interval")
    if not 0.0 < level < 1.0:
        raise DimensionMismatch(f"level must be in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    if sigma2_samples is not None:
        sigma2_samples = np.asarray(sigma2_samples, dtype=float)
        if sigma2_samples.shape != (n,):
            raise DimensionMismatch("sigma2 draws must pair with parameter draws")
    if n > sample_cap:
        keep = rng.choice(n, size=sample_cap, replace=False)
        param_samples = param_samples[keep]
        if sigma2_samples is not None:
            sigma2_samples = sigma2_samples[keep]
        n = sample_cap
    preds = np.atleast_2d(surrogate.predict(param_samples))
    if sigma2_samples is not None:
        noise = rng.standard_normal(preds.shape)
        preds = preds + np.sqrt(sigma2_samples)[:, None] * noise
    lo, hi = np.quantile(preds, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return lo, hi


class TruncatedKde:
    """Product-Gaussian kernel density truncated to a box.

    Each kernel is renormalized to the box individually, so the density
    integrates to one regardless of how much kernel mass the boundaries
    cut off. Exposes the same logpdf/sample/bounds interface as PriorSpec.
    """

    def __init__(self, centres: np.ndarray, bandwidths: np.ndarray,
                 lows: np.ndarray, highs: np.ndarray):
        self.centres = np.atleast_2d(np.asarray(centres, dtype=float))
        self.bandwidths = np.asarray(bandwidths, dtype=float)
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        # per-kernel, per-dimension log of the in-box Gaussian mass
        a = (self.lows - self.centres) / self.bandwidths
        b = (self.highs - self.centres) / self.bandwidths
        self._log_mass = np.log(np.maximum(ndtr(b) - ndtr(a), 1e-300))

    @property
    def dimension(self) -> int:
        return self.centres.shape[1]

    @property
    def bounds(self):
        return self.lows, self.highs

    def logpdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dimension:
            raise DimensionMismatch(
                f"points have {pts.shape[1]} coordinates, density has {self.dimension}"
            )
        inside = np.all((pts >= self.lows) & (pts <= self.highs), axis=1)
        out = np.full(pts.shape[0], -np.inf)
        queries = pts[inside]
        # evaluate in blocks so (points x kernels x dims) stays bounded
        block = max(1, 2**22 // (len(self.centres) * self.dimension))
        vals = np.empty(queries.shape[0])
        log_h = np.log(self.bandwidths)
        for start in range(0, queries.shape[0], block):
            q = queries[start:start + block]
            z = (q[:, None, :] - self.centres[None, :, :]) / self.bandwidths
            log_kernels = (
                -0.5 * z**2 - 0.5 * np.log(2 * np.pi) - log_h - self._log_mass
            ).sum(axis=2)
            vals[start:start + block] = logsumexp(log_kernels, axis=1)
        out[inside] = vals - np.log(len(self.centres))
        return float(out[0]) if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact draws: pick a kernel, then inverse-CDF truncated normals."""
        idx = rng.integers(0, len(self.centres), size=n)
        c = self.centres[idx]
        a = ndtr((self.lows - c) / self.bandwidths)
        b = ndtr((self.highs - c) / self.bandwidths)
        u = a + rng.uniform(size=(n, self.dimension)) * (b - a)
        return np.clip(
            c + self.bandwidths * ndtri(u), self.lows, self.highs
        )


def kde_fit(samples: np.ndarray, bounds,
            max_centres: int = KDE_MAX_SUPPORT) -> TruncatedKde:
    """Truncated KDE with per-dimension Silverman bandwidths
    h_j = 1.06 sigma_j n^(-1/5); a zero-variance dimension falls back to a
    near-delta kernel of width 1e-6 (hi - lo). Above ``max_centres`` samples
    an evenly strided subset becomes the kernel centres (bandwidths still
    come from the full set)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    lows, highs = (np.asarray(b, dtype=float) for b in bounds)
    n, M = samples.shape
    if n < 10:
        raise InsufficientSamples(f"KDE needs at least 10 samples, got {n}")
    if M != lows.shape[0]:
        raise DimensionMismatch("sample dimension does not match bounds")
    sd = samples.std(axis=0, ddof=1)
    h = 1.06 * sd * n ** (-0.2)
    degenerate = h <= 0
    if np.any(degenerate):
        logger.warning(
            "KDE dimensions %s have zero variance; using near-delta kernels",
            np.flatnonzero(degenerate).tolist(),
        )
        h = np.where(degenerate, 1e-6 * (highs - lows), h)
    if n > max_centres:
        keep = np.round(np.linspace(0, n - 1, max_centres)).astype(int)
        samples = samples[keep]
    return TruncatedKde(samples, h, lows, highs)


def autocorr_time(samples: np.ndarray, c: float = 5.0) -> np.ndarray:
    """Integrated autocorrelation time per parameter from (steps, walkers, d)
    chains, with the self-consistent window tau <= step / c."""
    steps, _, d = samples.shape
    taus = np.empty(d)
    for j in range(d):
        x = samples[:, :, j] - samples[:, :, j].mean(axis=0)
        size = 2 ** int(np.ceil(np.log2(2 * steps)))
        f = np.fft.irfft(np.abs(np.fft.rfft(x, n=size, axis=0)) ** 2, axis=0)[:steps]
        f = f.mean(axis=1)
        if f[0] <= 0:
            taus[j] = 0.0
            continue
        rho = f / f[0]
        running = 2.0 * np.cumsum(rho) - 1.0
        window = np.arange(steps) >= c * running
        taus[j] = running[np.argmax(window)] if np.any(window) else running[-1]
    return taus


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings shared across stages."""

    walkers: int = 30
    steps: int = 20000
    burn_in: float = 0.70
    stretch_a: float = 2.0
    seed: int = 0
    predictive_level: float = 0.99
    kde_max_support: int = KDE_MAX_SUPPORT

    def __post_init__(self):
        if not 0.0 <= self.burn_in < 1.0:
            raise DimensionMismatch(
                f"burn-in fraction must be in [0, 1), got {self.burn_in}"
            )


def init_walkers(prior_density, sigma2_max: float, walkers: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Start positions: x^M resampled from the prior density, sigma2
    uniform in the middle of its prior range."""
    x0 = prior_density.sample(walkers, rng)
    s2 = rng.uniform(0.05, 0.5, size=walkers) * sigma2_max
    return np.column_stack([x0, s2])


def run_stage(surrogate, obs: ObservationSet, prior_density,
              config: McmcConfig = McmcConfig()) -> StagePosterior:
    """One belief update: sample the augmented posterior, extract MAP,
    posterior predictive band, and the KDE propagated to the next stage.

    The residual-variance prior is re-primed from this stage's own
    observations; only the x^M belief carries over.
    """
    logpost = make_log_posterior(prior_density, surrogate, obs)
    s2max = sigma2_prior_upper(obs)
    rng = np.random.default_rng(config.seed)
    init = init_walkers(prior_density, s2max, config.walkers, rng)
    chains = aies_sample(logpost, init, config.steps,
                         stretch_a=config.stretch_a, seed=config.seed)
    samples = burn_in(chains, config.burn_in)
    log_posts = retained_log_posts(chains, config.burn_in)
    x_map = map_estimate(samples, log_posts)
    kept_steps = samples.shape[0] // config.walkers
    taus = autocorr_time(chains.samples[-kept_steps:])
    if kept_steps < 50 * np.max(taus):
        logger.warning(
            "stage %d: %d retained steps < 50 autocorrelation times "
            "(max tau = %.1f); treat posterior summaries with caution",
            obs.stage_id, kept_steps, float(np.max(taus)),
        )
    lo, hi = predictive_interval(
        surrogate, samples[:, :-1], level=config.predictive_level,
        sample_cap=config.kde_max_support,
        sigma2_samples=samples[:, -1], seed=config.seed + 1,
    )
    kde = kde_fit(samples[:, :-1], surrogate.prior.bounds,
                  max_centres=config.kde_max_support)
    return StagePosterior(
        stage_id=obs.stage_id,
        post_samples=samples,
        post_log_posts=log_posts,
        x_map=x_map,
        predictive_lo=lo,
        predictive_hi=hi,
        kde=kde,
        acceptance_rate=chains.acceptance_rate,
        autocorr_times=taus,
        seed=config.seed,
        chains=chains,
    )


def run_sequence(stages, prior0: PriorSpec, config: McmcConfig = McmcConfig()):
    """Markovian multi-stage calibration.

    ``stages`` is a list of (surrogate, ObservationSet); stage t's KDE is
    stage t+1's x^M prior. Returns the per-stage posteriors plus cross
    predictive bands: entry (i, j) pushes stage i's posterior parameters
    through stage j's surrogate (j > i checks forward prediction, j < i
    backward consistency). Cross bands carry parametric uncertainty only:
    residual variances are stage-specific and are not transplanted.
    """
    if len(stages) < 1:
        raise DimensionMismatch("need at least one stage")
    posteriors: list[StagePosterior] = []
    prior_density = prior0
    for t, (surrogate, obs) in enumerate(stages):
        stage_config = McmcConfig(
            walkers=config.walkers, steps=config.steps, burn_in=config.burn_in,
            stretch_a=config.stretch_a, seed=config.seed + t,
            predictive_level=config.predictive_level,
            kde_max_support=config.kde_max_support,
        )
        posterior = run_stage(surrogate, obs, prior_density, stage_config)
        posteriors.append(posterior)
        prior_density = posterior.kde
    cross = {}
    for i, posterior in enumerate(posteriors):
        for j, (surrogate, _) in enumerate(stages):
            if i == j:
                continue
            cross[(i, j)] = predictive_interval(
                surrogate, posterior.post_samples[:, :-1],
                level=config.predictive_level,
                sample_cap=config.kde_max_support,
                seed=config.seed + 97 + 10 * i + j,
            )
    return posteriors, cross


def write_chain(path, chains: ChainEnsemble, param_names) -> None:
    """Long-format chain CSV: step,walker,<params...>,sigma2,log_post."""
    steps, walkers, d = chains.samples.shape
    if len(param_names) != d - 1:
        raise DimensionMismatch(
            f"{len(param_names)} parameter names for dimension {d - 1}"
        )
    header = ["step", "walker", *param_names, "sigma2", "log_post"]
    try:
        with open(path, "w") as f:
            f.write(",".join(header) + "\n")
            for s in range(steps):
                for w in range(walkers):
                    row = [str(s), str(w)]
                    row += [repr(float(v)) for v in chains.samples[s, w]]
                    row.append(repr(float(chains.log_posts[s, w])))
                    f.write(",".join(row) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write chain to {path}: {exc}") from exc


def read_chain(path, param_names):
    """Inverse of :func:`write_chain`; returns (samples, log_posts)."""
    try:
        with open(path) as f:
            lines = [ln.strip() for ln in f if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read chain from {path}: {exc}") from exc
    expected = ["step", "walker", *param_names, "sigma2", "log_post"]
    if not lines or lines[0].split(",") != expected:
        raise IoFailure(f"unexpected chain header in {path}")
    try:
        body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise IoFailure(f"malformed chain row in {path}: {exc}") from exc
    if body.ndim != 2 or body.shape[1] != len(expected):
        raise IoFailure(f"inconsistent chain rows in {path}")
    steps = int(body[:, 0].max()) + 1
    walkers = int(body[:, 1].max()) + 1
    if body.shape[0] != steps * walkers:
        raise IoFailure(f"chain in {path} is not a full step-walker grid")
    order = np.lexsort((body[:, 1], body[:, 0]))
    body = body[order]
    d = len(param_names) + 1
    samples = body[:, 2:2 + d].reshape(steps, walkers, d)
    log_posts = body[:, -1].reshape(steps, walkers)
    return samples, log_posts


def write_observations(path, obs: ObservationSet) -> None:
    """CSV with one y_### column per output point, one row per repeat."""
    n = obs.vectors.shape[1]
    lines = [",".join(f"y_{i:03d}" for i in range(n))]
    lines += [",".join(repr(float(v)) for v in row) for row in obs.vectors]
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write observations to {path}: {exc}") from exc


def read_observations(path, stage_id: int, v_G: float) -> ObservationSet:
    try:
        with open(path) as f:
            lines = [ln.strip() for ln in f if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read observations from {path}: {exc}") from exc
    if len(lines) < 2:
        raise IoFailure(f"observation file {path} has no data rows")
    n = len(lines[0].split(","))
    if lines[0].split(",") != [f"y_{i:03d}" for i in range(n)]:
        raise IoFailure(f"unexpected observation header in {path}")
    try:
        vectors = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]],
                           dtype=float)
    except ValueError as exc:
        raise IoFailure(f"malformed observation row in {path}: {exc}") from exc
    if vectors.ndim != 2 or vectors.shape[1] != n:
        raise IoFailure(f"inconsistent observation rows in {path}")
    return ObservationSet(vectors, stage_id, v_G)
