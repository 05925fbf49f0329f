"""Design of experiments over box-shaped uniform priors.

Provides the prior specification shared by every other module, Latin
hypercube designs in the unit cube, affine scaling onto the prior box, and
design CSV round-tripping.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IoFailure


@dataclass(frozen=True)
class PriorEntry:
    """One independent Uniform(low, high) marginal."""

    name: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise DimensionMismatch(
                f"prior entry {self.name!r}: low {self.low} must be < high {self.high}"
            )


@dataclass(frozen=True)
class PriorSpec:
    """Ordered collection of independent uniform marginals.

    Doubles as the density object handed to the first inference stage:
    it exposes the same ``logpdf`` / ``sample`` / ``bounds`` interface as the
    stage-to-stage KDE.
    """

    entries: tuple[PriorEntry, ...]

    def __post_init__(self):
        if len(self.entries) < 1:
            raise DimensionMismatch("prior needs at least one entry")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise DimensionMismatch(f"duplicate prior entry names in {names}")

    @classmethod
    def from_bounds(cls, names, lows, highs) -> "PriorSpec":
        return cls(tuple(PriorEntry(n, float(lo), float(hi))
                         for n, lo, hi in zip(names, lows, highs)))

    @property
    def dimension(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lows = np.array([e.low for e in self.entries])
        highs = np.array([e.high for e in self.entries])
        return lows, highs

    def logpdf(self, x) -> np.ndarray | float:
        return prior_logpdf(self, x)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lows, highs = self.bounds
        return rng.uniform(lows, highs, size=(n, self.dimension))


@dataclass(frozen=True)
class DesignMatrix:
    """K x M design in physical units plus its provenance."""

    rows: np.ndarray
    provenance: str = "LatinHypercube"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rows", np.atleast_2d(np.asarray(self.rows, dtype=float)))


def latin_hypercube(K: int, M: int, seed: int, jitter: bool = True) -> np.ndarray:
    """K x M Latin hypercube sample of the unit cube.

    Each column places exactly one point in each of the K equal strata of
    [0, 1); with ``jitter`` the point is uniform within its stratum,
    otherwise it sits at the stratum centre. Columns are paired by
    independent random permutations.
    """
    if K < 1 or M < 1:
        raise DimensionMismatch(f"need K >= 1 and M >= 1, got K={K}, M={M}")
    rng = np.random.default_rng(seed)
    U = np.empty((K, M))
    for j in range(M):
        strata = rng.permutation(K).astype(float)
        offset = rng.uniform(size=K) if jitter else 0.5
        U[:, j] = (strata + offset) / K
    return U


def scale_to_prior(unit: np.ndarray, prior: PriorSpec,
                   provenance: str = "LatinHypercube", seed: int = 0) -> DesignMatrix:
    """Map a unit-cube sample onto the prior box, column by column."""
    unit = np.atleast_2d(np.asarray(unit, dtype=float))
    if unit.shape[1] != prior.dimension:
        raise DimensionMismatch(
            f"unit sample has {unit.shape[1]} columns, prior has {prior.dimension}"
        )
    lows, highs = prior.bounds
    return DesignMatrix(lows + unit * (highs - lows), provenance, seed)


def prior_logpdf(prior: PriorSpec, x) -> np.ndarray | float:
    """Joint log density; -inf outside the box.

    Accepts a single M-vector (returns a float) or an (n, M) batch
    (returns an n-vector).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != prior.dimension:
        raise DimensionMismatch(
            f"point has {pts.shape[1]} coordinates, prior has {prior.dimension}"
        )
    lows, highs = prior.bounds
    inside = np.all((pts >= lows) & (pts <= highs), axis=1)
    value = -np.sum(np.log(highs - lows))
    out = np.where(inside, value, -np.inf)
    return float(out[0]) if single else out


def sample_prior(prior: PriorSpec, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws from the prior box."""
    if n < 1:
        raise DimensionMismatch(f"need n >= 1, got {n}")
    return prior.sample(n, np.random.default_rng(seed))


def lhs_design(prior: PriorSpec, K: int, seed: int, jitter: bool = True) -> DesignMatrix:
    """Latin hypercube design scaled onto the prior box."""
    return scale_to_prior(latin_hypercube(K, prior.dimension, seed, jitter),
                          prior, "LatinHypercube", seed)


def write_design(design: DesignMatrix, prior: PriorSpec, path) -> None:
    """Write a design CSV: header of prior names, full-precision rows."""
    rows = design.rows
    if rows.shape[1] != prior.dimension:
        raise DimensionMismatch("design columns do not match prior dimension")
    lines = [",".join(prior.names)]
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write design to {path}: {exc}") from exc


def read_design(path, prior: PriorSpec | None = None) -> DesignMatrix:
    """Read a design CSV written by :func:`write_design`."""
    try:
        with open(path) as f:
            lines = [ln.strip() for ln in f if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read design from {path}: {exc}") from exc
    if not lines:
        raise IoFailure(f"design file {path} is empty")
    header = lines[0].split(",")
    if prior is not None and header != prior.names:
        raise DimensionMismatch(
            f"design header {header} does not match prior names {prior.names}"
        )
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return DesignMatrix(rows)
