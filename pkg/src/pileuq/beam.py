"""Synthetic forward model: a laterally loaded pile as a finite-difference
Euler-Bernoulli beam on a displacement-softening Winkler foundation.

EI y'''' + k(z) D y = 0 on [0, L], load H applied at height h above the
mudline (shear H and moment H*h at z = 0), free toe. Soil stiffness
degrades with deflection through a secant law, making the response to the
imposed mudline displacement stage-dependent and nonlinear.

Units: kPa, kN, m throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .doe import DesignMatrix, PriorSpec
from .errors import DimensionMismatch, IoFailure, NoConvergence, SingularSystem

# Consecutive iterations with growing update norm before the Picard loop is
# declared divergent (the load exceeds the soil's secant capacity).
_DIVERGENCE_RUN = 25
# Iterates beyond any meaningful deflection are also divergent: past the
# capacity the update can stagnate bit-exactly once the degraded stiffness
# underflows, which would otherwise masquerade as convergence.
_DIVERGENCE_CAP = 1e3
_MAX_DOUBLINGS = 60
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class PileConfig:
    """Pile geometry, material, discretization, and solver calibration."""

    diameter: float = 2.0
    embedded_length: float = 10.5
    wall_thickness: float = 0.025
    youngs_modulus: float = 2.0e8
    load_height: float = 10.0
    n_nodes: int = 101
    kappa: float = 2.0e-3
    degradation: float = 50.0
    picard_tol: float = 1e-8
    picard_max_iter: int = 200
    stage_tol: float = 1e-6

    def __post_init__(self):
        positive = {
            "diameter": self.diameter,
            "embedded_length": self.embedded_length,
            "wall_thickness": self.wall_thickness,
            "youngs_modulus": self.youngs_modulus,
            "load_height": self.load_height,
        }
        for name, value in positive.items():
            if value <= 0:
                raise DimensionMismatch(f"{name} must be positive, got {value}")
        if self.wall_thickness >= self.diameter / 2:
            raise DimensionMismatch("wall thickness must be below D/2")
        if self.n_nodes < 11:
            raise DimensionMismatch(f"need at least 11 nodes, got {self.n_nodes}")

    @property
    def bending_stiffness(self) -> float:
        """EI of the tubular cross-section, kN m^2."""
        d_out, d_in = self.diameter, self.diameter - 2 * self.wall_thickness
        return self.youngs_modulus * np.pi / 64 * (d_out**4 - d_in**4)

    @property
    def depths(self) -> np.ndarray:
        return np.linspace(0.0, self.embedded_length, self.n_nodes)


@dataclass(frozen=True)
class SoilInputs:
    """Site parameters: small-strain shear stiffness, earth pressure
    coefficient at rest, overconsolidation ratio."""

    G0: float
    K0: float
    OCR: float

    def __post_init__(self):
        for name in ("G0", "K0", "OCR"):
            if getattr(self, name) <= 0:
                raise DimensionMismatch(f"{name} must be positive")


@dataclass(frozen=True)
class DeflectionProfile:
    """Lateral displacements at the node depths and the load producing them."""

    y: np.ndarray
    applied_load: float

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if not np.all(np.isfinite(self.y)):
            raise DimensionMismatch("profile contains non-finite entries")


def subgrade_profile(soil: SoilInputs, cfg: PileConfig = PileConfig()) -> np.ndarray:
    """Initial (small-strain) subgrade reaction k(z), kPa, increasing with
    depth: k = kappa G0 sqrt(K0) (30/OCR)^(1/4) (0.3 + z/L)."""
    scale = cfg.kappa * soil.G0 * np.sqrt(soil.K0) * (30.0 / soil.OCR) ** 0.25
    return scale * (0.3 + cfg.depths / cfg.embedded_length)


def solve_linear(k: np.ndarray, H: float, cfg: PileConfig = PileConfig()) -> DeflectionProfile:
    """Beam on linear springs under mudline shear H and moment H*h.

    Central differences with two ghost nodes per end; ghost values are
    eliminated algebraically into the first and last two rows, leaving a
    pentadiagonal system solved in banded form.
    """
    k = np.asarray(k, dtype=float)
    n = cfg.n_nodes
    if k.shape != (n,):
        raise DimensionMismatch(f"stiffness vector must have {n} entries, got {k.shape}")
    if np.any(k <= 0):
        raise DimensionMismatch("stiffness must be positive everywhere")
    if H < 0:
        raise DimensionMismatch(f"load must be nonnegative, got {H}")

    EI = cfg.bending_stiffness
    dz = cfg.embedded_length / (n - 1)
    c = k * cfg.diameter * dz**4 / EI
    moment = H * cfg.load_height * dz**2 / EI
    shear = 2.0 * H * dz**3 / EI

    ab = np.zeros((5, n))
    ab[0, 2:] = 1.0
    ab[1, 1:] = -4.0
    ab[2, :] = 6.0 + c
    ab[3, :-1] = -4.0
    ab[4, :-2] = 1.0
    # mudline rows: moment H*h and shear H folded into the stencil
    ab[2, 0] = 2.0 + c[0]
    ab[0, 2] = 2.0
    ab[3, 0] = -2.0
    ab[2, 1] = 5.0 + c[1]
    # toe rows: zero moment and shear, mirrored stencil
    ab[4, n - 3] = 2.0
    ab[2, n - 1] = 2.0 + c[n - 1]
    ab[1, n - 1] = -2.0
    ab[2, n - 2] = 5.0 + c[n - 2]
    ab[4, n - 4] = 1.0

    rhs = np.zeros(n)
    rhs[0] = 2.0 * moment + shear
    rhs[1] = -moment

    try:
        y = solve_banded((2, 2), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"banded solve failed: {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise SingularSystem("banded solve produced non-finite values")
    return DeflectionProfile(y, H)


def _picard(k0: np.ndarray, H: float, cfg: PileConfig):
    """Fixed-point iteration on the secant-degraded stiffness.

    Returns ``(y, converged, diverging)``. Divergence (load above the
    soil's secant capacity) shows up as a growing update norm, not as a
    signed overshoot, so it is detected by trend: _DIVERGENCE_RUN
    consecutive growing updates or a non-finite iterate.
    """
    y = solve_linear(k0, H, cfg).y
    previous = np.inf
    growing = 0
    for _ in range(cfg.picard_max_iter):
        k_eff = k0 / (1.0 + cfg.degradation * np.abs(y) / cfg.diameter)
        y_new = solve_linear(k_eff, H, cfg).y
        delta = float(np.max(np.abs(y_new - y)))
        y = y_new
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > _DIVERGENCE_CAP:
            return y, False, True
        if delta < cfg.picard_tol:
            return y, True, False
        growing = growing + 1 if delta > previous else 0
        previous = delta
        if growing >= _DIVERGENCE_RUN:
            return y, False, True
    return y, False, False


def solve_nonlinear(soil: SoilInputs, H: float,
                    cfg: PileConfig = PileConfig()) -> DeflectionProfile:
    """Deflection under load H with secant stiffness degradation
    k_eff(z) = k(z) / (1 + degradation * |y(z)| / D)."""
    y, converged, _ = _picard(subgrade_profile(soil, cfg), H, cfg)
    if not converged:
        raise NoConvergence(
            f"secant iteration did not converge within {cfg.picard_max_iter} "
            f"iterations at H = {H} kN"
        )
    return DeflectionProfile(y, H)


def solve_stage(soil: SoilInputs, v_G: float,
                cfg: PileConfig = PileConfig()) -> DeflectionProfile:
    """Calibrate the load so the mudline deflection hits the stage target.

    Doubles an upper load bound until the response overshoots v_G, then
    bisects. Divergent inner iterations count as overshoot: they occur
    above the secant capacity, hence above the sought load.
    """
    if v_G <= 0:
        raise DimensionMismatch(f"stage displacement must be positive, got {v_G}")
    k0 = subgrade_profile(soil, cfg)

    def probe(H: float):
        y, converged, diverging = _picard(k0, H, cfg)
        if diverging:
            return "over", None
        if converged and abs(y[0] - v_G) <= cfg.stage_tol:
            return "hit", DeflectionProfile(y, H)
        # non-converged iterates approach the solution from the stiff
        # linear start, so the final mudline value still orders the probe
        return ("over" if y[0] > v_G else "under"), None

    H_lo, H_hi = 0.0, 1.0
    for _ in range(_MAX_DOUBLINGS):
        status, profile = probe(H_hi)
        if status == "hit":
            return profile
        if status == "over":
            break
        H_lo, H_hi = H_hi, 2.0 * H_hi
    else:
        raise NoConvergence(f"no overshoot up to H = {H_hi} kN")

    for _ in range(_MAX_BISECTIONS):
        if H_hi - H_lo <= 1e-12 * max(H_hi, 1.0):
            raise NoConvergence(
                f"load bracket collapsed at [{H_lo}, {H_hi}] kN without "
                f"reaching the stage target {v_G} m"
            )
        H_mid = 0.5 * (H_lo + H_hi)
        status, profile = probe(H_mid)
        if status == "hit":
            return profile
        if status == "over":
            H_hi = H_mid
        else:
            H_lo = H_mid
    raise NoConvergence(f"bisection exceeded {_MAX_BISECTIONS} iterations")


def run_ensemble(design, v_G: float, cfg: PileConfig = PileConfig()):
    """Stage-calibrated profiles for every design row.

    Returns ``(Y, loads)`` with Y of shape K x n_nodes and loads in kN;
    row order follows the design.
    """
    rows = design.rows if isinstance(design, DesignMatrix) else np.atleast_2d(
        np.asarray(design, dtype=float))
    if rows.shape[1] != 3:
        raise DimensionMismatch(f"design must have 3 columns, got {rows.shape[1]}")
    Y = np.empty((rows.shape[0], cfg.n_nodes))
    loads = np.empty(rows.shape[0])
    for i, (g0, k0, ocr) in enumerate(rows):
        try:
            profile = solve_stage(SoilInputs(g0, k0, ocr), v_G, cfg)
        except (DimensionMismatch, NoConvergence, SingularSystem) as exc:
            raise type(exc)(f"ensemble row {i}: {exc}") from exc
        Y[i] = profile.y
        loads[i] = profile.applied_load
    return Y, loads


def ensemble_header(n_nodes: int) -> list[str]:
    return [f"y_{i:03d}" for i in range(n_nodes)] + ["H_kN", "G0", "K0", "OCR", "v_G"]


def write_ensemble(path, Y: np.ndarray, loads: np.ndarray, inputs: np.ndarray,
                   v_G: float) -> None:
    """One CSV row per run: the profile, the calibrated load, the soil
    inputs, and the stage displacement."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    loads = np.asarray(loads, dtype=float)
    if inputs.shape != (Y.shape[0], 3) or loads.shape != (Y.shape[0],):
        raise DimensionMismatch("ensemble blocks have inconsistent row counts")
    lines = [",".join(ensemble_header(Y.shape[1]))]
    for y_row, load, x_row in zip(Y, loads, inputs):
        values = list(y_row) + [load] + list(x_row) + [v_G]
        lines.append(",".join(repr(float(v)) for v in values))
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write ensemble to {path}: {exc}") from exc


def read_ensemble(path):
    """Inverse of :func:`write_ensemble`.

    Returns ``(Y, loads, inputs, v_G)``.
    """
    try:
        with open(path) as f:
            lines = [ln.strip() for ln in f if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read ensemble from {path}: {exc}") from exc
    if len(lines) < 2:
        raise IoFailure(f"ensemble file {path} has no data rows")
    header = lines[0].split(",")
    n_nodes = sum(1 for h in header if h.startswith("y_"))
    if header != ensemble_header(n_nodes):
        raise IoFailure(f"unexpected ensemble header in {path}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if data.shape[1] != n_nodes + 5:
        raise IoFailure(f"ensemble rows in {path} have inconsistent width")
    Y = data[:, :n_nodes]
    loads = data[:, n_nodes]
    inputs = data[:, n_nodes + 1: n_nodes + 4]
    v_G = float(data[0, -1])
    return Y, loads, inputs, v_G
