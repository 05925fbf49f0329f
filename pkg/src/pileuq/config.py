"""Run configuration: TOML loading, defaults, validation, and the resolved
echo that makes every run self-describing.

Keys that carry physical units say so in their names (v_g_m, g0_kpa, ...).
Every field has a default matching the reference pile study, so a minimal
config file can be empty; whatever was defaulted is echoed verbatim into
resolved_config.json by the CLI.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import tomli

from .beam import PileConfig
from .doe import PriorSpec
from .errors import ConfigError, IoFailure

PARAM_NAMES = ("G0", "K0", "OCR")
_PRIOR_KEYS = {"G0": "g0_kpa", "K0": "k0", "OCR": "ocr"}
_DEFAULT_PRIOR = {"g0_kpa": [50e3, 160e3], "k0": [0.4, 1.0], "ocr": [5.0, 40.0]}


@dataclass(frozen=True)
class StageSettings:
    v_g_m: float

    def __post_init__(self):
        if self.v_g_m <= 0:
            raise ConfigError(f"stage target v_g_m must be positive, got {self.v_g_m}")


@dataclass(frozen=True)
class DoeSettings:
    k: int = 14
    seed: int = 7

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"doe.k must be at least 1, got {self.k}")


@dataclass(frozen=True)
class SurrogateSettings:
    epsilon_dr: float = 0.02
    mode: str = "pca-pce"
    degrees: tuple = (1, 2, 3, 4, 5, 6)
    q: float = 0.75

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        if self.mode not in ("pca-pce", "pointwise-pce"):
            raise ConfigError(f"unknown surrogate mode {self.mode!r}")
        if not 0.0 < self.epsilon_dr < 1.0:
            raise ConfigError(f"epsilon_dr must be in (0, 1), got {self.epsilon_dr}")
        if not 0.0 < self.q <= 1.0:
            raise ConfigError(f"q must be in (0, 1], got {self.q}")
        if not self.degrees or any(d < 1 for d in self.degrees):
            raise ConfigError("degrees must be a nonempty list of positive integers")


@dataclass(frozen=True)
class McmcSettings:
    walkers: int = 30
    steps: int = 20000
    burn_in: float = 0.7
    stretch_a: float = 2.0
    seed: int = 10
    kde_max_support: int = 2000

    def __post_init__(self):
        if not 0.0 <= self.burn_in < 1.0:
            raise ConfigError(f"mcmc.burn_in must be in [0, 1), got {self.burn_in}")
        if self.walkers < 2 or self.walkers % 2 != 0:
            raise ConfigError(f"mcmc.walkers must be even and >= 2, got {self.walkers}")
        if self.steps < 1:
            raise ConfigError(f"mcmc.steps must be positive, got {self.steps}")
        if self.stretch_a <= 1.0:
            raise ConfigError(f"mcmc.stretch_a must exceed 1, got {self.stretch_a}")


@dataclass(frozen=True)
class ValidateSettings:
    k_test: int = 7
    seed: int = 8

    def __post_init__(self):
        if self.k_test < 1:
            raise ConfigError(f"validate.k_test must be at least 1, got {self.k_test}")


@dataclass(frozen=True)
class TruthSettings:
    """Synthetic ground truth for observation generation; absent when real
    measurements are supplied instead."""

    g0_kpa: float
    k0: float
    ocr: float
    noise_sd_m: float = 0.001
    seed: int = 9

    def __post_init__(self):
        if self.noise_sd_m < 0:
            raise ConfigError(
                f"truth.noise_sd_m must be nonnegative, got {self.noise_sd_m}"
            )


@dataclass(frozen=True)
class ReportSettings:
    k_sweep: tuple = tuple(range(3, 15))
    n_seeds: int = 5
    cases: tuple = (".",)

    def __post_init__(self):
        object.__setattr__(self, "k_sweep", tuple(int(k) for k in self.k_sweep))
        object.__setattr__(self, "cases", tuple(str(c) for c in self.cases))
        if any(k < 3 for k in self.k_sweep):
            raise ConfigError("report.k_sweep entries must be at least 3")
        if self.n_seeds < 1:
            raise ConfigError(f"report.n_seeds must be positive, got {self.n_seeds}")


@dataclass(frozen=True)
class ArtifactPaths:
    """File names inside the output directory; stage/time templates carry a
    single placeholder."""

    design: str = "design.csv"
    ensemble: str = "ensemble_stage{stage}.csv"
    test_ensemble: str = "test_ensemble_stage{stage}.csv"
    observations: str = "observations_stage{stage}.csv"
    surrogate: str = "surrogate_stage{stage}.json"
    chain: str = "chain_stage{stage}.csv"
    summary: str = "summary_t{time}.json"
    training_report: str = "training_report.json"
    validation_report: str = "validation_report.json"
    mape_sweep: str = "mape_sweep.csv"
    resolved_config: str = "resolved_config.json"
    run_log: str = "run.log"
    report_dir: str = "report"
    report_manifest: str = "report_manifest.json"


@dataclass(frozen=True)
class RunConfig:
    prior: PriorSpec
    pile: PileConfig
    stages: tuple
    doe: DoeSettings = DoeSettings()
    surrogate: SurrogateSettings = SurrogateSettings()
    mcmc: McmcSettings = McmcSettings()
    validate: ValidateSettings = ValidateSettings()
    truth: TruthSettings | None = None
    report: ReportSettings = ReportSettings()
    paths: ArtifactPaths = ArtifactPaths()

    def __post_init__(self):
        if len(self.stages) == 0:
            raise ConfigError("at least one loading stage is required")
        names = [self.paths.design, self.paths.training_report,
                 self.paths.validation_report, self.paths.mape_sweep,
                 self.paths.resolved_config, self.paths.run_log,
                 self.paths.report_dir, self.paths.report_manifest]
        for s in range(1, len(self.stages) + 1):
            names += [
                self.paths.ensemble.format(stage=s),
                self.paths.test_ensemble.format(stage=s),
                self.paths.observations.format(stage=s),
                self.paths.surrogate.format(stage=s),
                self.paths.chain.format(stage=s),
            ]
        names += [self.paths.summary.format(time=t)
                  for t in range(len(self.stages) + 1)]
        if len(set(names)) != len(names):
            raise ConfigError("artifact paths must be pairwise distinct")

    @property
    def stage_targets(self) -> tuple:
        return tuple(s.v_g_m for s in self.stages)


def _build(cls, raw: dict, where: str):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"invalid [{where}] block: {exc}") from exc


def _build_prior(raw: dict) -> PriorSpec:
    merged = dict(_DEFAULT_PRIOR)
    unknown = set(raw) - set(merged)
    if unknown:
        raise ConfigError(f"unknown keys in [prior]: {sorted(unknown)}")
    merged.update(raw)
    lowers, uppers = [], []
    for name in PARAM_NAMES:
        pair = merged[_PRIOR_KEYS[name]]
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            raise ConfigError(
                f"prior.{_PRIOR_KEYS[name]} must be [lower, upper]"
            )
        lowers.append(float(pair[0]))
        uppers.append(float(pair[1]))
    try:
        return PriorSpec.from_bounds(list(PARAM_NAMES), lowers, uppers)
    except Exception as exc:
        raise ConfigError(f"invalid prior bounds: {exc}") from exc


_PILE_KEYS = {
    "diameter_m": "diameter",
    "embedded_length_m": "embedded_length",
    "wall_thickness_m": "wall_thickness",
    "youngs_modulus_kpa": "youngs_modulus",
    "load_height_m": "load_height",
    "n_nodes": "n_nodes",
    "kappa": "kappa",
    "degradation": "degradation",
    "picard_tol": "picard_tol",
    "picard_max_iter": "picard_max_iter",
    "stage_tol": "stage_tol",
}


def _build_pile(raw: dict) -> PileConfig:
    unknown = set(raw) - set(_PILE_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys in [pile]: {sorted(unknown)}")
    try:
        return PileConfig(**{_PILE_KEYS[k]: v for k, v in raw.items()})
    except Exception as exc:
        raise ConfigError(f"invalid [pile] block: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    known = {"prior", "pile", "stages", "doe", "surrogate", "mcmc",
             "validate", "truth", "report", "paths"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level config sections: {sorted(unknown)}")
    stages_raw = raw.get("stages", [{"v_g_m": 0.02}, {"v_g_m": 0.20}])
    if not isinstance(stages_raw, list):
        raise ConfigError("stages must be an array of tables")
    stages = tuple(_build(StageSettings, s, "stages") for s in stages_raw)
    truth_raw = raw.get("truth")
    return RunConfig(
        prior=_build_prior(raw.get("prior", {})),
        pile=_build_pile(raw.get("pile", {})),
        stages=stages,
        doe=_build(DoeSettings, raw.get("doe", {}), "doe"),
        surrogate=_build(SurrogateSettings, raw.get("surrogate", {}), "surrogate"),
        mcmc=_build(McmcSettings, raw.get("mcmc", {}), "mcmc"),
        validate=_build(ValidateSettings, raw.get("validate", {}), "validate"),
        truth=_build(TruthSettings, truth_raw, "truth") if truth_raw else None,
        report=_build(ReportSettings, raw.get("report", {}), "report"),
        paths=_build(ArtifactPaths, raw.get("paths", {}), "paths"),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as f:
            raw = tomli.load(f)
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(raw)


def apply_seed_override(config: RunConfig, seed: int) -> RunConfig:
    """Global --seed N: doe gets N, validate N+1, truth N+2, mcmc N+3."""
    from dataclasses import replace

    truth = (replace(config.truth, seed=seed + 2)
             if config.truth is not None else None)
    return replace(
        config,
        doe=replace(config.doe, seed=seed),
        validate=replace(config.validate, seed=seed + 1),
        truth=truth,
        mcmc=replace(config.mcmc, seed=seed + 3),
    )


def resolved_dict(config: RunConfig) -> dict:
    """Full config with every default made explicit, for the resolved echo."""
    lows, highs = config.prior.bounds
    out = {
        "prior": {
            _PRIOR_KEYS[name]: [lows[i], highs[i]]
            for i, name in enumerate(PARAM_NAMES)
        },
        "pile": {key: getattr(config.pile, attr)
                 for key, attr in _PILE_KEYS.items()},
        "stages": [{"v_g_m": s.v_g_m} for s in config.stages],
        "doe": {"k": config.doe.k, "seed": config.doe.seed},
        "surrogate": {
            "epsilon_dr": config.surrogate.epsilon_dr,
            "mode": config.surrogate.mode,
            "degrees": list(config.surrogate.degrees),
            "q": config.surrogate.q,
        },
        "mcmc": {
            "walkers": config.mcmc.walkers,
            "steps": config.mcmc.steps,
            "burn_in": config.mcmc.burn_in,
            "stretch_a": config.mcmc.stretch_a,
            "seed": config.mcmc.seed,
            "kde_max_support": config.mcmc.kde_max_support,
        },
        "validate": {"k_test": config.validate.k_test,
                     "seed": config.validate.seed},
        "report": {
            "k_sweep": list(config.report.k_sweep),
            "n_seeds": config.report.n_seeds,
            "cases": list(config.report.cases),
        },
        "paths": {name: getattr(config.paths, name)
                  for name in ArtifactPaths.__dataclass_fields__},
    }
    if config.truth is not None:
        out["truth"] = {
            "g0_kpa": config.truth.g0_kpa,
            "k0": config.truth.k0,
            "ocr": config.truth.ocr,
            "noise_sd_m": config.truth.noise_sd_m,
            "seed": config.truth.seed,
        }
    return out
