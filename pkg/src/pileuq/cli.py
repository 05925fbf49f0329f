"""Command-line pipeline: doe -> simulate -> train -> validate -> invert ->
report, all driven by one TOML config and an output directory.

Every artifact except run.log is a pure function of the resolved config, so
repeat runs with the same seeds are byte-identical. The global --seed flag
re-seeds the whole pipeline in one move: doe gets N, validate N+1, truth
N+2, mcmc N+3.
"""
from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from .beam import SoilInputs, run_ensemble, read_ensemble, solve_stage, write_ensemble
from .config import (
    PARAM_NAMES,
    RunConfig,
    apply_seed_override,
    config_from_dict,
    load_config,
    resolved_dict,
)
from .doe import lhs_design, read_design, write_design
from .errors import IoFailure, NumericalError, ValidationError
from .inference import (
    McmcConfig,
    ObservationSet,
    predictive_interval,
    read_observations,
    run_sequence,
    write_chain,
    write_observations,
)
from .surrogate import (
    PcaPceSurrogate,
    PointwisePceSurrogate,
    load_surrogate,
    mape,
    save_surrogate,
)


def _write_json(path: Path, payload: dict) -> None:
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"malformed JSON in {path}: {exc}") from exc


def _make_surrogate(config: RunConfig, mode: str | None = None):
    mode = mode or config.surrogate.mode
    if mode == "pca-pce":
        return PcaPceSurrogate(
            config.prior,
            epsilon_dr=config.surrogate.epsilon_dr,
            p_candidates=config.surrogate.degrees,
            q_norm=config.surrogate.q,
        )
    return PointwisePceSurrogate(
        config.prior,
        p_candidates=config.surrogate.degrees,
        q_norm=config.surrogate.q,
    )


def cmd_doe(config: RunConfig, out: Path) -> None:
    design = lhs_design(config.prior, config.doe.k, config.doe.seed)
    write_design(design, config.prior, out / config.paths.design)


def cmd_simulate(config: RunConfig, out: Path) -> None:
    design = read_design(out / config.paths.design, config.prior)
    for stage, v_G in enumerate(config.stage_targets, start=1):
        Y, loads = run_ensemble(design, v_G, config.pile)
        write_ensemble(out / config.paths.ensemble.format(stage=stage),
                       Y, loads, design.rows, v_G)
    if config.truth is not None:
        soil = SoilInputs(config.truth.g0_kpa, config.truth.k0, config.truth.ocr)
        rng = np.random.default_rng(config.truth.seed)
        for stage, v_G in enumerate(config.stage_targets, start=1):
            profile = solve_stage(soil, v_G, config.pile)
            noisy = profile.y + rng.normal(0.0, config.truth.noise_sd_m,
                                           size=profile.y.shape)
            obs = ObservationSet(noisy, stage_id=stage, v_G=v_G)
            write_observations(out / config.paths.observations.format(stage=stage),
                               obs)


def _ensure_test_ensembles(config: RunConfig, out: Path):
    """Held-out forward runs shared by train and validate; generated once
    from the validate seed, reused from disk afterwards."""
    per_stage = []
    design = None
    for stage, v_G in enumerate(config.stage_targets, start=1):
        path = out / config.paths.test_ensemble.format(stage=stage)
        if path.exists():
            Y, _, inputs, _ = read_ensemble(path)
            per_stage.append((inputs, Y))
            continue
        if design is None:
            design = lhs_design(config.prior, config.validate.k_test,
                                config.validate.seed)
        Y, loads = run_ensemble(design, v_G, config.pile)
        write_ensemble(path, Y, loads, design.rows, v_G)
        per_stage.append((design.rows, Y))
    return per_stage


def cmd_train(config: RunConfig, out: Path) -> None:
    test_sets = _ensure_test_ensembles(config, out)
    stages_meta = []
    for stage, v_G in enumerate(config.stage_targets, start=1):
        Y, _, inputs, _ = read_ensemble(out / config.paths.ensemble.format(stage=stage))
        surrogate = _make_surrogate(config).fit(inputs, Y)
        save_surrogate(surrogate, out / config.paths.surrogate.format(stage=stage))
        X_test, Y_test = test_sets[stage - 1]
        report = mape(surrogate, X_test, Y_test)
        meta = {
            "stage": stage,
            "v_g_m": v_G,
            "mode": surrogate.mode,
            "training_k": surrogate.training_K_,
            "component_degrees": [c.degree for c in surrogate.components_],
            "component_loo": [float(c.loo_error) for c in surrogate.components_],
            "held_out_mape_percent": float(report.mape),
            "n_test": report.n_test,
        }
        if surrogate.mode == "pca-pce":
            meta["n_retained"] = int(surrogate.reducer_.n_retained_)
        stages_meta.append(meta)
    _write_json(out / config.paths.training_report, {"stages": stages_meta})


def cmd_validate(config: RunConfig, out: Path) -> None:
    test_sets = _ensure_test_ensembles(config, out)
    stages_meta = []
    for stage, v_G in enumerate(config.stage_targets, start=1):
        surrogate = load_surrogate(out / config.paths.surrogate.format(stage=stage))
        X_test, Y_test = test_sets[stage - 1]
        report = mape(surrogate, X_test, Y_test)
        stages_meta.append({
            "stage": stage,
            "v_g_m": v_G,
            "mode": surrogate.mode,
            "mape_percent": float(report.mape),
            "n_test": report.n_test,
        })
    _write_json(out / config.paths.validation_report,
                {"stages": stages_meta, "k_test": config.validate.k_test})

    # training-size sweep feeding the report's MAPE-vs-K curve; each cell is
    # a fresh design (deterministic seed), simulated and fit in both modes
    lines = ["mode,k,seed,stage,mape_percent"]
    for k in config.report.k_sweep:
        for s in range(config.report.n_seeds):
            sweep_seed = config.doe.seed + 1000 * (s + 1) + k
            design = lhs_design(config.prior, k, sweep_seed)
            for stage, v_G in enumerate(config.stage_targets, start=1):
                Y, _ = run_ensemble(design, v_G, config.pile)
                X_test, Y_test = test_sets[stage - 1]
                for mode in ("pca-pce", "pointwise-pce"):
                    fitted = _make_surrogate(config, mode).fit(design.rows, Y)
                    report = mape(fitted, X_test, Y_test)
                    lines.append(f"{mode},{k},{sweep_seed},{stage},"
                                 f"{repr(float(report.mape))}")
    try:
        (out / config.paths.mape_sweep).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {out / config.paths.mape_sweep}: {exc}") from exc


def _band_payload(lo: np.ndarray, hi: np.ndarray) -> dict:
    return {"lo": [float(v) for v in lo], "hi": [float(v) for v in hi]}


def cmd_invert(config: RunConfig, out: Path) -> None:
    surrogates, observations = [], []
    for stage, v_G in enumerate(config.stage_targets, start=1):
        surrogates.append(
            load_surrogate(out / config.paths.surrogate.format(stage=stage)))
        observations.append(
            read_observations(out / config.paths.observations.format(stage=stage),
                              stage_id=stage, v_G=v_G))

    mcmc = config.mcmc
    rng = np.random.default_rng(mcmc.seed + 90)
    prior_draws = config.prior.sample(mcmc.kde_max_support, rng)
    t0_bands = {}
    for stage, surrogate in enumerate(surrogates, start=1):
        lo, hi = predictive_interval(surrogate, prior_draws,
                                     sample_cap=mcmc.kde_max_support,
                                     seed=mcmc.seed + 90 + stage)
        t0_bands[f"stage_{stage}"] = _band_payload(lo, hi)
    _write_json(out / config.paths.summary.format(time=0), {
        "time": 0,
        "predictive_bands_99": t0_bands,
        "n_prior_draws": int(prior_draws.shape[0]),
        "seeds": {"prior_draws": mcmc.seed + 90},
    })

    run_config = McmcConfig(walkers=mcmc.walkers, steps=mcmc.steps,
                            burn_in=mcmc.burn_in, stretch_a=mcmc.stretch_a,
                            seed=mcmc.seed, kde_max_support=mcmc.kde_max_support)
    posteriors, cross = run_sequence(list(zip(surrogates, observations)),
                                     config.prior, run_config)
    aug_names = [*PARAM_NAMES, "sigma2"]
    for t, posterior in enumerate(posteriors, start=1):
        write_chain(out / config.paths.chain.format(stage=t),
                    posterior.chains, list(PARAM_NAMES))
        samples = posterior.post_samples
        map_vec = posterior.x_map.as_vector()
        cross_bands = {
            f"stage_{j + 1}": _band_payload(*cross[(t - 1, j)])
            for j in range(len(posteriors)) if j != t - 1
        }
        _write_json(out / config.paths.summary.format(time=t), {
            "time": t,
            "stage_id": posterior.stage_id,
            "v_g_m": observations[t - 1].v_G,
            "map": {n: float(v) for n, v in zip(aug_names, map_vec)},
            "marginal_means": {
                n: float(v) for n, v in zip(aug_names, samples.mean(axis=0))},
            "marginal_stds": {
                n: float(v) for n, v in zip(aug_names, samples.std(axis=0, ddof=1))},
            "predictive_band_99": _band_payload(posterior.predictive_lo,
                                                posterior.predictive_hi),
            "cross_predictive_bands_99": cross_bands,
            "acceptance_rate": float(posterior.acceptance_rate),
            "autocorr_times": {
                n: float(v) for n, v in zip(aug_names, posterior.autocorr_times)},
            "burn_in": mcmc.burn_in,
            "n_posterior_samples": int(samples.shape[0]),
            "seeds": {"mcmc": posterior.seed},
        })


def cmd_report(config: RunConfig, out: Path) -> None:
    from .report import render_report

    render_report(config, out)


_COMMANDS = {
    "doe": cmd_doe,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "validate": cmd_validate,
    "invert": cmd_invert,
    "report": cmd_report,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pileuq",
        description="Surrogate-based Bayesian calibration of a laterally "
                    "loaded pile, staged by mudline displacement.",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML run configuration (defaults used if omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override all seeds: doe=N, validate=N+1, "
                             "truth=N+2, mcmc=N+3")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory for all artifacts")
    parser.add_argument("command", choices=sorted(_COMMANDS),
                        help="pipeline step to run")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.config is not None:
            config = load_config(args.config)
        else:
            config = config_from_dict({})
        if args.seed is not None:
            config = apply_seed_override(config, args.seed)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / config.paths.resolved_config, resolved_dict(config))
        _COMMANDS[args.command](config, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    # the only artifact allowed to carry timestamps
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    with open(out / config.paths.run_log, "a") as f:
        f.write(f"{stamp} {args.command} ok\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
