"""Qualification gate: ten structural and statistical checks, one per test.

Every test prints a single ``[criterion NN] label: PASS/FAIL`` line and
carries a pinned runtime budget plus pinned tolerances. Slow statistical
checks use fixed seeds chosen once; they are reproducible bit for bit.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from pileuq.beam import PileConfig, SoilInputs, run_ensemble, solve_linear, solve_stage
from pileuq.cli import main
from pileuq.doe import PriorSpec, lhs_design
from pileuq.inference import McmcConfig, ObservationSet, aies_sample, burn_in, run_sequence
from pileuq.pca import PcaReducer
from pileuq.pce import design_matrix, fit_lars, fit_ols, gen_multi_indices, loo_error
from pileuq.surrogate import PcaPceSurrogate, PointwisePceSurrogate, mape

PILE_PRIOR = PriorSpec.from_bounds(
    ["G0", "K0", "OCR"], [50e3, 0.4, 5.0], [160e3, 1.0, 40.0]
)

PIPELINE_TOML = """
[doe]
k = 6
seed = 7

[surrogate]
epsilon_dr = 0.02
mode = "pca-pce"
degrees = [1, 2, 3, 4]

[mcmc]
walkers = 12
steps = 300
burn_in = 0.7
seed = 10
kde_max_support = 300

[validate]
k_test = 4
seed = 8

[truth]
g0_kpa = 105000.0
k0 = 0.7
ocr = 22.5
noise_sd_m = 0.001
seed = 9

[report]
k_sweep = [3, 4]
n_seeds = 1
"""


@contextmanager
def criterion(num, label, budget_s=None):
    start = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget_s is not None and elapsed >= budget_s:
            raise AssertionError(
                f"runtime {elapsed:.2f}s exceeds the {budget_s}s budget"
            )
    except BaseException:
        print(f"[criterion {num:2d}] {label}: FAIL")
        raise
    print(f"[criterion {num:2d}] {label}: PASS ({elapsed:.2f}s)")


def test_criterion_01_pca_round_trip_exactness():
    with criterion(1, "PCA exactness", budget_s=1.0):
        rng = np.random.default_rng(0)
        for scale in (1.0, 1e-3, 4e2):
            Y = rng.normal(0.0, scale, (20, 101))
            reducer = PcaReducer(n_components=101).fit(Y)
            back = reducer.inverse_transform(reducer.transform(Y))
            rel = np.linalg.norm(Y - back) / np.linalg.norm(Y)
            assert rel <= 1e-10

            # eigenvalue sum equals the total centred variance (trace identity)
            centred = Y - Y.mean(axis=0)
            total = np.sum(centred**2) / (Y.shape[0] - 1)
            assert abs(np.sum(reducer.eigenvalues_) - total) <= 1e-8 * total


def test_criterion_02_pce_degree_three_reproduction():
    with criterion(2, "PCE polynomial reproduction", budget_s=1.0):
        prior = PriorSpec.from_bounds(
            ["x1", "x2", "x3"], [0.5, -3.0, 10.0], [2.0, -1.0, 20.0]
        )

        def target(X):
            x0, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
            return (
                1.5 + 2.0 * x0 - x1 + 0.5 * x2 + x0 * x1
                - 0.7 * x2**2 + 0.3 * x0 * x1 * x2 + 0.2 * x0**3
            )

        train = lhs_design(prior, 60, seed=1).rows
        index_set = gen_multi_indices(3, 3, q=1.0)
        Psi = design_matrix(train, prior, index_set)
        coef = fit_ols(Psi, target(train))
        assert loo_error(Psi, target(train), coef) <= 1e-10

        probe = lhs_design(prior, 200, seed=2).rows
        pred = design_matrix(probe, prior, index_set) @ coef
        rel = np.abs(pred - target(probe)).max() / np.abs(target(probe)).max()
        assert rel <= 1e-8


def test_criterion_03_lars_sparse_recovery():
    with criterion(3, "LARS sparse recovery", budget_s=1.0):
        prior = PriorSpec.from_bounds(["u1", "u2"], [-1.0, -1.0], [1.0, 1.0])
        index_set = gen_multi_indices(2, 4, q=1.0)
        assert len(index_set.indices) == 15

        X = lhs_design(prior, 30, seed=3).rows
        Psi = design_matrix(X, prior, index_set)
        planted = {index_set.indices.index((2, 0)): 2.5,
                   index_set.indices.index((1, 1)): -1.7}
        z = sum(c * Psi[:, j] for j, c in planted.items())

        active, coef, _ = fit_lars(Psi, z)
        for j, c in planted.items():
            assert active[j]
            assert abs(coef[j] - c) <= 1e-6
        others = [j for j in range(15) if j not in planted]
        assert np.abs(coef[others]).max() <= 1e-6


def test_criterion_04_aies_standard_gaussian():
    with criterion(4, "AIES correctness", budget_s=30.0):
        logpost = lambda pts: -0.5 * np.sum(np.atleast_2d(pts) ** 2, axis=-1)
        init = np.random.default_rng(0).standard_normal((32, 3)) * 0.5
        chains = aies_sample(logpost, init, 5000, stretch_a=2.0, seed=3)
        kept = burn_in(chains, 0.70)

        assert 0.2 <= chains.acceptance_rate <= 0.7
        assert np.abs(kept.mean(axis=0)).max() <= 0.05
        assert np.all(np.abs(kept.var(axis=0, ddof=1) - 1.0) <= 0.10)


def test_criterion_05_conjugate_linear_gaussian_oracle():
    with criterion(5, "conjugate oracle", budget_s=30.0):
        prior = PriorSpec.from_bounds(
            ["a", "b", "c"], [0.0, 0.0, 0.0], [10.0, 10.0, 10.0]
        )
        rng = np.random.default_rng(42)
        A = rng.normal(0.0, 1.0, (3, 8))
        b = rng.normal(0.0, 2.0, 8)

        train = lhs_design(prior, 40, seed=11).rows
        surrogate = PcaPceSurrogate(prior, epsilon_dr=1e-10, p_candidates=(1,))
        surrogate.fit(train, train @ A + b)
        probe = lhs_design(prior, 25, seed=12).rows
        lin_err = np.abs(surrogate.predict(probe) - (probe @ A + b)).max()
        assert lin_err <= 1e-10 * np.abs(train @ A + b).max()

        sigma = 0.05
        truth = np.array([5.0, 5.0, 5.0])
        obs = truth @ A + b + np.random.default_rng(21).normal(0.0, sigma, (2, 8))

        # conjugate closed form under a flat prior: mean solves the normal
        # equations on the averaged rows, covariance is sigma^2 (A A')^-1 / m
        AAt = A @ A.T
        Sigma = sigma**2 * np.linalg.inv(AAt) / obs.shape[0]
        mu = np.linalg.solve(AAt, A @ (obs.mean(axis=0) - b))

        lo, hi = prior.bounds

        def logpost(pts):
            pts = np.atleast_2d(pts)
            out = np.full(pts.shape[0], -np.inf)
            ok = np.all((pts >= lo) & (pts <= hi), axis=1)
            if np.any(ok):
                r = obs[None, :, :] - surrogate.predict(pts[ok])[:, None, :]
                out[ok] = -np.sum(r**2, axis=(1, 2)) / (2 * sigma**2)
            return out

        init = mu + np.random.default_rng(0).standard_normal((32, 3)) * 0.01
        chains = aies_sample(logpost, init, 6000, stretch_a=2.0, seed=4)
        kept = burn_in(chains, 0.5)

        sd = np.sqrt(np.diag(Sigma))
        assert np.all(np.abs(kept.mean(axis=0) - mu) <= 0.05 * sd)
        scale = np.sqrt(np.outer(np.diag(Sigma), np.diag(Sigma)))
        assert np.all(np.abs(np.cov(kept.T) - Sigma) <= 0.05 * scale)


def test_criterion_06_single_component_compression():
    with criterion(6, "one retained component at stage 1", budget_s=10.0):
        design = lhs_design(PILE_PRIOR, 14, seed=7)
        Y, _ = run_ensemble(design, 0.02, PileConfig())
        fitted = PcaPceSurrogate(PILE_PRIOR, epsilon_dr=0.02).fit(design.rows, Y)
        assert fitted.reducer_.n_retained_ == 1


def test_criterion_07_mape_trend_and_mode_ordering():
    with criterion(7, "MAPE trend over training size", budget_s=300.0):
        pile = PileConfig()
        test_design = lhs_design(PILE_PRIOR, 7, seed=8)
        tests = {v: run_ensemble(test_design, v, pile)[0] for v in (0.02, 0.20)}

        ks = range(3, 15)
        per_cell = {}
        pw_at_3 = {0.02: [], 0.20: []}
        for K in ks:
            for s in range(5):
                design = lhs_design(PILE_PRIOR, K, seed=7 + 1000 * (s + 1) + K)
                for v in (0.02, 0.20):
                    Y, _ = run_ensemble(design, v, pile)
                    fitted = PcaPceSurrogate(PILE_PRIOR, epsilon_dr=0.02)
                    fitted.fit(design.rows, Y)
                    per_cell[(K, s, v)] = mape(
                        fitted, test_design.rows, tests[v]
                    ).mape
                    if K == 3:
                        pointwise = PointwisePceSurrogate(PILE_PRIOR)
                        pointwise.fit(design.rows, Y)
                        pw_at_3[v].append(
                            mape(pointwise, test_design.rows, tests[v]).mape
                        )

        # medians over stride-3 size blocks; adjacent-K differences at the
        # 0.01% error floor are seed jitter, the block medians are not
        blocks = [(3, 4, 5), (6, 7, 8), (9, 10, 11), (12, 13, 14)]
        for v in (0.02, 0.20):
            block_medians = [
                np.median([per_cell[(K, s, v)] for K in blk for s in range(5)])
                for blk in blocks
            ]
            assert np.all(np.diff(block_medians) <= 0), (
                f"stage target {v}: block medians {block_medians} rise"
            )

            pca_med = np.median([per_cell[(3, s, v)] for s in range(5)])
            assert pca_med <= np.median(pw_at_3[v])


def test_criterion_08_two_stage_calibration():
    with criterion(8, "end-to-end calibration", budget_s=600.0):
        pile = PileConfig()
        truth = SoilInputs(G0=105e3, K0=0.7, OCR=22.5)
        design = lhs_design(PILE_PRIOR, 14, seed=7)

        stages, clean = [], []
        noise_rng = np.random.default_rng(9)
        for stage_id, v in ((1, 0.02), (2, 0.20)):
            Y, _ = run_ensemble(design, v, pile)
            fitted = PcaPceSurrogate(PILE_PRIOR, epsilon_dr=0.02)
            fitted.fit(design.rows, Y)
            y_true = solve_stage(truth, v, pile).y
            clean.append(y_true)
            noisy = y_true + noise_rng.normal(0.0, 1e-3, y_true.shape)
            stages.append((fitted, ObservationSet(noisy, stage_id=stage_id, v_G=v)))

        config = McmcConfig(walkers=30, steps=12000, burn_in=0.70,
                            stretch_a=2.0, seed=11)
        posteriors, _ = run_sequence(stages, PILE_PRIOR, config)

        last = posteriors[-1]
        covered = np.mean(
            (clean[1] >= last.predictive_lo) & (clean[1] <= last.predictive_hi)
        )
        assert covered >= 0.95

        for j in range(3):
            widths = [
                np.quantile(p.post_samples[:, j], 0.975)
                - np.quantile(p.post_samples[:, j], 0.025)
                for p in posteriors
            ]
            assert widths[1] <= widths[0]


def test_criterion_09_elastic_foundation_closed_form():
    with criterion(9, "beam closed-form oracle", budget_s=1.0):
        cfg = PileConfig()
        d_out, d_in = cfg.diameter, cfg.diameter - 2 * cfg.wall_thickness
        EI = cfg.youngs_modulus * np.pi / 64 * (d_out**4 - d_in**4)
        H = 500.0
        for k in (7e5, 1e6, 2e6):
            beta = (k * cfg.diameter / (4 * EI)) ** 0.25
            assert beta * cfg.embedded_length > 4
            profile = solve_linear(np.full(cfg.n_nodes, k), H, cfg)
            closed = 2 * beta * H / (k * cfg.diameter) * (1 + beta * cfg.load_height)
            assert abs(profile.y[0] - closed) <= 0.02 * closed


def test_criterion_10_pipeline_determinism(tmp_path):
    with criterion(10, "byte-identical pipeline repeat"):
        config_path = tmp_path / "run.toml"
        config_path.write_text(PIPELINE_TOML)
        outputs = []
        for name in ("first", "second"):
            out = tmp_path / name
            for command in ("doe", "simulate", "train", "validate",
                            "invert", "report"):
                code = main(["--config", str(config_path),
                             "--out", str(out), command])
                assert code == 0
            outputs.append(out)

        first, second = outputs
        rel_first = sorted(
            p.relative_to(first) for p in first.rglob("*") if p.is_file()
        )
        rel_second = sorted(
            p.relative_to(second) for p in second.rglob("*") if p.is_file()
        )
        assert rel_first == rel_second
        for rel in rel_first:
            if rel.name == "run.log":
                continue
            assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel
