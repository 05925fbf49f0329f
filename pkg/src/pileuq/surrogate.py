"""Two-step PCA-PCE surrogate and its pointwise baseline.

``PcaPceSurrogate`` compresses the K x N output ensemble with PCA and fits
one sparse expansion per retained score column; prediction recomposes
mean + scores * basis. ``PointwisePceSurrogate`` fits N independent
expansions, one per output entry, behind the same interface. Both persist
to a single versioned JSON document.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .doe import PriorSpec
from .errors import (
    DimensionMismatch,
    InsufficientSamples,
    IoFailure,
    SchemaInvalid,
    VersionMismatch,
)
from .pca import PcaReducer, reconstruction_error
from .pce import MultiIndexSet, PceModel, adapt_degree, eval_pce

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ValidationReport:
    """MAPE summary over a test set."""

    mape: float
    per_point_mape: np.ndarray
    n_test: int


def _check_training_shapes(X: np.ndarray, Y: np.ndarray, prior: PriorSpec):
    if X.ndim != 2 or Y.ndim != 2:
        raise DimensionMismatch("X and Y must be 2-D arrays")
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatch(
            f"X has {X.shape[0]} rows but Y has {Y.shape[0]}"
        )
    if X.shape[0] < 3:
        raise InsufficientSamples(f"need at least 3 training runs, got {X.shape[0]}")
    if X.shape[1] != prior.dimension:
        raise DimensionMismatch(
            f"X has {X.shape[1]} columns, prior has {prior.dimension}"
        )


class PcaPceSurrogate(BaseEstimator, RegressorMixin):
    """PCA-compressed sparse-PCE emulator of a vector-valued model.

    Parameters
    ----------
    prior : PriorSpec
        Input box; defines the affine map onto [-1, 1]^M.
    epsilon_dr : float
        Unexplained-variance budget for choosing the score count N'.
    p_candidates, q_norm, max_terms
        Degree-adaptation settings forwarded to each component fit.

    Attributes
    ----------
    reducer_ : fitted PcaReducer.
    components_ : list of N' PceModel, component i targeting score column i.
    training_K_ : ensemble size used for training.
    """

    mode = "pca-pce"

    def __init__(self, prior: PriorSpec, epsilon_dr: float = 0.02,
                 p_candidates=(1, 2, 3, 4, 5, 6), q_norm: float = 0.75,
                 max_terms: int | None = None):
        self.prior = prior
        self.epsilon_dr = epsilon_dr
        self.p_candidates = p_candidates
        self.q_norm = q_norm
        self.max_terms = max_terms

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        _check_training_shapes(X, Y, self.prior)
        self.reducer_ = PcaReducer(epsilon_dr=self.epsilon_dr).fit(Y)
        scores = self.reducer_.transform(Y)
        self.components_ = [
            adapt_degree(X, scores[:, i], self.prior,
                         p_candidates=self.p_candidates, q=self.q_norm,
                         max_terms=self.max_terms)
            for i in range(self.reducer_.n_retained_)
        ]
        self.training_K_ = X.shape[0]
        pca_err = reconstruction_error(
            Y, self.reducer_.inverse_transform(scores))
        total_err = reconstruction_error(Y, self.predict(X))
        logger.info(
            "pca-pce fit: K=%d N'=%d compression_error=%.3e training_error=%.3e",
            self.training_K_, self.reducer_.n_retained_, pca_err, total_err,
        )
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = np.atleast_2d(X)
        scores = np.column_stack(
            [np.atleast_1d(eval_pce(c, pts)) for c in self.components_]
        )
        out = self.reducer_.inverse_transform(scores)
        return out[0] if single else out


class PointwisePceSurrogate(BaseEstimator, RegressorMixin):
    """Baseline without dimension reduction: one expansion per output entry."""

    mode = "pointwise-pce"

    def __init__(self, prior: PriorSpec, p_candidates=(1, 2, 3, 4, 5, 6),
                 q_norm: float = 0.75, max_terms: int | None = None):
        self.prior = prior
        self.p_candidates = p_candidates
        self.q_norm = q_norm
        self.max_terms = max_terms

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        _check_training_shapes(X, Y, self.prior)
        self.components_ = [
            adapt_degree(X, Y[:, n], self.prior,
                         p_candidates=self.p_candidates, q=self.q_norm,
                         max_terms=self.max_terms)
            for n in range(Y.shape[1])
        ]
        self.training_K_ = X.shape[0]
        logger.info(
            "pointwise-pce fit: K=%d outputs=%d",
            self.training_K_, len(self.components_),
        )
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        pts = np.atleast_2d(X)
        out = np.column_stack(
            [np.atleast_1d(eval_pce(c, pts)) for c in self.components_]
        )
        return out[0] if single else out


def mape(surrogate, X_test, Y_test) -> ValidationReport:
    """Mean absolute percent error with a floor on the denominator.

    mape = (100 / (K' N)) sum |Y - Yhat| / (|Y| + delta) with
    delta = 1e-3 max|Y_test|; per-point values average over test runs only.
    """
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    Y_test = np.atleast_2d(np.asarray(Y_test, dtype=float))
    if X_test.shape[0] != Y_test.shape[0]:
        raise DimensionMismatch(
            f"{X_test.shape[0]} test inputs but {Y_test.shape[0]} test outputs"
        )
    if X_test.shape[0] < 1:
        raise DimensionMismatch("need at least one test run")
    preds = np.atleast_2d(surrogate.predict(X_test))
    if preds.shape != Y_test.shape:
        raise DimensionMismatch(
            f"predictions {preds.shape} do not match outputs {Y_test.shape}"
        )
    delta = 1e-3 * float(np.max(np.abs(Y_test)))
    if delta == 0.0:
        delta = np.finfo(float).tiny
    ratios = np.abs(Y_test - preds) / (np.abs(Y_test) + delta)
    per_point = 100.0 * ratios.mean(axis=0)
    return ValidationReport(float(per_point.mean()), per_point, Y_test.shape[0])


def _pce_to_dict(model: PceModel) -> dict:
    return {
        "indices": [list(a) for a in model.index_set.indices],
        "coefficients": model.coefficients.tolist(),
        "active": model.active.astype(int).tolist(),
        "loo_error": model.loo_error,
        "degree": model.index_set.max_degree,
        "q_norm": model.index_set.q_norm,
    }


def _pce_from_dict(data: dict, prior: PriorSpec) -> PceModel:
    index_set = MultiIndexSet(
        tuple(tuple(int(v) for v in a) for a in data["indices"]),
        int(data["degree"]),
        float(data["q_norm"]),
    )
    return PceModel(
        index_set,
        np.asarray(data["coefficients"], dtype=float),
        np.asarray(data["active"], dtype=bool),
        prior,
        float(data["loo_error"]),
    )


def save_surrogate(surrogate, path) -> None:
    """Write a fitted surrogate as a single versioned JSON document."""
    doc = {
        "format_version": FORMAT_VERSION,
        "prior": [
            {"name": e.name, "low": e.low, "high": e.high}
            for e in surrogate.prior.entries
        ],
        "mode": surrogate.mode,
        "pca": None,
        "components": [_pce_to_dict(c) for c in surrogate.components_],
        "training_meta": {
            "training_K": surrogate.training_K_,
            "q_norm": surrogate.q_norm,
            "p_candidates": list(surrogate.p_candidates),
            "max_terms": surrogate.max_terms,
        },
    }
    if surrogate.mode == "pca-pce":
        red = surrogate.reducer_
        doc["pca"] = {
            "mean": red.mean_.tolist(),
            "eigenvalues": red.eigenvalues_[: red.n_retained_].tolist(),
            "eigenvectors": red.eigenvectors_[:, : red.n_retained_].tolist(),
            "n_retained": red.n_retained_,
            "n_output": red.n_output_,
        }
        doc["training_meta"]["epsilon_dr"] = surrogate.epsilon_dr
    try:
        with open(path, "w") as f:
            json.dump(doc, f)
    except OSError as exc:
        raise IoFailure(f"cannot write surrogate to {path}: {exc}") from exc


def load_surrogate(path):
    """Read a surrogate written by :func:`save_surrogate`."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoFailure(f"cannot read surrogate from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaInvalid(f"surrogate file {path} is not valid JSON: {exc}") from exc

    try:
        version = doc["format_version"]
        if version != FORMAT_VERSION:
            raise VersionMismatch(
                f"surrogate format_version {version} unsupported, expected {FORMAT_VERSION}"
            )
        prior = PriorSpec.from_bounds(
            [e["name"] for e in doc["prior"]],
            [e["low"] for e in doc["prior"]],
            [e["high"] for e in doc["prior"]],
        )
        meta = doc["training_meta"]
        mode = doc["mode"]
        if mode == "pca-pce":
            surrogate = PcaPceSurrogate(
                prior,
                epsilon_dr=meta["epsilon_dr"],
                p_candidates=tuple(meta["p_candidates"]),
                q_norm=meta["q_norm"],
                max_terms=meta["max_terms"],
            )
            pca = doc["pca"]
            reducer = PcaReducer(epsilon_dr=meta["epsilon_dr"],
                                 n_components=int(pca["n_retained"]))
            reducer.mean_ = np.asarray(pca["mean"], dtype=float)
            reducer.eigenvalues_ = np.asarray(pca["eigenvalues"], dtype=float)
            reducer.eigenvectors_ = np.asarray(pca["eigenvectors"], dtype=float)
            reducer.n_retained_ = int(pca["n_retained"])
            reducer.n_output_ = int(pca["n_output"])
            surrogate.reducer_ = reducer
        elif mode == "pointwise-pce":
            surrogate = PointwisePceSurrogate(
                prior,
                p_candidates=tuple(meta["p_candidates"]),
                q_norm=meta["q_norm"],
                max_terms=meta["max_terms"],
            )
        else:
            raise SchemaInvalid(f"unknown surrogate mode {mode!r}")
        surrogate.components_ = [_pce_from_dict(c, prior) for c in doc["components"]]
        surrogate.training_K_ = int(meta["training_K"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaInvalid(f"surrogate file {path} is malformed: {exc}") from exc
    return surrogate
