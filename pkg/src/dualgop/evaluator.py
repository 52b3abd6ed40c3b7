"""Accentedness regression: univariate F-test feature selection, ridge
regression on standardized features, nested leave-one-speaker-out CV.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputWarning, DegenerateLabels, InvalidConfig, InvalidInput, SingularSystem

F_SENTINEL = float(np.finfo(np.float64).max)
STD_FLOOR = 1e-12
DEFAULT_LAMBDAS = (0.01, 0.1, 1.0, 10.0)
DEFAULT_KS = (4, 8, 12, 24)


@dataclass(frozen=True)
class Dataset:
    speakers: tuple
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "speakers", tuple(self.speakers))
        if len(set(self.speakers)) != len(self.speakers):
            raise InvalidInput("dataset needs one row per speaker")
        if X.shape[0] != len(y) or len(y) != len(self.speakers):
            raise InvalidInput("speakers, features and labels disagree in length")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInput("dataset contains non-finite values")

    def __len__(self):
        return len(self.y)


def f_regression_scores(X, y) -> np.ndarray:
    """Per-feature F statistic of a univariate linear fit, r^2 / (1 - r^2) * (n - 2)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n < 3:
        raise InvalidInput("F test needs at least 3 rows")
    yc = y - y.mean()
    syy = yc @ yc
    if syy <= 0:
        raise DegenerateLabels("labels are constant")
    Xc = X - X.mean(axis=0)
    sxx = (Xc * Xc).sum(axis=0)
    F = np.zeros(X.shape[1])
    ok = sxx > 0
    r = np.zeros(X.shape[1])
    r[ok] = (Xc[:, ok].T @ yc) / np.sqrt(sxx[ok] * syy)
    r = np.clip(r, -1.0, 1.0)
    perfect = ok & (np.abs(r) >= 1.0 - 1e-12)
    regular = ok & ~perfect
    F[regular] = r[regular] ** 2 / (1.0 - r[regular] ** 2) * (n - 2)
    F[perfect] = F_SENTINEL
    return F


@dataclass(frozen=True)
class RidgeModel:
    selected: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray
    intercept: float
    lam: float
    n_features: int


def _select(X, y, k):
    p = X.shape[1]
    if not 1 <= k <= p:
        raise InvalidConfig(f"k={k} outside [1, {p}]")
    if k == p:
        return np.arange(p)
    F = f_regression_scores(X, y)
    return np.sort(np.argsort(-F, kind="stable")[:k])


def ridge_fit(X, y, lam: float, k: int) -> RidgeModel:
    """Fit ridge on the top-``k`` F-test features, standardized on this data.

    Solves (Z'Z + lam I) w = Z'(y - ybar); the intercept ybar is unpenalized.
    Constant columns are centred but left unscaled.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != len(y) or len(y) < 2:
        raise InvalidInput("ridge_fit needs at least 2 rows and matching labels")
    if lam < 0:
        raise InvalidConfig("lambda must be non-negative")
    sel = _select(X, y, k)
    Xs = X[:, sel]
    mean = Xs.mean(axis=0)
    std = Xs.std(axis=0)
    scale = np.where(std > STD_FLOOR, std, 1.0)
    Z = (Xs - mean) / scale
    ybar = float(y.mean())
    A = Z.T @ Z + lam * np.eye(len(sel))
    b = Z.T @ (y - ybar)
    if lam == 0 and np.linalg.matrix_rank(A) < len(sel):
        raise SingularSystem("normal equations are singular (collinear features, lambda = 0)")
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return RidgeModel(sel, mean, scale, w, ybar, float(lam), X.shape[1])


def ridge_predict(m: RidgeModel, x, clamp: bool = False):
    """Predict one feature vector (returns float) or a matrix of rows."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != m.n_features:
        raise InvalidInput(f"expected {m.n_features} features, got {x.shape[1]}")
    pred = ((x[:, m.selected] - m.mean) / m.scale) @ m.weights + m.intercept
    if clamp:
        pred = np.clip(pred, 1.0, 4.0)
    return float(pred[0]) if single else pred


def compute_metrics(y_true, y_pred):
    """Returns ``(pcc, mae)``; PCC of a constant vector is 0 with a warning."""
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInput("y_true and y_pred must be 1-D and the same length")
    if len(a) < 2:
        raise InvalidInput("metrics need at least 2 pairs")
    mae = float(np.mean(np.abs(a - b)))
    ac, bc = a - a.mean(), b - b.mean()
    den = np.sqrt((ac @ ac) * (bc @ bc))
    if den == 0:
        warnings.warn("PCC undefined for a constant vector; reporting 0", DegenerateInputWarning, stacklevel=2)
        return 0.0, mae
    return float(np.clip((ac @ bc) / den, -1.0, 1.0)), mae


@dataclass
class FoldResult:
    speaker: str
    lam: float
    k: int
    model: RidgeModel
    inner_mse: float


@dataclass
class EvalReport:
    speakers: tuple
    y_true: np.ndarray
    y_pred: np.ndarray
    pcc: float
    mae: float
    folds: list = field(default_factory=list)
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "pcc": self.pcc,
            "mae": self.mae,
            "degenerate": self.degenerate,
            "speakers": [
                {"speaker": s, "true": float(t), "predicted": float(p), "lambda": f.lam, "k": f.k}
                for s, t, p, f in zip(self.speakers, self.y_true, self.y_pred, self.folds)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_text(self) -> str:
        lines = [f"{'speaker':<12}{'true':>8}{'pred':>8}{'lambda':>9}{'k':>4}"]
        for s, t, p, f in zip(self.speakers, self.y_true, self.y_pred, self.folds):
            lines.append(f"{s:<12}{t:>8.3f}{p:>8.3f}{f.lam:>9g}{f.k:>4d}")
        lines.append(f"PCC {self.pcc:.4f}   MAE {self.mae:.4f}   (n={len(self.speakers)})")
        return "\n".join(lines) + "\n"


def _k_grid(ks, dim):
    return sorted({min(k, dim) for k in ks if k >= 1})


def _tune(X, y, lambdas, ks):
    """Inner leave-one-out grid search; ties -> smallest lambda, then smallest k."""
    n = len(y)
    errs = np.zeros((len(lambdas), len(ks)))
    for j in range(n):
        keep = np.arange(n) != j
        if np.ptp(y[keep]) == 0:
            raise DegenerateLabels("constant labels in an inner training fold")
        for b, k in enumerate(ks):
            for a, lam in enumerate(lambdas):
                m = ridge_fit(X[keep], y[keep], lam, k)
                errs[a, b] += (ridge_predict(m, X[j]) - y[j]) ** 2
    errs /= n
    best = np.min(errs)
    a, b = np.argwhere(errs == best)[0]  # row-major: smallest lambda, then smallest k
    return lambdas[a], ks[b], float(best)


def loso_evaluate(d: Dataset, lambdas=DEFAULT_LAMBDAS, ks=DEFAULT_KS) -> EvalReport:
    """Leave-one-speaker-out predictions with per-fold nested hyperparameter tuning."""
    n = len(d)
    if n < 3:
        raise InvalidInput("leave-one-speaker-out needs at least 3 speakers")
    lambdas = sorted(float(v) for v in lambdas)
    ks = _k_grid(ks, d.X.shape[1])
    if not lambdas or not ks:
        raise InvalidConfig("empty hyperparameter grid")
    preds = np.zeros(n)
    folds = []
    for i in range(n):
        keep = np.arange(n) != i
        Xtr, ytr = d.X[keep], d.y[keep]
        if np.ptp(ytr) == 0:
            raise DegenerateLabels(f"constant labels when holding out {d.speakers[i]!r}")
        if len(ytr) >= 3:
            lam, k, mse = _tune(Xtr, ytr, lambdas, ks)
        else:
            lam, k, mse = lambdas[0], ks[0], float("nan")
        m = ridge_fit(Xtr, ytr, lam, k)
        preds[i] = ridge_predict(m, d.X[i])
        folds.append(FoldResult(d.speakers[i], lam, k, m, mse))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateInputWarning)
        pcc, mae = compute_metrics(d.y, preds)
    degenerate = any(issubclass(w.category, DegenerateInputWarning) for w in caught)
    return EvalReport(d.speakers, d.y.copy(), preds, pcc, mae, folds, degenerate)
