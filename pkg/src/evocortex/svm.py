"""Linear soft-margin SVM with Platt-calibrated confidences.

The primal objective (with the bias folded into the weight vector as an
augmented constant feature, so it is regularized too) is

    P(w, b) = 0.5 * (||w||^2 + b^2) + C * sum_i max(0, 1 - y_i (w.z_i + b))

over per-feature standardized inputs z. Training runs dual coordinate
descent in a fixed sweep order, so results are exactly reproducible and the
label-flip antisymmetry holds to machine precision.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ConfigError, ConvergenceError, DataError

MAX_SWEEPS = 10000
TOL = 1e-8


def hinge_objective(w_aug: np.ndarray, X_aug: np.ndarray, y: np.ndarray, c_reg: float) -> float:
    """Primal objective value at an augmented weight vector."""
    margins = y * (X_aug @ w_aug)
    return 0.5 * float(w_aug @ w_aug) + c_reg * float(np.maximum(0.0, 1.0 - margins).sum())


def _solve_dual_cd(X_aug, y, c_reg):
    """Dual coordinate descent for the L1-hinge SVM; returns the augmented w."""
    n = X_aug.shape[0]
    qii = np.einsum("ij,ij->i", X_aug, X_aug)
    alpha = np.zeros(n)
    w = np.zeros(X_aug.shape[1])
    for sweep in range(MAX_SWEEPS):
        max_pg = 0.0
        for i in range(n):
            g = y[i] * (X_aug[i] @ w) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= c_reg:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                max_pg = max(max_pg, abs(pg))
                new_a = min(max(alpha[i] - g / qii[i], 0.0), c_reg)
                w += (new_a - alpha[i]) * y[i] * X_aug[i]
                alpha[i] = new_a
        if max_pg < TOL:
            return w
    raise ConvergenceError(
        "dual coordinate descent hit the sweep cap",
        diagnostics={"sweeps": MAX_SWEEPS, "last_max_pg": max_pg,
                     "objective": hinge_objective(w, X_aug, y, c_reg)},
    )


def fit_platt_sigmoid(margins, labels, max_iter=200):
    """Platt's sigmoid fit: minimize the calibrated log-loss over (A, B).

    Targets use Platt's prior-corrected values so the fit stays well-posed
    on separable data. Returns (A, B) with P(y=+1 | m) = 1/(1+exp(A*m+B)).
    """
    margins = np.asarray(margins, dtype=np.float64)
    labels = np.asarray(labels)
    prior1 = int((labels > 0).sum())
    prior0 = len(labels) - prior1
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(labels > 0, hi, lo)

    a, b = 0.0, float(np.log((prior0 + 1.0) / (prior1 + 1.0)))
    sigma = 1e-12

    def fval(a, b):
        z = a * margins + b
        # stable log(1 + exp(-|z|)) formulation
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)),
                                     (t - 1) * z + np.log1p(np.exp(z)))))

    f = fval(a, b)
    for _ in range(max_iter):
        z = a * margins + b
        p = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        d1 = t - p
        d2 = p * (1 - p)
        g1 = float(np.sum(margins * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-10 and abs(g2) < 1e-10:
            break
        h11 = float(np.sum(margins * margins * d2)) + sigma
        h22 = float(np.sum(d2)) + sigma
        h12 = float(np.sum(margins * d2))
        det = h11 * h22 - h12 * h12
        da = -(h22 * g1 - h12 * g2) / det
        db = -(-h12 * g1 + h11 * g2) / det
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nf = fval(na, nb)
            if nf < f + 1e-4 * step * (g1 * da + g2 * db):
                a, b, f = na, nb, nf
                break
            step /= 2
        else:
            break
    return float(a), float(b)


class LinearSvm(BaseEstimator, ClassifierMixin):
    """Standardizing linear SVM with Platt-calibrated posteriors.

    Parameters
    ----------
    c_reg : float
        Hinge-loss weight C of the primal objective.
    platt_folds : int
        Cross-validation folds used to collect margins for the sigmoid fit
        (falls back to in-sample margins when a class is too small).
    """

    def __init__(self, c_reg=1.0, platt_folds=3):
        self.c_reg = c_reg
        self.platt_folds = platt_folds

    # -- helpers -----------------------------------------------------------
    def _standardize(self, X):
        return (X - self.mean_) / self.scale_

    def _augment(self, Z):
        return np.hstack([Z, np.ones((Z.shape[0], 1))])

    # -- estimator API -----------------------------------------------------
    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y):
            raise DataError("descriptor matrix and labels disagree")
        if not set(np.unique(y)) <= {-1.0, 1.0}:
            raise DataError("labels must be +-1")
        pos, neg = int((y > 0).sum()), int((y < 0).sum())
        if pos < 2 or neg < 2:
            raise ConfigError("training needs at least 2 examples per class")

        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        Z = self._augment(self._standardize(X))

        w_aug = _solve_dual_cd(Z, y, self.c_reg)
        self.weights_ = w_aug[:-1].copy()
        self.bias_ = float(w_aug[-1])

        self.platt_a_, self.platt_b_ = self._fit_platt(Z, y)
        self.classes_ = np.array([-1, 1])
        train_acc = float(np.mean(np.where(Z @ w_aug >= 0, 1.0, -1.0) == y))
        self.train_stats_ = {"train_acc": train_acc, "val_acc": None}
        return self

    def _fit_platt(self, Z, y):
        pos_idx = [i for i in range(len(y)) if y[i] > 0]
        neg_idx = [i for i in range(len(y)) if y[i] < 0]
        folds = self.platt_folds
        if min(len(pos_idx), len(neg_idx)) < folds:
            margins = Z @ np.concatenate([self.weights_, [self.bias_]])
            return fit_platt_sigmoid(margins, y)
        fold_of = np.zeros(len(y), dtype=int)
        for j, i in enumerate(pos_idx):
            fold_of[i] = j % folds
        for j, i in enumerate(neg_idx):
            fold_of[i] = j % folds
        margins = np.zeros(len(y))
        for f in range(folds):
            tr, te = fold_of != f, fold_of == f
            w_aug = _solve_dual_cd(Z[tr], y[tr], self.c_reg)
            margins[te] = Z[te] @ w_aug
        return fit_platt_sigmoid(margins, y)

    def margin(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.weights_.shape[0]:
            raise DataError(
                f"descriptor length {X.shape[1]} != model length {self.weights_.shape[0]}")
        return self._standardize(X) @ self.weights_ + self.bias_

    def decision_function(self, X):
        return self.margin(X)

    def predict(self, X):
        return np.where(self.margin(X) >= 0, 1, -1)

    def proba_positive(self, X):
        z = self.platt_a_ * self.margin(X) + self.platt_b_
        return np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))

    def predict_proba(self, X):
        p = self.proba_positive(X)
        return np.column_stack([1 - p, p])

    def predict_one(self, d):
        """(label, confidence) for one descriptor; confidence >= 0.5 by contract."""
        m = float(self.margin([d])[0])
        label = 1 if m >= 0 else -1
        p_pos = float(self.proba_positive([d])[0])
        conf = p_pos if label == 1 else 1.0 - p_pos
        conf = min(max(conf, 0.5), 1.0 - 1e-12)
        return label, conf

    # -- persistence -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "weights": self.weights_.tolist(),
            "bias": self.bias_,
            "platt_a": self.platt_a_,
            "platt_b": self.platt_b_,
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "c_reg": self.c_reg,
            "train_stats": self.train_stats_,
        }

    @classmethod
    def from_dict(cls, d) -> "LinearSvm":
        m = cls(c_reg=d["c_reg"])
        m.weights_ = np.asarray(d["weights"], dtype=np.float64)
        m.bias_ = float(d["bias"])
        m.platt_a_ = float(d["platt_a"])
        m.platt_b_ = float(d["platt_b"])
        m.mean_ = np.asarray(d["mean"], dtype=np.float64)
        m.scale_ = np.asarray(d["scale"], dtype=np.float64)
        m.train_stats_ = d.get("train_stats", {})
        m.classes_ = np.array([-1, 1])
        return m
