"""Cohort-level statistics: partial correlation, LOO regression, SVM/ROC, grid search."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import linalg, stats

from . import kernels
from .errors import DataError, NumericalError

DEFAULT_THRESHOLD = 26
DEFAULT_N_SET = tuple(range(1, 11))


# --------------------------------------------------------------------------
# cohort table


@dataclass(eq=False)
class CohortTable:
    """Per-person demographics plus reconstruction-error features keyed by (S, n)."""

    person_ids: tuple
    ages: np.ndarray
    scores: np.ndarray
    features: dict = field(default_factory=dict)
    saturated: dict = field(default_factory=dict)  # (S, n) -> person ids whose value was saturated

    def __post_init__(self):
        self.person_ids = tuple(self.person_ids)
        self.ages = np.asarray(self.ages, dtype=float)
        self.scores = np.asarray(self.scores, dtype=float)
        N = len(self.person_ids)
        if len(set(self.person_ids)) != N:
            raise DataError("duplicate person ids in cohort")
        if self.ages.shape != (N,) or self.scores.shape != (N,):
            raise DataError("ages and scores must have one entry per person")
        if np.any(self.ages <= 0):
            raise DataError("ages must be positive")
        if np.any((self.scores < 0) | (self.scores > 30)):
            raise DataError("scores must lie in [0, 30]")
        for key, col in self.features.items():
            col = np.asarray(col, dtype=float)
            if col.shape != (N,):
                raise DataError(f"feature {key} has wrong length")
            self.features[key] = col

    def __len__(self) -> int:
        return len(self.person_ids)

    def feature(self, S: int, n: int) -> np.ndarray:
        try:
            return self.features[(S, n)]
        except KeyError:
            raise DataError(f"cohort has no reconstruction error for S={S}, n={n}") from None

    def subset(self, idx) -> "CohortTable":
        idx = np.asarray(idx)
        return CohortTable(
            tuple(self.person_ids[i] for i in idx),
            self.ages[idx],
            self.scores[idx],
            {k: v[idx] for k, v in self.features.items()},
        )

    def with_scores(self, scores) -> "CohortTable":
        return CohortTable(self.person_ids, self.ages, scores, dict(self.features), dict(self.saturated))

    @classmethod
    def from_series(cls, demographics: Sequence[tuple], series: Iterable, n_values: Iterable[int] = DEFAULT_N_SET) -> "CohortTable":
        """Join ``(person_id, age, score)`` rows with per-person error series.

        Persons without any series are dropped; a person missing a series for
        an S that others have raises :class:`DataError`.
        """
        n_values = tuple(n_values)
        by_key = {(s.person_id, s.S): s for s in series}
        S_values = sorted({S for _, S in by_key})
        have = {pid for pid, _ in by_key}
        rows = [r for r in demographics if r[0] in have]
        if not rows:
            raise DataError("no cohort member has reconstruction errors")
        features, saturated = {}, {}
        for S in S_values:
            for n in n_values:
                col, sat = [], []
                for pid, _, _ in rows:
                    if (pid, S) not in by_key:
                        raise DataError(f"person {pid} has no error series at S={S}")
                    value, is_sat = by_key[(pid, S)].at(n)
                    col.append(value)
                    if is_sat:
                        sat.append(pid)
                features[(S, n)] = np.array(col)
                if sat:
                    saturated[(S, n)] = tuple(sat)
        return cls(
            tuple(r[0] for r in rows),
            np.array([r[1] for r in rows], dtype=float),
            np.array([r[2] for r in rows], dtype=float),
            features,
            saturated,
        )


def read_cohort_csv(fh: IO[str]) -> list:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not {"person_id", "age", "score"} <= set(reader.fieldnames):
        raise DataError("cohort CSV header must contain person_id,age,score")
    rows = []
    for row in reader:
        try:
            rows.append((row["person_id"].strip(), float(row["age"]), float(row["score"])))
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad cohort row {row}: {exc}") from None
    return rows


def write_cohort_csv(rows: Iterable[tuple], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["person_id", "age", "score"])
    for pid, age, score in rows:
        writer.writerow([pid, repr(float(age)), int(score) if float(score).is_integer() else score])


# --------------------------------------------------------------------------
# partial correlation


class PartialCorrelation(NamedTuple):
    rho: float
    p_value: float
    n: int


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float(a @ b / math.sqrt((a @ a) * (b @ b)))


def partial_correlation(x, y, z) -> PartialCorrelation:
    """First-order partial correlation of ``x`` and ``y`` controlling for ``z``.

    The p-value is two-sided, from Student's t with ``N - 3`` degrees of freedom.
    """
    x, y, z = (np.asarray(v, dtype=float).ravel() for v in (x, y, z))
    N = x.shape[0]
    if not (y.shape[0] == N and z.shape[0] == N):
        raise DataError("partial_correlation inputs must have equal length")
    if N < 4:
        raise DataError(f"partial_correlation needs at least 4 samples, got {N}")
    for name, v in (("x", x), ("y", y), ("z", z)):
        if np.ptp(v) == 0:
            raise DataError(f"{name} is constant; correlation undefined")
    rxy, rxz, ryz = _pearson(x, y), _pearson(x, z), _pearson(y, z)
    denom2 = (1.0 - rxz * rxz) * (1.0 - ryz * ryz)
    if denom2 < 1e-24:
        raise NumericalError("partial correlation denominator vanishes (controlling variable collinear)")
    rho = (rxy - rxz * ryz) / math.sqrt(denom2)
    rho = min(1.0, max(-1.0, rho))
    df = N - 3
    if abs(rho) >= 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt(df / (1.0 - rho * rho))
        p = float(2.0 * stats.t.sf(abs(t), df))
    return PartialCorrelation(float(rho), p, N)


def significance_stars(p: float) -> str:
    if p < 0.005:
        return "**"
    if p < 0.01:
        return "*"
    return ""


def partial_correlation_table(cohort: CohortTable, S: int, n: int) -> list:
    """The three pairwise partial correlations of age, score and error."""
    err = cohort.feature(S, n)
    age, score = cohort.ages, cohort.scores
    rows = []
    for label, a, b, c in (
        ("Age vs Reconstruction error", age, err, score),
        ("Cognition score vs Age", score, age, err),
        ("Cognition score vs Reconstruction error", score, err, age),
    ):
        pc = partial_correlation(a, b, c)
        rows.append({"pair": label, "rho": pc.rho, "p_value": pc.p_value, "stars": significance_stars(pc.p_value)})
    return rows


# --------------------------------------------------------------------------
# least squares


@dataclass(frozen=True)
class LinearFit:
    coef: np.ndarray
    intercept: float

    def predict(self, features) -> np.ndarray:
        F = np.asarray(features, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        return F @ self.coef + self.intercept


def fit_linear_regression(features, targets) -> LinearFit:
    """Ordinary least squares with intercept, solved by Householder QR."""
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    y = np.asarray(targets, dtype=float).ravel()
    m, p = F.shape
    if y.shape[0] != m:
        raise DataError("features and targets differ in length")
    if m < p + 1:
        raise DataError(f"need at least {p + 1} rows for {p} features, got {m}")
    A = np.hstack([np.ones((m, 1)), F])
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.min() <= max(A.shape) * np.finfo(float).eps * max(diag.max(), 1.0):
        raise DataError("design matrix is rank deficient")
    beta = linalg.solve_triangular(R, Q.T @ y)
    return LinearFit(beta[1:], float(beta[0]))


# --------------------------------------------------------------------------
# leave-one-out regression


@dataclass(frozen=True, eq=False)
class RegressionReport:
    S: int | None
    n: int | None
    rmsd: float
    mse: float
    r_squared: float
    person_ids: tuple
    y_true: np.ndarray
    y_pred: np.ndarray
    features: tuple = ()

    def to_json(self) -> dict:
        return {
            "S": self.S,
            "n": self.n,
            "features": list(self.features),
            "rmsd": self.rmsd,
            "mse": self.mse,
            "r_squared": None if math.isnan(self.r_squared) else self.r_squared,
            "predictions": [
                {"person_id": p, "y": float(t), "y_hat": float(h)}
                for p, t, h in zip(self.person_ids, self.y_true, self.y_pred)
            ],
        }


def loo_predictions(F: np.ndarray, y: np.ndarray) -> np.ndarray:
    N = y.shape[0]
    preds = np.empty(N)
    mask = np.ones(N, dtype=bool)
    for i in range(N):
        mask[i] = False
        fit = fit_linear_regression(F[mask], y[mask])
        preds[i] = fit.predict(F[i:i + 1])[0]
        mask[i] = True
    return preds


def loo_rmsd(cohort: CohortTable, S: int | None = None, n: int | None = None, use_reconstruction: bool = True) -> RegressionReport:
    """Leave-one-out linear regression of score on (error, age) or on age alone."""
    N = len(cohort)
    if N < 3:
        raise DataError(f"leave-one-out regression needs a cohort of at least 3, got {N}")
    if use_reconstruction:
        if S is None or n is None:
            raise ValueError("S and n are required when use_reconstruction is set")
        F = np.column_stack([cohort.feature(S, n), cohort.ages])
        names = ("reconstruction_error", "age")
    else:
        F = cohort.ages[:, None]
        names = ("age",)
        S = n = None
    y = cohort.scores
    preds = loo_predictions(F, y)
    resid = y - preds
    mse = float(np.mean(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
    return RegressionReport(S, n, math.sqrt(mse), mse, r2, cohort.person_ids, y.copy(), preds, names)


# --------------------------------------------------------------------------
# linear SVM


@dataclass(frozen=True, eq=False)
class LinearSVM:
    coef: np.ndarray
    intercept: float
    alpha: np.ndarray
    n_iter: int
    converged: bool
    degenerate: bool = False

    def decision_function(self, features) -> np.ndarray:
        F = np.asarray(features, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        return F @ self.coef + self.intercept

    def predict(self, features) -> np.ndarray:
        return np.where(self.decision_function(features) >= 0, 1, -1)


def train_svm(features, labels, C: float = 1.0, tol: float = 1e-6, max_iter: int = 100_000) -> LinearSVM:
    """Soft-margin linear SVM (hinge loss, L2 penalty) by dual coordinate descent.

    The bias is learned as the weight of a constant unit feature, so it is
    regularised together with the other weights. Sweeps are cyclic, which
    makes the solver fully deterministic.
    """
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    y = np.asarray(labels, dtype=float).ravel()
    if y.shape[0] != F.shape[0]:
        raise DataError("features and labels differ in length")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be +1 or -1")
    if np.all(y == y[0]):
        raise DataError("training set contains a single class")
    if C <= 0:
        raise ValueError("C must be positive")
    Xa = np.ascontiguousarray(np.hstack([F, np.ones((F.shape[0], 1))]))
    alpha, w, n_iter, converged = kernels.svm_dual_cd(Xa, np.ascontiguousarray(y), float(C), float(tol), int(max_iter))
    scores = Xa @ w
    degenerate = bool(np.ptp(scores) <= 1e-12 * max(1.0, float(np.abs(scores).max())))
    return LinearSVM(w[:-1].copy(), float(w[-1]), alpha, int(n_iter), bool(converged), degenerate)


class Standardizer(NamedTuple):
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, F: np.ndarray) -> "Standardizer":
        mean = F.mean(axis=0)
        scale = F.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    def transform(self, F: np.ndarray) -> np.ndarray:
        return (F - self.mean) / self.scale


# --------------------------------------------------------------------------
# ROC


def roc_curve(scores, labels) -> tuple:
    """ROC points for ``labels`` in {+1, -1}; higher scores mean positive.

    Tied scores form a single diagonal step. Returns ``(fpr, tpr)`` starting
    at (0, 0) and ending at (1, 1).
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel() > 0
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.nonzero(np.diff(s))[0], s.shape[0] - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = (last_of_group + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    return fpr, tpr


def auc_trapezoid(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) * 0.5))


def roc_auc(scores, labels) -> float:
    return auc_trapezoid(*roc_curve(scores, labels))


def interpolate_roc(fpr, tpr, grid) -> np.ndarray:
    """TPR of the ROC polyline at each grid FPR; at vertical steps the top is taken."""
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    out = np.empty(len(grid))
    for g, f in enumerate(grid):
        j = int(np.searchsorted(fpr, f, side="right")) - 1
        if fpr[j] == f or j == len(fpr) - 1:
            out[g] = tpr[j]
        else:
            x0, x1 = fpr[j], fpr[j + 1]
            out[g] = tpr[j] + (tpr[j + 1] - tpr[j]) * (f - x0) / (x1 - x0)
    return out


# --------------------------------------------------------------------------
# classification


def stratified_split(labels: np.ndarray, test_fraction: float, rng: np.random.Generator) -> tuple:
    labels = np.asarray(labels)
    N = labels.shape[0]
    n_test = int(round(N * test_fraction))
    classes = np.unique(labels)
    test = []
    remaining = n_test
    for k, c in enumerate(classes):
        members = np.nonzero(labels == c)[0]
        if k == len(classes) - 1:
            take = remaining
        else:
            take = int(round(n_test * members.shape[0] / N))
        take = min(max(take, 1), members.shape[0] - 1)
        remaining -= take
        test.append(rng.permutation(members)[:take])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(N), test_idx)
    return train_idx, test_idx


@dataclass(frozen=True, eq=False)
class FoldResult:
    train_idx: np.ndarray
    test_idx: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class ClassificationReport:
    S: int
    n: int
    threshold: int
    folds: tuple
    mean_fpr: np.ndarray
    mean_tpr: np.ndarray
    std_tpr: np.ndarray
    mean_auc: float
    fold_auc_mean: float
    fold_auc_std: float

    @property
    def fold_rocs(self) -> list:
        return [(f.fpr, f.tpr) for f in self.folds]

    def to_json(self) -> dict:
        return {
            "S": self.S,
            "n": self.n,
            "threshold": self.threshold,
            "positive_class": f"score < {self.threshold}",
            "mean_auc": self.mean_auc,
            "fold_auc_mean": self.fold_auc_mean,
            "fold_auc_std": self.fold_auc_std,
            "mean_roc": {
                "fpr": [float(v) for v in self.mean_fpr],
                "tpr": [float(v) for v in self.mean_tpr],
                "tpr_std": [float(v) for v in self.std_tpr],
            },
            "folds": [
                {
                    "auc": f.auc,
                    "degenerate": f.degenerate,
                    "fpr": [float(v) for v in f.fpr],
                    "tpr": [float(v) for v in f.tpr],
                }
                for f in self.folds
            ],
        }


def impaired_labels(scores, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """+1 for scores below the cutoff, -1 at or above it."""
    return np.where(np.asarray(scores) < threshold, 1, -1)


def classify_cohort(
    cohort: CohortTable,
    S: int,
    n: int,
    threshold: int = DEFAULT_THRESHOLD,
    repeats: int = 20,
    test_fraction: float = 1.0 / 3.0,
    seed: int = 0,
    C: float = 1.0,
    grid_points: int = 101,
    max_retries: int = 100,
) -> ClassificationReport:
    """Repeated stratified shuffle-split SVM classification at the score cutoff.

    Features are (reconstruction error, age), standardized with training-fold
    statistics. The mean ROC is the vertical average of the fold ROCs on a
    fixed FPR grid; ``mean_auc`` is its trapezoidal area.
    """
    labels = impaired_labels(cohort.scores, threshold)
    for c in (1, -1):
        if np.sum(labels == c) < 3:
            raise DataError(f"each class needs at least 3 members (cutoff {threshold})")
    F = np.column_stack([cohort.feature(S, n), cohort.ages])
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, grid_points)
    folds = []
    for _ in range(repeats):
        for _attempt in range(max_retries):
            train_idx, test_idx = stratified_split(labels, test_fraction, rng)
            if len(np.unique(labels[test_idx])) == 2 and len(np.unique(labels[train_idx])) == 2:
                break
        else:
            raise DataError("could not draw a split with both classes in train and validation sets")
        scaler = Standardizer.fit(F[train_idx])
        model = train_svm(scaler.transform(F[train_idx]), labels[train_idx], C=C)
        scores = model.decision_function(scaler.transform(F[test_idx]))
        fpr, tpr = roc_curve(scores, labels[test_idx])
        folds.append(FoldResult(train_idx, test_idx, scores, labels[test_idx], fpr, tpr, auc_trapezoid(fpr, tpr), model.degenerate))
    curves = np.array([interpolate_roc(f.fpr, f.tpr, grid) for f in folds])
    mean_tpr = curves.mean(axis=0)
    aucs = np.array([f.auc for f in folds])
    return ClassificationReport(
        S, n, threshold, tuple(folds), grid, mean_tpr, curves.std(axis=0),
        auc_trapezoid(grid, mean_tpr), float(aucs.mean()), float(aucs.std()),
    )


# --------------------------------------------------------------------------
# grid search


@dataclass(frozen=True, eq=False)
class GridSearchResult:
    best: tuple
    best_rmsd: float
    surface: dict  # (S, n) -> RMSD
    baseline_rmsd: float
    saturated: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "best": {"S": self.best[0], "n": self.best[1], "rmsd": self.best_rmsd},
            "baseline_rmsd": self.baseline_rmsd,
            "surface": [
                {"S": S, "n": n, "rmsd": None if math.isnan(v) else v} for (S, n), v in sorted(self.surface.items())
            ],
            "saturated": [
                {"S": S, "n": n, "person_ids": list(p)} for (S, n), p in sorted(self.saturated.items())
            ],
        }


def select_best(surface: Mapping[tuple, float]) -> tuple:
    """Argmin of the surface; ties go to the smaller S, then the smaller n."""
    finite = {k: v for k, v in surface.items() if not math.isnan(v)}
    if not finite:
        raise DataError("grid-search surface is empty")
    return min(finite, key=lambda k: (finite[k], k[0], k[1]))


def grid_search(cohort: CohortTable, S_set: Iterable[int] = (24, 48, 96, 144, 288), n_set: Iterable[int] = DEFAULT_N_SET) -> GridSearchResult:
    """Leave-one-out RMSD for every (S, n); the smallest wins.

    A cell whose design is rank deficient in some fold (typically every
    person saturated, leaving round-off as the feature) scores NaN.
    """
    surface = {}
    for S in S_set:
        for n in n_set:
            try:
                surface[(S, n)] = loo_rmsd(cohort, S, n).rmsd
            except DataError:
                surface[(S, n)] = math.nan
    best = select_best(surface)
    saturated = {k: cohort.saturated[k] for k in surface if k in cohort.saturated}
    return GridSearchResult(best, surface[best], surface, loo_rmsd(cohort, use_reconstruction=False).rmsd, saturated)
