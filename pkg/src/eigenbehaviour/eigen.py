"""Eigenbehaviours and normalized reconstruction errors.

The principal directions of a person's day deviations are the eigenvectors
of the scatter matrix ``X_hat.T @ X_hat``. With far fewer days than
features they are obtained from the small Gram matrix ``X_hat @ X_hat.T``:
if ``u`` is a Gram eigenvector with eigenvalue ``lam`` then
``X_hat.T @ u / sqrt(lam)`` is a unit scatter eigenvector with the same
eigenvalue.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import kernels
from .errors import DataError, NumericalError
from .matrix import BehaviourMatrix

NEGATIVE_TOL = 1e-9
MONOTONE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EigenModel:
    eigenvalues: np.ndarray  # (r,), descending
    eigenvectors: np.ndarray  # (F, r), orthonormal columns
    psi: np.ndarray | None = None
    person_id: str = ""
    S: int = 0

    @property
    def rank(self) -> int:
        return self.eigenvalues.shape[0]

    def to_json(self) -> dict:
        return {
            "person_id": self.person_id,
            "S": self.S,
            "rank": self.rank,
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }


def _fix_signs(V: np.ndarray) -> np.ndarray:
    if V.shape[1] == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def gram_eigenpairs(X_hat: np.ndarray) -> tuple:
    """Non-zero eigenpairs of ``X_hat.T @ X_hat`` via the D x D Gram matrix.

    Returns ``(eigenvalues, eigenvectors)`` ordered by decreasing eigenvalue,
    with eigenvectors as columns of a ``(F, r)`` array.
    """
    X_hat = np.asarray(X_hat, dtype=float)
    D, F = X_hat.shape
    if D == 0 or F == 0:
        return np.zeros(0), np.zeros((F, 0))
    gram = X_hat @ X_hat.T
    gram = 0.5 * (gram + gram.T)
    lam, U = np.linalg.eigh(gram)
    lam, U = lam[::-1], U[:, ::-1]
    top = max(float(lam[0]), 0.0)
    floor = -NEGATIVE_TOL * max(1.0, top)
    if lam[-1] < floor:
        raise NumericalError(f"Gram matrix has eigenvalue {lam[-1]:.3e} below {floor:.1e}")
    # eigenvalues below the round-off floor of the Gram route carry no direction
    rank_tol = 10.0 * max(D, F) * np.finfo(float).eps * top
    keep = lam > rank_tol if top > 0 else np.zeros(D, dtype=bool)
    lam, U = lam[keep], U[:, keep]
    V = X_hat.T @ U / np.sqrt(lam)[None, :]
    return lam, _fix_signs(V)


def fit_eigenmodel(bm: BehaviourMatrix) -> EigenModel:
    if bm.D < 2:
        raise DataError("need at least 2 days")
    lam, V = gram_eigenpairs(bm.X_hat)
    return EigenModel(lam, V, psi=bm.psi, person_id=bm.person_id, S=bm.S)


def fit_deviations(X_hat: np.ndarray) -> EigenModel:
    lam, V = gram_eigenpairs(X_hat)
    return EigenModel(lam, V)


def _check_n(model: EigenModel, n: int) -> None:
    if not 0 <= n <= model.rank:
        raise ValueError(f"n must lie in [0, {model.rank}], got {n}")


def reconstruct(model: EigenModel, X_hat: np.ndarray, n: int) -> np.ndarray:
    """Projection of every deviation row onto the first ``n`` eigenvectors."""
    _check_n(model, n)
    Vn = model.eigenvectors[:, :n]
    return (np.asarray(X_hat, dtype=float) @ Vn) @ Vn.T


def reconstruction_error(model: EigenModel, X_hat: np.ndarray, n: int) -> float:
    """Mean absolute residual per matrix cell after rank-``n`` reconstruction."""
    X_hat = np.asarray(X_hat, dtype=float)
    resid = X_hat - reconstruct(model, X_hat, n)
    return float(np.abs(resid).sum() / X_hat.size)


@dataclass(frozen=True, eq=False)
class ReconstructionErrorSeries:
    person_id: str
    S: int
    errors: np.ndarray  # errors[n] for n = 0..len-1
    rank: int
    violations: tuple = field(default=())  # n where errors[n] > errors[n-1] + MONOTONE_TOL

    @property
    def n_max(self) -> int:
        return len(self.errors) - 1

    def at(self, n: int) -> tuple:
        """``(error, saturated)``; beyond the rank the last value is repeated."""
        if n < 0:
            raise ValueError("n must be >= 0")
        if n <= self.n_max:
            return float(self.errors[n]), False
        if self.n_max < self.rank:
            raise ValueError(f"series was computed only up to n={self.n_max}")
        return float(self.errors[-1]), True


def error_series_from_model(model: EigenModel, X_hat: np.ndarray, n_max: int | None = None) -> np.ndarray:
    X_hat = np.ascontiguousarray(X_hat, dtype=float)
    top = model.rank if n_max is None else min(n_max, model.rank)
    V = np.ascontiguousarray(model.eigenvectors[:, :top])
    P = np.ascontiguousarray(X_hat @ V)
    return kernels.l1_residual_series(X_hat, P, V, top)


def error_series(bm: BehaviourMatrix, n_max: int | None = None, model: EigenModel | None = None) -> ReconstructionErrorSeries:
    model = fit_eigenmodel(bm) if model is None else model
    errors = error_series_from_model(model, bm.X_hat, n_max)
    bumps = tuple(int(n) for n in np.nonzero(np.diff(errors) > MONOTONE_TOL)[0] + 1)
    return ReconstructionErrorSeries(bm.person_id, bm.S, errors, model.rank, bumps)


# --------------------------------------------------------------------------
# files


def write_eigenmodel(model: EigenModel, fh: IO[str], vectors_fh: IO[str] | None = None) -> None:
    json.dump(model.to_json(), fh, indent=2, sort_keys=True)
    fh.write("\n")
    if vectors_fh is not None:
        writer = csv.writer(vectors_fh, lineterminator="\n")
        writer.writerow([f"v{l + 1}" for l in range(model.rank)])
        for row in model.eigenvectors:
            writer.writerow([repr(float(v)) for v in row])


ERROR_SERIES_FIELDS = ("person_id", "S", "n", "error")


def write_error_series(series, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ERROR_SERIES_FIELDS)
    for s in series:
        for n, err in enumerate(s.errors):
            writer.writerow([s.person_id, s.S, n, repr(float(err))])


def read_error_series(fh: IO[str]) -> list:
    """Inverse of :func:`write_error_series`.

    Files are expected to carry each series through its rank (the last row
    of a series is its vanishing point), so the rank is the last ``n``.
    """
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or list(reader.fieldnames) != list(ERROR_SERIES_FIELDS):
        raise DataError(f"error-series header must be {','.join(ERROR_SERIES_FIELDS)}")
    acc: dict = {}
    for row in reader:
        key = (row["person_id"], int(row["S"]))
        acc.setdefault(key, []).append((int(row["n"]), float(row["error"])))
    out = []
    for (pid, S), pairs in acc.items():
        pairs.sort()
        if [n for n, _ in pairs] != list(range(len(pairs))):
            raise DataError(f"error series for {pid}, S={S} is not contiguous from n=0")
        errs = np.array([e for _, e in pairs])
        bumps = tuple(int(n) for n in np.nonzero(np.diff(errs) > MONOTONE_TOL)[0] + 1)
        out.append(ReconstructionErrorSeries(pid, S, errs, len(errs) - 1, bumps))
    return out
