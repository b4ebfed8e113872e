"""Location matrices: days x (windows * locations) presence fractions."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from . import kernels
from .errors import DataError
from .ingest import DAY_SECONDS, LOCATIONS, DayTimeline

SUPPORTED_S = (24, 48, 96, 144, 288)
_LOC_INDEX = {loc: k for k, loc in enumerate(LOCATIONS)}


@dataclass(frozen=True)
class Segmentation:
    S: int

    def __post_init__(self):
        if isinstance(self.S, bool) or not isinstance(self.S, (int, np.integer)) or self.S <= 0:
            raise ValueError(f"S must be a positive integer, got {self.S!r}")
        if DAY_SECONDS % self.S:
            raise ValueError(f"S={self.S} does not divide {DAY_SECONDS}")

    @property
    def delta_t(self) -> float:
        return DAY_SECONDS / self.S


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BehaviourMatrix:
    """Location matrix of one person at one segmentation.

    Column ``k * S + n`` holds the fraction of window ``n`` spent in
    ``LOCATIONS[k]``. ``psi`` is the mean day and ``X_hat`` the deviation of
    every day from it.
    """

    person_id: str
    segmentation: Segmentation
    days: tuple
    X: np.ndarray
    psi: np.ndarray
    X_hat: np.ndarray

    locations = LOCATIONS

    @property
    def S(self) -> int:
        return self.segmentation.S

    @property
    def D(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def block(self, location: str) -> np.ndarray:
        k = _LOC_INDEX[location]
        return self.X[:, k * self.S:(k + 1) * self.S]


def mean_day(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("mean_day needs a non-empty 2-D matrix")
    return X.mean(axis=0)


def deviations(X: np.ndarray, psi: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("deviations needs a non-empty 2-D matrix")
    return X - np.asarray(psi, dtype=float)[None, :]


def location_matrix(timelines: Sequence[DayTimeline], seg: Segmentation) -> np.ndarray:
    """Presence fractions only, no validation of person or day count."""
    day_idx, starts, ends, locs = [], [], [], []
    for d, tl in enumerate(timelines):
        for a, b, loc in tl.segments:
            day_idx.append(d)
            starts.append(a)
            ends.append(b)
            locs.append(_LOC_INDEX[loc])
    return kernels.window_occupancy(
        np.asarray(day_idx, dtype=np.int64),
        np.asarray(starts, dtype=float),
        np.asarray(ends, dtype=float),
        np.asarray(locs, dtype=np.int64),
        len(timelines),
        seg.S,
        len(LOCATIONS),
        seg.delta_t,
    )


def build_behaviour_matrix(timelines: Sequence[DayTimeline], seg: Segmentation | int) -> BehaviourMatrix:
    if not isinstance(seg, Segmentation):
        seg = Segmentation(seg)
    if len(timelines) < 2:
        raise DataError(f"need at least 2 days to build a behaviour matrix, got {len(timelines)}")
    people = {t.person_id for t in timelines}
    if len(people) != 1:
        raise DataError(f"timelines belong to several persons: {sorted(people)}")
    X = location_matrix(timelines, seg)
    psi = mean_day(X)
    return BehaviourMatrix(
        person_id=timelines[0].person_id,
        segmentation=seg,
        days=tuple(t.date for t in timelines),
        X=_frozen(X),
        psi=_frozen(psi),
        X_hat=_frozen(deviations(X, psi)),
    )


def from_location_matrix(person_id: str, S: int, days: Sequence, X: np.ndarray) -> BehaviourMatrix:
    seg = Segmentation(S)
    X = np.asarray(X, dtype=float)
    if X.shape[1] != S * len(LOCATIONS):
        raise DataError(f"expected {S * len(LOCATIONS)} columns, got {X.shape[1]}")
    if X.shape[0] < 2:
        raise DataError("need at least 2 days")
    psi = mean_day(X)
    return BehaviourMatrix(person_id, seg, tuple(days), _frozen(X), _frozen(psi), _frozen(deviations(X, psi)))


def column_names(S: int) -> list:
    return [f"loc{k + 1}_w{n}" for k in range(len(LOCATIONS)) for n in range(S)]


def write_matrix_csv(bm: BehaviourMatrix, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["date"] + column_names(bm.S))
    for day, row in zip(bm.days, bm.X):
        writer.writerow([day.isoformat()] + [repr(float(v)) for v in row])


def read_matrix_csv(fh: IO[str], person_id: str) -> BehaviourMatrix:
    reader = csv.reader(fh)
    header = next(reader)
    n_cols = len(header) - 1
    if n_cols % len(LOCATIONS):
        raise DataError(f"matrix has {n_cols} value columns, not a multiple of {len(LOCATIONS)}")
    S = n_cols // len(LOCATIONS)
    if header[1:] != column_names(S):
        raise DataError("matrix header does not follow the loc{k}_w{n} layout")
    days, rows = [], []
    for row in reader:
        days.append(dt.date.fromisoformat(row[0]))
        rows.append([float(v) for v in row[1:]])
    return from_location_matrix(person_id, S, days, np.array(rows))
