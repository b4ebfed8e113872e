"""Stage glue shared by the CLI and the acceptance suite."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from .eigen import error_series
from .matrix import SUPPORTED_S, build_behaviour_matrix
from .models import (
    DEFAULT_N_SET,
    DEFAULT_THRESHOLD,
    CohortTable,
    classify_cohort,
    grid_search,
    loo_rmsd,
    partial_correlation_table,
)


def person_series(timelines: Sequence, S_set: Iterable[int] = SUPPORTED_S) -> list:
    """Full error series (n = 0..rank) of one person at every S."""
    return [error_series(build_behaviour_matrix(timelines, S)) for S in S_set]


def cohort_table(
    demographics: Sequence[tuple],
    timelines: Mapping[str, Sequence],
    S_set: Iterable[int] = SUPPORTED_S,
    n_values: Iterable[int] = DEFAULT_N_SET,
) -> CohortTable:
    S_set = tuple(S_set)
    series = []
    for pid, _, _ in demographics:
        if pid in timelines:
            series.extend(person_series(timelines[pid], S_set))
    return CohortTable.from_series(demographics, series, n_values)


def analyse(
    cohort: CohortTable,
    S_set: Iterable[int] = SUPPORTED_S,
    n_set: Iterable[int] = DEFAULT_N_SET,
    threshold: int = DEFAULT_THRESHOLD,
    repeats: int = 20,
    seed: int = 0,
    classify: bool = True,
) -> dict:
    """Grid search, regression at the optimum, baseline, classification, partial correlations."""
    grid = grid_search(cohort, tuple(S_set), tuple(n_set))
    S, n = grid.best
    report = {
        "cohort_size": len(cohort),
        "gridsearch": grid.to_json(),
        "regression": loo_rmsd(cohort, S, n).to_json(),
        "baseline": loo_rmsd(cohort, use_reconstruction=False).to_json(),
        "partial_correlations": partial_correlation_table(cohort, S, n),
    }
    if classify:
        report["classification"] = classify_cohort(cohort, S, n, threshold=threshold, repeats=repeats, seed=seed).to_json()
    return report
