"""Command-line front end.

Every stage reads and writes files under ``--out`` so it can be run and
checked on its own. A stage whose inputs are missing runs the stages before
it. Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import eigen, ingest, matrix, models, pipeline, synth
from .errors import DataError, NumericalError
from .matrix import SUPPORTED_S

log = logging.getLogger("eigenbehaviour")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    out: str = "out"
    events: str | None = None  # defaults to <out>/events.csv
    room_map: str | None = None
    cohort: str | None = None  # defaults to <out>/cohort.csv
    generator: str | None = None  # CohortConfig JSON for `simulate`
    S_set: tuple = SUPPORTED_S
    n_max: int = 10
    S: int | None = None  # fixed cell for predict/classify; grid-searched when unset
    n: int | None = None
    threshold: int = models.DEFAULT_THRESHOLD
    repeats: int = 20
    seed: int = 0
    size: int = 48
    timezone: str = "UTC"
    quiet_period: float = ingest.DEFAULT_QUIET_PERIOD
    min_coverage: float = 0.0
    svg: bool = False

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "S_set" in raw:
            raw["S_set"] = tuple(raw["S_set"])
        return cls(**raw)

    def validate(self) -> None:
        if not self.S_set:
            raise UsageError("S_set must not be empty")
        try:
            for S in self.S_set:
                matrix.Segmentation(S)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.n_max < 1:
            raise UsageError("n_max must be >= 1")
        if self.repeats < 1:
            raise UsageError("repeats must be >= 1")
        if (self.S is None) != (self.n is None):
            raise UsageError("S and n must be given together")
        for name in ("events", "room_map", "cohort", "generator"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise UsageError(f"{name} path {value} does not exist")

    # -- paths
    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def events_path(self) -> Path:
        return Path(self.events) if self.events else self.out_dir / "events.csv"

    @property
    def cohort_path(self) -> Path:
        return Path(self.cohort) if self.cohort else self.out_dir / "cohort.csv"

    @property
    def n_set(self) -> tuple:
        return tuple(range(1, self.n_max + 1))


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fresh(cfg: RunConfig) -> bool:
    """No inputs given or on disk: downstream commands start from a simulated corpus."""
    return cfg.events is None and cfg.cohort is None and not cfg.events_path.exists() and not cfg.cohort_path.exists()


def _require(path: Path, what: str) -> None:
    if not path.exists():
        raise DataError(f"{what} not found at {path}")


# --------------------------------------------------------------------------
# stages


def cmd_simulate(cfg: RunConfig) -> None:
    """Write a synthetic event log, cohort table and generator config."""
    gen = synth.load_cohort_config(cfg.generator) if cfg.generator else synth.CohortConfig()
    cohort = synth.generate_cohort(cfg.size, cfg.seed, gen)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "events.csv", "w", encoding="utf-8", newline="") as fh:
        ingest.write_event_log(cohort.events, fh)
    with open(out / "cohort.csv", "w", encoding="utf-8", newline="") as fh:
        models.write_cohort_csv(cohort.rows, fh)
    _dump_json({"size": cfg.size, "seed": cfg.seed, "config": gen.to_json()}, out / "generator.json")
    log.info("simulated %d persons, %d events", len(cohort.persons), len(cohort.events))


def cmd_ingest(cfg: RunConfig) -> dict:
    """Parse the event log into per-person day timelines."""
    if _fresh(cfg):
        cmd_simulate(cfg)
    _require(cfg.events_path, "event log")
    room_map = ingest.load_room_map(cfg.room_map) if cfg.room_map else None
    parsed = ingest.read_event_log(cfg.events_path, room_map)
    days = ingest.build_day_timelines(parsed.events, cfg.timezone, cfg.quiet_period)
    days = ingest.filter_days(days, cfg.min_coverage)
    store = cfg.out_dir / "timelines"
    store.mkdir(parents=True, exist_ok=True)
    for old in store.glob("*.jsonl"):
        old.unlink()
    by_person: dict = {}
    for d in days:
        by_person.setdefault(d.person_id, []).append(d)
    for pid, person_days in sorted(by_person.items()):
        with open(store / f"{pid}.jsonl", "w", encoding="utf-8") as fh:
            ingest.write_timelines(person_days, fh)
    log.info("ingested %d events into %d days for %d persons (%d malformed rows)",
             len(parsed.events), len(days), len(by_person), parsed.malformed)
    return by_person


def _load_timelines(cfg: RunConfig) -> dict:
    store = cfg.out_dir / "timelines"
    if not store.exists() or not any(store.glob("*.jsonl")):
        return cmd_ingest(cfg)
    out = {}
    for path in sorted(store.glob("*.jsonl")):
        with open(path, encoding="utf-8") as fh:
            days = ingest.read_timelines(fh)
        if days:
            out[days[0].person_id] = days
    return out


def cmd_matrix(cfg: RunConfig) -> dict:
    """Build location matrices for every person and S."""
    timelines = _load_timelines(cfg)
    store = cfg.out_dir / "matrices"
    store.mkdir(parents=True, exist_ok=True)
    for old in store.glob("*.csv"):
        old.unlink()
    result = {}
    for pid, days in sorted(timelines.items()):
        if len(days) < 2:
            log.warning("skipping %s: only %d retained days", pid, len(days))
            continue
        for S in cfg.S_set:
            bm = matrix.build_behaviour_matrix(days, S)
            with open(store / f"{pid}_S{S}.csv", "w", encoding="utf-8", newline="") as fh:
                matrix.write_matrix_csv(bm, fh)
            result[(pid, S)] = bm
    return result


def _load_matrices(cfg: RunConfig) -> dict:
    store = cfg.out_dir / "matrices"
    wanted = set(cfg.S_set)
    files = sorted(store.glob("*_S*.csv")) if store.exists() else []
    if not files or not wanted <= {int(p.stem.rsplit("_S", 1)[1]) for p in files}:
        return cmd_matrix(cfg)
    out = {}
    for path in files:
        pid, S = path.stem.rsplit("_S", 1)
        if int(S) not in wanted:
            continue
        with open(path, encoding="utf-8") as fh:
            out[(pid, int(S))] = matrix.read_matrix_csv(fh, pid)
    return out


def cmd_eigen(cfg: RunConfig) -> list:
    """Fit eigenbehaviours and write reconstruction-error series."""
    matrices = _load_matrices(cfg)
    store = cfg.out_dir / "eigen"
    store.mkdir(parents=True, exist_ok=True)
    series = []
    for (pid, S), bm in sorted(matrices.items()):
        model = eigen.fit_eigenmodel(bm)
        with open(store / f"{pid}_S{S}.json", "w", encoding="utf-8") as fh, \
                open(store / f"{pid}_S{S}_vectors.csv", "w", encoding="utf-8", newline="") as vfh:
            eigen.write_eigenmodel(model, fh, vfh)
        s = eigen.error_series(bm, model=model)
        if s.violations:
            log.info("%s S=%d: L1 error rises at n=%s", pid, S, list(s.violations))
        series.append(s)
    with open(cfg.out_dir / "error_series.csv", "w", encoding="utf-8", newline="") as fh:
        eigen.write_error_series(series, fh)
    return series


def _load_series(cfg: RunConfig) -> list:
    path = cfg.out_dir / "error_series.csv"
    if not path.exists():
        return cmd_eigen(cfg)
    with open(path, encoding="utf-8") as fh:
        series = eigen.read_error_series(fh)
    if not set(cfg.S_set) <= {s.S for s in series}:
        return cmd_eigen(cfg)
    return [s for s in series if s.S in set(cfg.S_set)]


def _cohort(cfg: RunConfig, series: list | None = None) -> models.CohortTable:
    if _fresh(cfg):
        cmd_simulate(cfg)
    _require(cfg.cohort_path, "cohort table")
    with open(cfg.cohort_path, encoding="utf-8") as fh:
        rows = models.read_cohort_csv(fh)
    series = _load_series(cfg) if series is None else series
    table = models.CohortTable.from_series(rows, series, cfg.n_set)
    if len(table) < 3:
        raise DataError(f"cohort has {len(table)} persons with data; at least 3 are required")
    return table


def _cell(cfg: RunConfig, cohort: models.CohortTable) -> tuple:
    if cfg.S is not None:
        return cfg.S, cfg.n
    return models.grid_search(cohort, cfg.S_set, cfg.n_set).best


def cmd_gridsearch(cfg: RunConfig) -> models.GridSearchResult:
    """LOO RMSD over every (S, n); write the surface and the optimum."""
    cohort = _cohort(cfg)
    result = models.grid_search(cohort, cfg.S_set, cfg.n_set)
    _dump_json(result.to_json(), cfg.out_dir / "gridsearch.json")
    with open(cfg.out_dir / "gridsearch_surface.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["S", "n", "rmsd"])
        for (S, n), v in sorted(result.surface.items()):
            w.writerow([S, n, repr(v)])
    print(f"best S={result.best[0]} n={result.best[1]} RMSD={result.best_rmsd:.4f} (age-only {result.baseline_rmsd:.4f})")
    return result


def cmd_predict(cfg: RunConfig) -> models.RegressionReport:
    """LOO linear regression of the score on error and age."""
    cohort = _cohort(cfg)
    S, n = _cell(cfg, cohort)
    report = models.loo_rmsd(cohort, S, n)
    baseline = models.loo_rmsd(cohort, use_reconstruction=False)
    _dump_json({"regression": report.to_json(), "baseline": baseline.to_json()}, cfg.out_dir / "regression.json")
    with open(cfg.out_dir / "regression_scatter.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["person_id", "y", "y_hat"])
        for pid, y, yh in zip(report.person_ids, report.y_true, report.y_pred):
            w.writerow([pid, repr(float(y)), repr(float(yh))])
    print(f"S={S} n={n} LOO RMSD={report.rmsd:.4f} R2={report.r_squared:.3f} (age-only {baseline.rmsd:.4f})")
    return report


def cmd_classify(cfg: RunConfig) -> models.ClassificationReport:
    """SVM classification at the score cutoff with mean ROC/AUC."""
    cohort = _cohort(cfg)
    S, n = _cell(cfg, cohort)
    report = models.classify_cohort(cohort, S, n, threshold=cfg.threshold, repeats=cfg.repeats, seed=cfg.seed)
    _dump_json(report.to_json(), cfg.out_dir / "classification.json")
    with open(cfg.out_dir / "roc.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "mean_tpr", "std_tpr"])
        for f, t, s in zip(report.mean_fpr, report.mean_tpr, report.std_tpr):
            w.writerow([repr(float(f)), repr(float(t)), repr(float(s))])
    print(f"S={S} n={n} mean AUC={report.mean_auc:.3f} (folds {report.fold_auc_mean:.3f} +/- {report.fold_auc_std:.3f})")
    return report


def cmd_report(cfg: RunConfig) -> dict:
    """Full analysis into report.json (optionally SVG figures)."""
    series = _load_series(cfg)
    cohort = _cohort(cfg, series)
    report = pipeline.analyse(cohort, cfg.S_set, cfg.n_set, cfg.threshold, cfg.repeats, cfg.seed)
    _dump_json(report, cfg.out_dir / "report.json")
    if cfg.svg:
        from . import plots

        plots.render_all(report, series, cfg.out_dir / "figures")
    g = report["gridsearch"]
    print(f"best S={g['best']['S']} n={g['best']['n']} RMSD={g['best']['rmsd']:.4f}; "
          f"mean AUC={report['classification']['mean_auc']:.3f}")
    return report


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "matrix": cmd_matrix,
    "eigen": cmd_eigen,
    "gridsearch": cmd_gridsearch,
    "predict": cmd_predict,
    "classify": cmd_classify,
    "report": cmd_report,
}


# --------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--s-set", dest="S_set", type=_int_list, help="comma-separated segmentations, e.g. 24,48")
    common.add_argument("--n-max", dest="n_max", type=int)
    common.add_argument("--threshold", type=int)
    common.add_argument("--repeats", type=int)
    common.add_argument("--events", help="event log (CSV or JSONL)")
    common.add_argument("--room-map", dest="room_map")
    common.add_argument("--cohort", help="cohort CSV (person_id,age,score)")
    common.add_argument("--generator", help="synthetic cohort config JSON")
    common.add_argument("--size", type=int, help="synthetic cohort size")
    common.add_argument("--tz", dest="timezone")
    common.add_argument("--quiet-period", dest="quiet_period", type=float)
    common.add_argument("--min-coverage", dest="min_coverage", type=float)
    common.add_argument("--S", dest="S", type=int, help="fix the segmentation instead of grid-searching")
    common.add_argument("--n", dest="n", type=int, help="fix the reconstruction error index")
    common.add_argument("--svg", action="store_true", default=None, help="render SVG figures (report)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="eigenbehaviour", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
