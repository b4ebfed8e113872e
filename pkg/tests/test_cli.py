import csv
import json

import pytest

from eigenbehaviour import cli, synth


@pytest.fixture
def gen_file(tmp_path):
    path = tmp_path / "gen.json"
    path.write_text(json.dumps(synth.CohortConfig(days_mean=15, days_sd=1).to_json()))
    return path


def run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def test_simulate_then_gridsearch(tmp_path, gen_file):
    out = tmp_path / "run"
    assert run("simulate", "--out", out, "--size", 8, "--generator", gen_file, "--seed", 3) == 0
    for name in ("events.csv", "cohort.csv", "generator.json"):
        assert (out / name).exists()
    assert run("gridsearch", "--out", out) == 0
    with open(out / "gridsearch_surface.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 50
    assert {int(r["S"]) for r in rows} == {24, 48, 96, 144, 288}
    assert {int(r["n"]) for r in rows} == set(range(1, 11))
    best = json.loads((out / "gridsearch.json").read_text())["best"]
    assert best["rmsd"] == min(float(r["rmsd"]) for r in rows)
    assert len(list((out / "timelines").glob("*.jsonl"))) == 8
    assert (out / "error_series.csv").exists() and any((out / "matrices").iterdir())


def test_predict_and_classify_fixed_cell(tmp_path, gen_file):
    out = tmp_path / "run"
    assert run("simulate", "--out", out, "--size", 12, "--generator", gen_file) == 0
    assert run("predict", "--out", out, "--s-set", "24", "--S", 24, "--n", 3) == 0
    rep = json.loads((out / "regression.json").read_text())["regression"]
    assert rep["S"] == 24 and rep["n"] == 3 and len(rep["predictions"]) == 12
    assert rep["rmsd"] == pytest.approx(rep["mse"] ** 0.5)
    assert run("classify", "--out", out, "--s-set", "24", "--S", 24, "--n", 3, "--repeats", 4, "--threshold", 27) == 0
    cls_rep = json.loads((out / "classification.json").read_text())
    assert len(cls_rep["folds"]) == 4 and 0 <= cls_rep["mean_auc"] <= 1
    assert (out / "roc.csv").exists() and (out / "regression_scatter.csv").exists()


def test_predict_on_two_person_cohort(tmp_path, gen_file, capsys):
    out = tmp_path / "run"
    assert run("simulate", "--out", out, "--size", 4, "--generator", gen_file) == 0
    rows = (out / "cohort.csv").read_text().splitlines()[:3]
    small = tmp_path / "two.csv"
    small.write_text("\n".join(rows) + "\n")
    assert run("predict", "--out", out, "--cohort", small, "--s-set", "24", "--S", 24, "--n", 3) == 2
    assert "at least 3" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        ["gridsearch", "--s-set", "7"],
        ["gridsearch", "--s-set", "x"],
        ["predict", "--S", "24"],
        ["predict", "--events", "/no/such/file.csv"],
        ["gridsearch", "--n-max", "0"],
    ],
)
def test_usage_errors(argv, tmp_path):
    assert run(*argv, "--out", tmp_path) == 1


def test_config_file(tmp_path, gen_file):
    cfg = tmp_path / "run.json"
    out = tmp_path / "run"
    cfg.write_text(json.dumps({"out": str(out), "size": 6, "generator": str(gen_file), "S_set": [24], "n_max": 4}))
    assert run("gridsearch", "--config", cfg) == 0
    surface = json.loads((out / "gridsearch.json").read_text())["surface"]
    assert [(c["S"], c["n"]) for c in surface] == [(24, n) for n in range(1, 5)]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"outt": "x"}))
    assert run("gridsearch", "--config", bad) == 1


def test_report_is_deterministic(tmp_path, gen_file):
    texts = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert run("report", "--out", out, "--size", 16, "--generator", gen_file, "--s-set", "24,48", "--n-max", 4,
                   "--repeats", 3, "--threshold", 26, "--seed", 5) == 0
        texts.append((out / "report.json").read_bytes())
    assert texts[0] == texts[1]
    report = json.loads(texts[0])
    assert {"gridsearch", "regression", "baseline", "partial_correlations", "classification"} <= set(report)


def test_missing_inputs_are_data_errors(tmp_path):
    (tmp_path / "cohort.csv").write_text("person_id,age,score\n")
    assert run("ingest", "--out", tmp_path) == 2


def test_bad_event_header(tmp_path):
    ev = tmp_path / "ev.csv"
    ev.write_text("a,b,c\n1,2,3\n")
    assert run("ingest", "--out", tmp_path / "o", "--events", ev) == 2


def test_report_svg(tmp_path, gen_file):
    pytest.importorskip("matplotlib")
    out = tmp_path / "run"
    assert run("report", "--out", out, "--size", 16, "--generator", gen_file, "--s-set", "24", "--n-max", 3,
               "--repeats", 2, "--svg") == 0
    names = {p.name for p in (out / "figures").glob("*.svg")}
    assert {"error_series.svg", "rmsd_vs_n.svg", "regression.svg", "roc.svg"} <= names
