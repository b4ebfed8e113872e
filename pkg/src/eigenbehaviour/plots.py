"""Optional SVG renderings of the report curves (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _num(v) -> float:
    return float("nan") if v is None else float(v)


def render_all(report: dict, series: list, out_dir: Path) -> list:
    plt = _pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    grid = report["gridsearch"]
    S_best, n_best = grid["best"]["S"], grid["best"]["n"]

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for s in series:
        if s.S == S_best:
            ax.plot(range(len(s.errors)), s.errors, lw=0.8, alpha=0.6)
    ax.set_xlabel("eigenvectors used")
    ax.set_ylabel("normalized reconstruction error")
    ax.set_title(f"S = {S_best}")
    written.append(_save(fig, out_dir / "error_series.svg", plt))

    cells = grid["surface"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    row = sorted((c["n"], _num(c["rmsd"])) for c in cells if c["S"] == S_best)
    ax.plot([r[0] for r in row], [r[1] for r in row], "o-")
    ax.axhline(grid["baseline_rmsd"], ls="--", color="grey", label="age only")
    ax.set_xlabel("n-th reconstruction error")
    ax.set_ylabel("LOO RMSD")
    ax.legend()
    written.append(_save(fig, out_dir / "rmsd_vs_n.svg", plt))

    fig, ax = plt.subplots(figsize=(5, 3.5))
    col = sorted((c["S"], _num(c["rmsd"])) for c in cells if c["n"] == n_best)
    ax.plot([24 * 60 / S for S, _ in col], [r for _, r in col], "o-")
    ax.set_xlabel("window length (min)")
    ax.set_ylabel("LOO RMSD")
    written.append(_save(fig, out_dir / "rmsd_vs_window.svg", plt))

    preds = report["regression"]["predictions"]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.scatter([p["y"] for p in preds], [p["y_hat"] for p in preds], s=12)
    ax.plot([0, 30], [0, 30], color="k", lw=0.8)
    ax.set_xlabel("true score")
    ax.set_ylabel("predicted score")
    written.append(_save(fig, out_dir / "regression.svg", plt))

    if "classification" in report:
        cls = report["classification"]
        fig, ax = plt.subplots(figsize=(4, 4))
        for f in cls["folds"]:
            ax.plot(f["fpr"], f["tpr"], color="grey", lw=0.4, alpha=0.5)
        m = cls["mean_roc"]
        lo = [t - s for t, s in zip(m["tpr"], m["tpr_std"])]
        hi = [t + s for t, s in zip(m["tpr"], m["tpr_std"])]
        ax.fill_between(m["fpr"], lo, hi, color="violet", alpha=0.2)
        ax.plot(m["fpr"], m["tpr"], color="darkviolet", label=f"mean ROC, AUC = {cls['mean_auc']:.2f}")
        ax.plot([0, 1], [0, 1], ls=":", color="k")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.legend(loc="lower right")
        written.append(_save(fig, out_dir / "roc.svg", plt))
    return written


def _save(fig, path: Path, plt) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
