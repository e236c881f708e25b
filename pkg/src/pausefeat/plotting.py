"""PNG figures for the report verb, drawn from the report CSVs."""

from __future__ import annotations

import csv
import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _rows(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))


def _float(v: str) -> float:
    return float(v) if v else float("nan")


def _png(fig, description: str) -> bytes:
    buf = io.BytesIO()
    # no software or timestamp chunks, so identical inputs give identical bytes
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None, "Description": description})
    plt.close(fig)
    return buf.getvalue()


def accuracy_bars(names: list[str], means: list[float], stds: list[float], title: str, description: str) -> bytes:
    fig, ax = plt.subplots(figsize=(7, 3.6))
    x = range(len(names))
    ax.bar(x, [100 * m for m in means], yerr=[100 * s for s in stds], capsize=4, color="0.6", edgecolor="0.2")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=25, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.axhline(50, color="0.4", lw=0.6, ls="--")
    ax.set_title(title)
    fig.tight_layout()
    return _png(fig, description)


def significance_bars(rows: list[dict[str, str]], description: str) -> bytes:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    labels = [r["distance"] for r in rows]
    width = 0.38
    x = range(len(rows))
    ax.bar([i - width / 2 for i in x], [int(r["token_level"]) for r in rows], width, label="token-level",
           color="0.35")
    ax.bar([i + width / 2 for i in x], [int(r["transcript_level"]) for r in rows], width, label="transcript-level",
           color="0.75", edgecolor="0.2")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylabel("features with p < 0.05")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _png(fig, description)


def render_report(tables: dict[str, str], description: str) -> dict[str, bytes]:
    """Figure name -> PNG bytes for whatever report tables are present."""
    out = {}
    if "accuracy_plot.csv" in tables:
        rows = _rows(tables["accuracy_plot.csv"])
        out["transcript_accuracy.png"] = accuracy_bars(
            [r["feature_set"] for r in rows], [_float(r["acc_mean"]) for r in rows],
            [_float(r["acc_std"]) for r in rows], "Transcript classification", description)
    if "table3.csv" in tables:
        rows = [r for r in _rows(tables["table3.csv"]) if r["acc_mean"]]
        out["subsequence_accuracy.png"] = accuracy_bars(
            [r["model"] for r in rows], [_float(r["acc_mean"]) for r in rows],
            [_float(r["acc_std"]) for r in rows], "Subsequence classification", description)
    if "table4.csv" in tables:
        out["significance.png"] = significance_bars(_rows(tables["table4.csv"]), description)
    return out
