"""Report rendering: delimited metric tables plus matplotlib figures.

Figures are written next to the delimited output when a figures directory
is requested; everything uses the Agg backend so it works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def write_tsv(path: str, header: list, rows: list):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(str(h) for h in header) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


def eval_report_tables(report: dict):
    header = ["task", "LP", "LR", "LF", "UP", "UR", "UF"]
    rows = []
    for task in sorted(report["tasks"]):
        m = report["tasks"][task]
        rows.append([task] + [m[k] for k in header[1:]])
    rows.append(["micro"] + [report["micro"][k] for k in header[1:]])
    return header, rows


def render_eval_figure(report: dict, path: str):
    tasks = sorted(report["tasks"])
    lf = [report["tasks"][t]["LF"] for t in tasks]
    uf = [report["tasks"][t]["UF"] for t in tasks]
    x = range(len(tasks))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([i - 0.18 for i in x], uf, width=0.36, label="UF")
    ax.bar([i + 0.18 for i in x], lf, width=0.36, label="LF")
    ax.axhline(report["micro"]["LF"], color="gray", ls="--", lw=1,
               label="micro LF")
    ax.set_xticks(list(x))
    ax.set_xticklabels(tasks)
    ax.set_ylabel("F1 (%)")
    ax.set_ylim(0, 105)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_similarity_figure(tasks: list, directed: dict, undirected: dict,
                             path: str):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, (title, mat) in zip(axes, [("undirected", undirected),
                                       ("directed", directed)]):
        vals = [[mat.get((a, b), float("nan")) for b in tasks] for a in tasks]
        im = ax.imshow(vals, vmin=0, vmax=100, cmap="viridis")
        ax.set_xticks(range(len(tasks)))
        ax.set_xticklabels(tasks)
        ax.set_yticks(range(len(tasks)))
        ax.set_yticklabels(tasks)
        ax.set_title(f"{title} unlabeled F1")
        for i, a in enumerate(tasks):
            for j, b in enumerate(tasks):
                if a != b:
                    ax.text(j, i, f"{mat[(a, b)]:.1f}", ha="center",
                            va="center", color="white", fontsize=9)
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_training_curves(rows: list, path: str):
    epochs = [r["epoch"] for r in rows]
    loss = [r["train_loss"] for r in rows]
    micro = [r["micro_lf"] for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(epochs, loss, "o-", color="tab:red", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:red")
    ax2 = ax1.twinx()
    ax2.plot(epochs, micro, "s-", color="tab:blue", label="dev micro LF")
    ax2.set_ylabel("dev micro LF (%)", color="tab:blue")
    ax2.set_ylim(0, 105)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)
    return path
