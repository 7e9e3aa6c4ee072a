"""Figure emission for experiment records.

Figures are views over numbers already persisted in the record; nothing is
stored only in a figure. The 2-D embedding used for the characteristics
scatter is pluggable: any callable mapping an (n, d) feature matrix to
(n, 2) coordinates works, with t-SNE as the default.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_GROUP_COLORS = {"PS": "tab:red", "ME": "tab:orange", "Ind": "tab:blue"}


def tsne_embed(features: np.ndarray, perplexity: float = 30.0, seed: int = 0) -> np.ndarray:
    from sklearn.manifold import TSNE
    perplexity = min(perplexity, (len(features) - 1) / 3.0)
    return TSNE(n_components=2, perplexity=perplexity, random_state=seed,
                init="pca").fit_transform(features)


def _bar_chart(confidences: dict, tau: float, title: str, path: Path):
    names = list(confidences)
    values = [confidences[n] for n in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(names)), 3.2))
    ax.bar(names, values, color="tab:purple")
    ax.axhline(tau, color="red", linestyle="--", label=f"tau = {tau}")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("confidence score")
    ax.set_title(title)
    ax.legend(loc="lower right")
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _line_chart(rows, x_key, title, path: Path, tau=None):
    x = [r[x_key] for r in rows]
    conf = [r["confidence"] for r in rows]
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.plot(x, conf, "o-", color="tab:purple", label="confidence")
    if tau is not None:
        ax.axhline(tau, color="red", linestyle="--", label=f"tau = {tau}")
    ax.set_xlabel(x_key)
    ax.set_ylabel("confidence score")
    ax.set_ylim(0, 1.05)
    fid_key = next((k for k in rows[0] if k.startswith("fid")), None)
    if fid_key:
        ax2 = ax.twinx()
        ax2.plot(x, [r[fid_key] for r in rows], "s-", color="tab:gray", label=fid_key)
        ax2.set_ylabel(fid_key)
    ax.set_title(title)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _scatter_chart(coords, labels, title, path: Path):
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    for group in dict.fromkeys(labels):
        mask = np.array([lab == group for lab in labels])
        ax.scatter(coords[mask, 0], coords[mask, 1], s=8,
                   color=_GROUP_COLORS.get(group, None), label=group, alpha=0.7)
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def emit_figures(record, embedder=None) -> list[Path]:
    """Produce the figure files for one experiment record."""
    out = Path(record.out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    tau = record.config["tau"]
    kind = record.kind
    paths = []
    manifest = {"kind": kind, "config_hash": record.config_hash}

    confidences = record.tables.get("confidences") or {
        name: rep.confidence_score for name, rep in record.reports.items()}
    if kind in ("verification", "obfuscation_sweep", "finetune",
                "cross_arch_extraction", "adaptive_II"):
        paths.append(_bar_chart(confidences, tau, f"{kind}: confidence per suspect",
                                out / "confidence_bars.png"))

    if kind == "generations":
        paths.append(_line_chart(record.tables["generations"], "generation",
                                 "extraction generations", out / "generation_decay.png",
                                 tau=tau))
    if kind == "adaptive_I":
        paths.append(_line_chart(record.tables["snapshots"], "step",
                                 "snapshot selection attack", out / "snapshot_curve.png",
                                 tau=tau))
    if kind == "sample_count_sweep":
        rows = record.tables["sweep"]
        fig, ax = plt.subplots(figsize=(4.8, 3.2))
        ax.errorbar([r["m"] for r in rows], [r["mean_confidence"] for r in rows],
                    yerr=[r["std_confidence"] for r in rows], fmt="o-", capsize=3,
                    color="tab:purple")
        ax.axhline(tau, color="red", linestyle="--")
        ax.set_xscale("log")
        ax.set_xlabel("samples m")
        ax.set_ylabel("confidence (mean +/- std over disjoint subsets)")
        fig.tight_layout()
        path = out / "sample_count_curve.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)

    features_file = Path(record.out_dir) / "features.npz"
    if kind == "verification" and features_file.exists():
        blob = np.load(features_file, allow_pickle=False)
        features, labels = blob["features"], [str(x) for x in blob["labels"]]
        perplexity = record.config.get("tsne_perplexity", 30.0)
        if embedder is None:
            coords = tsne_embed(features, perplexity=perplexity,
                                seed=record.config.get("seed", 0))
            manifest["embedding"] = {"method": "tsne", "perplexity": perplexity}
        else:
            coords = embedder(features)
            manifest["embedding"] = {"method": getattr(embedder, "__name__", "custom")}
        np.savez_compressed(Path(record.out_dir) / "embedding.npz",
                            coords=coords, labels=np.array(labels))
        from sklearn.metrics import silhouette_score
        stolen = np.array([0 if lab == "Ind" else 1 for lab in labels])
        manifest["silhouette_stolen_vs_ind"] = float(
            silhouette_score(coords, stolen))
        paths.append(_scatter_chart(coords, labels, "learned characteristics",
                                    out / "characteristics_scatter.png"))

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return paths
