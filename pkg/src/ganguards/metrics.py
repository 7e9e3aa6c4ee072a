"""Quantitative evaluation: FID, SSIM, and suspect-zoo accuracy tables.

FID values are relative to a named feature extractor; every result records
the extractor id so numbers are never compared across extractors. The
desk-scale extractor is a small conv net trained to classify the
procedural shape families; a training-free pixel-pooling extractor is also
provided for cheap, fully deterministic checks.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import ImageBatch, make_procedural_dataset, FAMILY_NAMES
from .errors import PreconditionError
from .obfuscation import gaussian_taps

log = logging.getLogger(__name__)

FID_SAMPLE_FLOOR = 500


@dataclass(frozen=True)
class FidResult:
    value: float
    feature_extractor_id: str
    count_a: int
    count_b: int


def _sqrt_trace_of_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """Tr((cov_a cov_b)^(1/2)) via the symmetric form A^(1/2) B A^(1/2).

    Eigenvalues slightly below zero (numerical noise) are clipped; anything
    below -1e-6 (scaled by the spectrum magnitude) is treated as failure.
    """
    vals_a, vecs_a = np.linalg.eigh(cov_a)
    tol = 1e-6 * max(1.0, float(np.abs(vals_a).max(initial=0.0)))
    if vals_a.min(initial=0.0) < -tol:
        raise PreconditionError(f"covariance not PSD: min eigenvalue {vals_a.min()}")
    root_a = (vecs_a * np.sqrt(np.clip(vals_a, 0.0, None))) @ vecs_a.T
    inner = root_a @ cov_b @ root_a
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigvalsh(inner)
    tol = 1e-6 * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -tol:
        raise PreconditionError(f"square-root failure: min eigenvalue {vals.min()}")
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def fid_from_features(feats_a: np.ndarray, feats_b: np.ndarray,
                      extractor_id: str = "raw-features") -> FidResult:
    """Frechet distance between Gaussian fits of two feature sets."""
    feats_a = np.atleast_2d(np.asarray(feats_a, dtype=np.float64))
    feats_b = np.atleast_2d(np.asarray(feats_b, dtype=np.float64))
    if feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise PreconditionError("need at least 2 samples per side")
    if not (np.isfinite(feats_a).all() and np.isfinite(feats_b).all()):
        raise PreconditionError("non-finite feature values")
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(feats_a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(feats_b, rowvar=False))
    value = float(
        np.sum((mu_a - mu_b) ** 2)
        + np.trace(cov_a) + np.trace(cov_b)
        - 2.0 * _sqrt_trace_of_product(cov_a, cov_b)
    )
    return FidResult(value=max(value, 0.0) if value > -1e-6 else value,
                     feature_extractor_id=extractor_id,
                     count_a=feats_a.shape[0], count_b=feats_b.shape[0])


def fid(set_a: ImageBatch, set_b: ImageBatch, extractor) -> FidResult:
    if set_a.count < 2 or set_b.count < 2:
        raise PreconditionError("need at least 2 images per side")
    if set_a.resolution != set_b.resolution or set_a.channels != set_b.channels:
        raise PreconditionError("image sets must share resolution and channels")
    if min(set_a.count, set_b.count) < FID_SAMPLE_FLOOR:
        warnings.warn(
            f"FID with fewer than {FID_SAMPLE_FLOOR} samples per side is "
            "unstable (covariance estimate)", stacklevel=2)
    result = fid_from_features(extractor(set_a), extractor(set_b),
                               extractor_id=extractor.extractor_id)
    return result


# ---------------------------------------------------------------------------
# Feature extractors
# ---------------------------------------------------------------------------

class PixelPoolExtractor:
    """Training-free features: average-pool to a coarse grid and flatten."""

    def __init__(self, pool_to: int = 8):
        self.pool_to = pool_to
        self.extractor_id = f"pixel-pool{pool_to}"

    def __call__(self, batch: ImageBatch) -> np.ndarray:
        n, h, w, c = batch.pixels.shape
        if h % self.pool_to != 0:
            raise PreconditionError(f"resolution {h} not divisible by {self.pool_to}")
        f = h // self.pool_to
        pooled = batch.pixels.reshape(n, self.pool_to, f, self.pool_to, f, c).mean(axis=(2, 4))
        return pooled.reshape(n, -1).astype(np.float64)


class _FamilyNet(nn.Module):
    def __init__(self, channels=3, feature_dim=64, n_classes=len(FAMILY_NAMES)):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, 16, 3, 2, 1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, 2, 1), nn.ReLU(),
            nn.Conv2d(32, feature_dim, 3, 2, 1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1), nn.Flatten(),
        )
        self.head = nn.Linear(feature_dim, n_classes)

    def forward(self, x):
        return self.head(self.body(x))


class TrainedFamilyExtractor:
    """Penultimate features of a classifier trained on shape-family labels."""

    def __init__(self, net: nn.Module, resolution: int, channels: int,
                 feature_dim: int, extractor_id: str):
        self.net = net
        self.net.eval()
        self.resolution = resolution
        self.channels = channels
        self.feature_dim = feature_dim
        self.extractor_id = extractor_id

    @torch.no_grad()
    def __call__(self, batch: ImageBatch) -> np.ndarray:
        if batch.resolution != self.resolution or batch.channels != self.channels:
            raise PreconditionError(
                f"extractor expects {self.resolution}px/{self.channels}ch images"
            )
        xt = torch.from_numpy(batch.pixels).permute(0, 3, 1, 2)
        rows = [self.net.body(xt[i:i + 512]).numpy() for i in range(0, batch.count, 512)]
        return np.concatenate(rows).astype(np.float64)


def save_fid_extractor(extractor: TrainedFamilyExtractor, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(extractor.net.state_dict(), directory / "weights.pt")
    (directory / "manifest.json").write_text(json.dumps({
        "resolution": extractor.resolution, "channels": extractor.channels,
        "feature_dim": extractor.feature_dim, "extractor_id": extractor.extractor_id,
    }, indent=2, sort_keys=True))
    return directory


def load_fid_extractor(directory) -> TrainedFamilyExtractor:
    directory = Path(directory)
    meta = json.loads((directory / "manifest.json").read_text())
    net = _FamilyNet(channels=meta["channels"], feature_dim=meta["feature_dim"])
    net.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
    return TrainedFamilyExtractor(net=net, resolution=meta["resolution"],
                                  channels=meta["channels"],
                                  feature_dim=meta["feature_dim"],
                                  extractor_id=meta["extractor_id"])


def train_fid_extractor(resolution: int = 32, channels: int = 3, seed: int = 0,
                        per_family: int = 600, epochs: int = 3,
                        feature_dim: int = 64) -> TrainedFamilyExtractor:
    """Fit the desk-scale FID feature extractor on procedural family labels."""
    batches, labels = [], []
    for idx, family in enumerate(FAMILY_NAMES):
        b = make_procedural_dataset(family, per_family, seed + idx, size=resolution,
                                    channels=channels)
        batches.append(b.pixels)
        labels.append(np.full(per_family, idx, dtype=np.int64))
    x = np.concatenate(batches)
    y = np.concatenate(labels)

    torch.manual_seed(seed)
    net = _FamilyNet(channels=channels, feature_dim=feature_dim)
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    ce = nn.CrossEntropyLoss()
    xt = torch.from_numpy(x).permute(0, 3, 1, 2).contiguous()
    yt = torch.from_numpy(y)
    rng = np.random.default_rng(seed)
    net.train()
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for i in range(0, len(order) - 63, 64):
            idx = order[i:i + 64]
            opt.zero_grad()
            loss = ce(net(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
    net.eval()
    with torch.no_grad():
        acc = float((net(xt).argmax(1) == yt).float().mean())
    log.info("fid extractor trained: family accuracy %.3f", acc)
    return TrainedFamilyExtractor(
        net=net, resolution=resolution, channels=channels, feature_dim=feature_dim,
        extractor_id=f"family-conv{feature_dim}-r{resolution}c{channels}-s{seed}",
    )


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SsimConfig:
    window_size: int = 7
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window_size % 2 != 1 or self.window_size < 3:
            raise PreconditionError("window_size must be odd and >= 3")


def _window_taps(config: SsimConfig) -> np.ndarray:
    r = config.window_size // 2
    k = np.exp(-np.arange(-r, r + 1, dtype=np.float64) ** 2
               / (2.0 * config.window_sigma ** 2))
    return k / k.sum()


def _local_mean(img, taps):
    r = len(taps) // 2
    h, w = img.shape
    out = np.pad(img, ((r, r), (0, 0)), mode="reflect")
    out = sum(out[i:i + h] * taps[i] for i in range(len(taps)))
    out = np.pad(out, ((0, 0), (r, r)), mode="reflect")
    out = sum(out[:, i:i + w] * taps[i] for i in range(len(taps)))
    return out


def ssim(a: np.ndarray, b: np.ndarray, config: SsimConfig = SsimConfig()) -> float:
    """Structural similarity between two images of equal shape, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise PreconditionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise PreconditionError("ssim expects a single (h, w) or (h, w, c) image")
    c1 = (config.k1 * config.data_range) ** 2
    c2 = (config.k2 * config.data_range) ** 2
    taps = _window_taps(config)
    values = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x, mu_y = _local_mean(x, taps), _local_mean(y, taps)
        var_x = _local_mean(x * x, taps) - mu_x * mu_x
        var_y = _local_mean(y * y, taps) - mu_y * mu_y
        cov = _local_mean(x * y, taps) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


def mean_ssim(batch_a: ImageBatch, batch_b: ImageBatch,
              config: SsimConfig = SsimConfig()) -> float:
    """Average SSIM over same-index image pairs (quality ledger helper)."""
    if batch_a.count != batch_b.count:
        raise PreconditionError("batches must have equal counts")
    return float(np.mean([
        ssim(batch_a.pixels[i], batch_b.pixels[i], config) for i in range(batch_a.count)
    ]))


# ---------------------------------------------------------------------------
# Suspect zoo summary
# ---------------------------------------------------------------------------

@dataclass
class ZooReport:
    rows: list[dict]
    accuracy: float

    def to_dict(self) -> dict:
        return {"rows": self.rows, "accuracy": self.accuracy}


def suspect_zoo_report(reports, truth, names=None) -> ZooReport:
    """Per-suspect correctness against ground truth plus aggregate accuracy."""
    reports = list(reports)
    truth = [int(t) for t in truth]
    if len(reports) != len(truth):
        raise PreconditionError("reports and truth labels must align")
    if names is None:
        names = [r.suspect_ref for r in reports]
    rows = []
    correct = 0
    for name, report, label in zip(names, reports, truth):
        ok = int(report.decision == label)
        correct += ok
        rows.append({
            "suspect": name,
            "suspect_ref": report.suspect_ref,
            "confidence": report.confidence_score,
            "decision": report.decision,
            "truth": label,
            "correct": bool(ok),
        })
    return ZooReport(rows=rows, accuracy=correct / len(reports))
