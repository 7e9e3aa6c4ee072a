"""Ownership detector: build the binary classifier, verify suspects.

The detector is trained on generated samples only: n from the target
(physical-stealing positives), n from a substitute extracted from the
target (model-extraction positives), and 2n from an independently trained
generator (negatives). Verification of a suspect uses m of its samples and
nothing else; suspect weights are never read.
"""

from __future__ import annotations

import datetime
import hashlib
import json
from dataclasses import asdict, dataclass, replace as dataclasses_replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import ImageBatch, sample_prior
from .errors import CorruptArtifactError, PreconditionError, TrainingDivergedError
from .extraction import extract_model
from .gan import GeneratorModel, TrainConfig, _weights_hash, sample, train_gan
from .seeds import derive_seed


@dataclass
class Budgets:
    """Sample budgets: n_query latents for extraction, n per positive class."""

    n_query: int = 10_000
    n: int = 5_000

    def __post_init__(self):
        if self.n_query < 1 or self.n < 1:
            raise PreconditionError("budgets must be positive")


@dataclass
class ClassifierConfig:
    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.003
    momentum: float = 0.9
    weight_decay: float = 0.0
    feature_dim: int = 128
    holdout_fraction: float = 0.05
    fresh_check_per_class: int = 2_000
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise PreconditionError("epochs, batch_size, lr must be positive")
        if not 0.0 <= self.holdout_fraction < 0.5:
            raise PreconditionError("holdout_fraction must be in [0, 0.5)")

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


class _ResidualBlock(nn.Module):
    def __init__(self, cin, cout, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout)
            )
        else:
            self.shortcut = nn.Identity()
        self.act = nn.ReLU()

    def forward(self, x):
        h = self.act(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return self.act(h + self.shortcut(x))


class DetectorNet(nn.Module):
    """Small residual conv net; penultimate layer is the pooled feature map."""

    def __init__(self, channels=3, feature_dim=128):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(channels, 32, 3, 2, 1, bias=False), nn.BatchNorm2d(32), nn.ReLU()
        )
        self.block1 = _ResidualBlock(32, 64, 2)
        self.block2 = _ResidualBlock(64, feature_dim, 2)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(feature_dim, 1)

    def features(self, x):
        h = self.block2(self.block1(self.stem(x)))
        return self.pool(h).flatten(1)

    def forward(self, x):
        return self.head(self.features(x)).squeeze(1)


@dataclass
class ProtectionClassifier:
    """Trained detector plus its training manifest."""

    net: DetectorNet
    resolution: int
    channels: int
    feature_dim: int
    manifest: dict

    def __post_init__(self):
        self.net.eval()

    def manifest_hash(self) -> str:
        payload = json.dumps(self.manifest, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def check_input(self, samples: ImageBatch):
        if samples.resolution != self.resolution or samples.channels != self.channels:
            raise PreconditionError(
                f"samples are {samples.resolution}px/{samples.channels}ch, classifier expects "
                f"{self.resolution}px/{self.channels}ch (resize explicitly if intended)"
            )


@dataclass
class VerificationReport:
    """Outcome of verifying one suspect from its samples alone."""

    suspect_ref: str
    m: int
    predictions: list[int]
    confidence_score: float
    tau: float
    decision: int
    classifier_manifest_hash: str
    timestamp: str = ""

    def __post_init__(self):
        if self.timestamp == "":
            self.timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "VerificationReport":
        return VerificationReport(**json.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _train_detector(x_pos, x_neg, config: ClassifierConfig):
    torch.manual_seed(config.seed)
    channels = x_pos.shape[3]
    net = DetectorNet(channels=channels, feature_dim=config.feature_dim)
    opt = torch.optim.SGD(net.parameters(), lr=config.lr, momentum=config.momentum,
                          weight_decay=config.weight_decay)
    bce = nn.BCEWithLogitsLoss()

    x = np.concatenate([x_pos, x_neg])
    y = np.concatenate([np.ones(len(x_pos)), np.zeros(len(x_neg))]).astype(np.float32)
    rng = np.random.default_rng(derive_seed(config.seed, "clf-shuffle"))
    holdout = int(round(len(x) * config.holdout_fraction))
    perm = rng.permutation(len(x))
    val_idx, train_idx = perm[:holdout], perm[holdout:]

    xt = torch.from_numpy(x).permute(0, 3, 1, 2).contiguous()
    yt = torch.from_numpy(y)
    bs = config.batch_size
    net.train()
    for _ in range(config.epochs):
        order = rng.permutation(len(train_idx))
        for i in range(0, len(order) - bs + 1, bs):
            idx = train_idx[order[i:i + bs]]
            opt.zero_grad()
            loss = bce(net(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
            if not torch.isfinite(loss):
                raise TrainingDivergedError("non-finite classifier loss")
    net.eval()

    val_acc = None
    if holdout:
        with torch.no_grad():
            logits = net(xt[val_idx])
        val_acc = float(((logits > 0).float() == yt[val_idx]).float().mean())
    return net, val_acc


def build_protection(
    target: GeneratorModel,
    independent_data: ImageBatch,
    budgets: Budgets,
    clf_config: ClassifierConfig,
    gan_config: TrainConfig,
    substitute: GeneratorModel | None = None,
    independent_model: GeneratorModel | None = None,
) -> ProtectionClassifier:
    """Assemble training samples per the deployment recipe and fit the detector.

    Internally extracts a substitute from the target and trains an
    independent generator on ``independent_data`` (both can be injected,
    e.g. from a cache). Class balance is exact: n + n positives vs 2n
    negatives.
    """
    n, n_query = budgets.n, budgets.n_query
    seed = clf_config.seed

    if substitute is None:
        try:
            sub_config = dataclasses_replace(gan_config, seed=derive_seed(gan_config.seed, "deploy-substitute"))
            substitute = extract_model(target, n_query, target.arch_id, sub_config)
        except TrainingDivergedError as exc:
            exc.stage = "substitute-extraction"
            raise
    if independent_model is None:
        try:
            ind_config = dataclasses_replace(gan_config, seed=derive_seed(gan_config.seed, "deploy-independent"))
            independent_model, _ = train_gan(
                independent_data, target.arch_id, ind_config,
                role="independent", tag="independent",
            )
        except TrainingDivergedError as exc:
            exc.stage = "independent-training"
            raise

    dim = target.latent_dim
    x_pos_target = sample(target, sample_prior(n, dim, derive_seed(seed, "clf-pos-target")))
    x_pos_sub = sample(substitute, sample_prior(n, dim, derive_seed(seed, "clf-pos-sub")))
    x_neg = sample(independent_model, sample_prior(2 * n, dim, derive_seed(seed, "clf-neg")))

    x_pos = np.concatenate([x_pos_target.pixels, x_pos_sub.pixels])
    try:
        net, val_acc = _train_detector(x_pos, x_neg.pixels, clf_config)
    except TrainingDivergedError as exc:
        exc.stage = "classifier-training"
        raise

    clf = ProtectionClassifier(
        net=net, resolution=target.resolution, channels=target.channels,
        feature_dim=clf_config.feature_dim,
        manifest={
            "n_pos_target": n, "n_pos_sub": n, "n_neg": 2 * n,
            "n_query": n_query,
            "seeds": {"classifier": seed, "gan": gan_config.seed},
            "source_models": {
                "target": target.model_id,
                "substitute": substitute.model_id,
                "independent": independent_model.model_id,
            },
            "train_epochs": clf_config.epochs,
            "optimizer": {"kind": "sgd", "lr": clf_config.lr,
                          "momentum": clf_config.momentum,
                          "weight_decay": clf_config.weight_decay,
                          "batch_size": clf_config.batch_size},
            "classifier_config_hash": clf_config.config_hash(),
            "holdout_accuracy": val_acc,
        },
    )

    # build-acceptance check on fresh samples, never seen in training
    k = clf_config.fresh_check_per_class
    if k:
        fresh_pos = np.concatenate([
            sample(target, sample_prior(k // 2, dim, derive_seed(seed, "fresh-pos-target"))).pixels,
            sample(substitute, sample_prior(k - k // 2, dim, derive_seed(seed, "fresh-pos-sub"))).pixels,
        ])
        fresh_neg = sample(independent_model,
                           sample_prior(k, dim, derive_seed(seed, "fresh-neg"))).pixels
        pos_bits = _predict_pixels(clf, fresh_pos)
        neg_bits = _predict_pixels(clf, fresh_neg)
        clf.manifest["fresh_sample_accuracy"] = float(
            (pos_bits.mean() + (1.0 - neg_bits.mean())) / 2.0
        )
    return clf


# ---------------------------------------------------------------------------
# Prediction and verification
# ---------------------------------------------------------------------------

@torch.no_grad()
def _predict_pixels(clf: ProtectionClassifier, pixels: np.ndarray, batch_size=512) -> np.ndarray:
    clf.net.eval()
    xt = torch.from_numpy(pixels).permute(0, 3, 1, 2)
    bits = []
    for i in range(0, len(pixels), batch_size):
        bits.append((clf.net(xt[i:i + batch_size]) > 0).numpy())
    return np.concatenate(bits).astype(np.int64)


def predict_batch(clf: ProtectionClassifier, samples: ImageBatch) -> np.ndarray:
    """One bit per sample: 1 = looks like the target lineage."""
    clf.check_input(samples)
    return _predict_pixels(clf, samples.pixels)


def confidence_score(pred) -> float:
    """Fraction of positive bits; exact rational count/m."""
    pred = np.asarray(pred)
    if pred.size == 0:
        raise PreconditionError("prediction vector must be non-empty")
    return int(pred.sum()) / int(pred.size)


def perform_verification(
    clf: ProtectionClassifier, suspect_samples: ImageBatch, tau: float, m: int
) -> VerificationReport:
    """Decide ownership from the first m suspect samples; strict > on tau."""
    if not 0.0 < tau < 1.0:
        raise PreconditionError(f"tau must be in (0, 1), got {tau}")
    if suspect_samples.count < m:
        raise PreconditionError(
            f"need at least m={m} samples, got {suspect_samples.count}"
        )
    bits = predict_batch(clf, suspect_samples.take(m))
    conf = confidence_score(bits)
    return VerificationReport(
        suspect_ref=suspect_samples.provenance,
        m=m,
        predictions=[int(b) for b in bits],
        confidence_score=conf,
        tau=tau,
        decision=1 if conf > tau else 0,
        classifier_manifest_hash=clf.manifest_hash(),
    )


@torch.no_grad()
def penultimate_features(clf: ProtectionClassifier, samples: ImageBatch,
                         batch_size: int = 512) -> np.ndarray:
    """Pooled penultimate-layer activations, one row per sample."""
    clf.check_input(samples)
    clf.net.eval()
    xt = torch.from_numpy(samples.pixels).permute(0, 3, 1, 2)
    rows = [clf.net.features(xt[i:i + batch_size]).numpy()
            for i in range(0, samples.count, batch_size)]
    return np.concatenate(rows)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_classifier(clf: ProtectionClassifier, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(clf.net.state_dict(), directory / "weights.pt")
    meta = {
        "resolution": clf.resolution, "channels": clf.channels,
        "feature_dim": clf.feature_dim, "manifest": clf.manifest,
        "content_hash": _weights_hash(clf.net.state_dict()),
    }
    (directory / "manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def load_classifier(directory) -> ProtectionClassifier:
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise CorruptArtifactError(f"missing classifier manifest at {path}")
    meta = json.loads(path.read_text())
    try:
        state = torch.load(directory / "weights.pt", weights_only=True)
    except Exception as exc:
        raise CorruptArtifactError(f"unreadable classifier weights: {exc}") from exc
    if _weights_hash(state) != meta["content_hash"]:
        raise CorruptArtifactError(f"classifier content hash mismatch at {directory}")
    net = DetectorNet(channels=meta["channels"], feature_dim=meta["feature_dim"])
    net.load_state_dict(state)
    return ProtectionClassifier(net=net, resolution=meta["resolution"],
                                channels=meta["channels"],
                                feature_dim=meta["feature_dim"], manifest=meta["manifest"])
