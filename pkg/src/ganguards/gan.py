"""Small generator/discriminator pairs: definition, training, sampling, I/O.

Three architectures (gan-a, gan-b, gan-c) differ in depth, width, and
normalization so cross-architecture extraction experiments are expressible.
Generators emit tanh-range pixels internally; ``sample`` rescales to the
canonical [0, 1] range at the module boundary.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import ImageBatch, LatentBatch
from .errors import CorruptArtifactError, PreconditionError, TrainingDivergedError
from .seeds import derive_seed

ARCH_IDS = ("gan-a", "gan-b", "gan-c")
DEFAULT_LATENT_DIM = 64

ROLES = ("target", "substitute", "independent", "suspect")


@dataclass(frozen=True)
class Lineage:
    """Where a generator came from: role, ancestry, and training provenance."""

    role: str
    train_seed: int
    train_data_ref: str
    parent_id: str | None = None
    generation_index: int = 0

    def __post_init__(self):
        if self.role not in ROLES:
            raise PreconditionError(f"unknown role {self.role!r}")
        if (self.generation_index == 0) != (self.parent_id is None):
            raise PreconditionError(
                "generation_index must be 0 exactly when parent_id is absent"
            )
        if self.generation_index < 0:
            raise PreconditionError("generation_index must be >= 0")


@dataclass
class TrainConfig:
    """Hyperparameters for one adversarial training run.

    ``steps == 0`` is allowed only so a zero-step fine-tune can be expressed;
    ``train_gan`` itself rejects it.
    """

    steps: int = 1200
    batch_size: int = 32
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    loss_kind: str = "nonsaturating"
    snapshot_every: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise PreconditionError("steps must be >= 0")
        if self.batch_size < 1 or self.lr_g <= 0 or self.lr_d <= 0 or self.snapshot_every < 1:
            raise PreconditionError("batch_size, learning rates, snapshot_every must be positive")
        if self.loss_kind not in ("nonsaturating", "hinge"):
            raise PreconditionError(f"unknown loss_kind {self.loss_kind!r}")
        if self.steps > 0 and self.steps % self.snapshot_every != 0:
            raise PreconditionError("snapshot_every must divide steps")

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------

def _stages_for(resolution: int) -> int:
    stages = int(math.log2(resolution / 4))
    if resolution != 4 * 2 ** stages or stages < 1 or resolution > 128:
        raise PreconditionError(f"resolution must be 4*2^k in [8, 128], got {resolution}")
    return stages


def _build_generator(arch_id, latent_dim, resolution, channels):
    stages = _stages_for(resolution)
    if arch_id == "gan-a":
        # transposed-conv DCGAN with batch norm
        base = 16
        widths = [base * 2 ** (stages - s) for s in range(stages + 1)]
        layers = [
            nn.Linear(latent_dim, widths[0] * 16),
            nn.Unflatten(1, (widths[0], 4, 4)),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(),
        ]
        for s in range(stages):
            layers += [nn.ConvTranspose2d(widths[s], widths[s + 1], 4, 2, 1)]
            if s < stages - 1:
                layers += [nn.BatchNorm2d(widths[s + 1]), nn.ReLU()]
        layers[-1:] = [nn.ConvTranspose2d(widths[-2], channels, 4, 2, 1)]
        layers += [nn.Tanh()]
        return nn.Sequential(*layers)
    if arch_id == "gan-b":
        # nearest-upsample + conv, group norm, wider
        base = 24
        widths = [base * 2 ** (stages - s) for s in range(stages + 1)]
        layers = [
            nn.Linear(latent_dim, widths[0] * 16),
            nn.Unflatten(1, (widths[0], 4, 4)),
            nn.GroupNorm(4, widths[0]),
            nn.LeakyReLU(0.2),
        ]
        for s in range(stages):
            out = channels if s == stages - 1 else widths[s + 1]
            layers += [nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(widths[s], out, 3, 1, 1)]
            if s < stages - 1:
                layers += [nn.GroupNorm(4, out), nn.LeakyReLU(0.2)]
        layers += [nn.Tanh()]
        return nn.Sequential(*layers)
    if arch_id == "gan-c":
        # deeper and narrower: two convs per scale, batch norm only mid-stack
        base = 12
        widths = [base * 2 ** (stages - s) for s in range(stages + 1)]
        layers = [
            nn.Linear(latent_dim, widths[0] * 16),
            nn.Unflatten(1, (widths[0], 4, 4)),
            nn.ReLU(),
        ]
        for s in range(stages):
            last = s == stages - 1
            layers += [
                nn.ConvTranspose2d(widths[s], widths[s + 1], 4, 2, 1),
                nn.BatchNorm2d(widths[s + 1]),
                nn.ReLU(),
                nn.Conv2d(widths[s + 1], channels if last else widths[s + 1], 3, 1, 1),
            ]
            if not last:
                layers += [nn.ReLU()]
        layers += [nn.Tanh()]
        return nn.Sequential(*layers)
    raise PreconditionError(f"unknown arch_id {arch_id!r}; known: {ARCH_IDS}")


def _build_discriminator(arch_id, resolution, channels):
    stages = _stages_for(resolution)
    base = {"gan-a": 16, "gan-b": 24, "gan-c": 12}[arch_id]
    widths = [base * 2 ** s for s in range(stages)]
    layers = [nn.Conv2d(channels, widths[0], 4, 2, 1), nn.LeakyReLU(0.2)]
    for s in range(1, stages):
        layers += [nn.Conv2d(widths[s - 1], widths[s], 4, 2, 1)]
        if arch_id == "gan-a":
            layers += [nn.BatchNorm2d(widths[s])]
        elif arch_id == "gan-b":
            layers += [nn.GroupNorm(4, widths[s])]
        layers += [nn.LeakyReLU(0.2)]
    layers += [nn.Flatten(), nn.Linear(widths[-1] * 16, 1)]
    return nn.Sequential(*layers)


def _weights_hash(state_dict) -> str:
    h = hashlib.sha256()
    for name in sorted(state_dict):
        t = state_dict[name].detach().cpu()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(np.array(t.shape, dtype=np.int64).tobytes())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


@dataclass
class GeneratorModel:
    """A trained generator plus the metadata needed to audit and cache it."""

    net: nn.Module
    arch_id: str
    latent_dim: int
    resolution: int
    channels: int
    lineage: Lineage
    tag: str = ""

    def __post_init__(self):
        self.net.eval()
        if not self.tag:
            self.tag = self.lineage.role

    @property
    def model_id(self) -> str:
        payload = json.dumps(
            {
                "arch_id": self.arch_id,
                "latent_dim": self.latent_dim,
                "resolution": self.resolution,
                "channels": self.channels,
                "lineage": asdict(self.lineage),
                "weights": _weights_hash(self.net.state_dict()),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def manifest(self) -> dict:
        return {
            "arch_id": self.arch_id,
            "latent_dim": self.latent_dim,
            "resolution": self.resolution,
            "channels": self.channels,
            "lineage": asdict(self.lineage),
            "tag": self.tag,
            "model_id": self.model_id,
            "content_hash": _weights_hash(self.net.state_dict()),
        }

    def retagged(self, tag: str, role: str | None = None) -> "GeneratorModel":
        lineage = self.lineage if role is None else replace(self.lineage, role=role)
        return GeneratorModel(
            net=self.net, arch_id=self.arch_id, latent_dim=self.latent_dim,
            resolution=self.resolution, channels=self.channels, lineage=lineage, tag=tag,
        )


@dataclass
class Checkpoint:
    """Generator snapshot at a training step, reloadable bit-for-bit."""

    state_dict: dict
    step: int
    manifest: dict

    def to_model(self, template: "GeneratorModel") -> "GeneratorModel":
        net = _build_generator(template.arch_id, template.latent_dim,
                               template.resolution, template.channels)
        net.load_state_dict(self.state_dict)
        return GeneratorModel(
            net=net, arch_id=template.arch_id, latent_dim=template.latent_dim,
            resolution=template.resolution, channels=template.channels,
            lineage=template.lineage, tag=f"{template.tag}@{self.step}",
        )


@torch.no_grad()
def sample(model: GeneratorModel, latents: LatentBatch, batch_size: int = 256) -> ImageBatch:
    """Deterministic generator forward pass; output in [0, 1], NHWC."""
    if latents.latent_dim != model.latent_dim:
        raise PreconditionError(
            f"latent dim {latents.latent_dim} does not match model dim {model.latent_dim}"
        )
    model.net.eval()
    outs = []
    codes = torch.from_numpy(latents.codes)
    for i in range(0, latents.count, batch_size):
        x = model.net(codes[i:i + batch_size])
        outs.append(((x + 1.0) / 2.0).permute(0, 2, 3, 1).numpy())
    pixels = np.clip(np.concatenate(outs), 0.0, 1.0)
    return ImageBatch(pixels, provenance=model.tag)


def train_gan(
    data: ImageBatch,
    arch_id: str,
    config: TrainConfig,
    role: str = "independent",
    parent_id: str | None = None,
    generation_index: int = 0,
    data_ref: str | None = None,
    latent_dim: int = DEFAULT_LATENT_DIM,
    tag: str = "",
    init_state: dict | None = None,
) -> tuple[GeneratorModel, list[Checkpoint]]:
    """Adversarial training; returns the generator and step snapshots.

    Snapshots are taken at step 0 (initial weights) and every
    ``snapshot_every`` steps. A non-finite loss aborts with the last good
    snapshot attached to the error.
    """
    if config.steps == 0:
        raise PreconditionError("training needs at least one step")
    if data.count < config.batch_size:
        raise PreconditionError(
            f"dataset ({data.count}) smaller than batch size ({config.batch_size})"
        )
    if arch_id not in ARCH_IDS:
        raise PreconditionError(f"unknown arch_id {arch_id!r}; known: {ARCH_IDS}")

    resolution, channels = data.resolution, data.channels
    torch.manual_seed(config.seed)
    gen = _build_generator(arch_id, latent_dim, resolution, channels)
    disc = _build_discriminator(arch_id, resolution, channels)
    if init_state is not None:
        gen.load_state_dict(init_state)

    lineage = Lineage(role=role, train_seed=config.seed,
                      train_data_ref=data_ref or data.provenance,
                      parent_id=parent_id, generation_index=generation_index)
    template = GeneratorModel(net=gen, arch_id=arch_id, latent_dim=latent_dim,
                              resolution=resolution, channels=channels,
                              lineage=lineage, tag=tag)
    gen.train()

    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr_g, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr_d, betas=(0.5, 0.999))
    bce = nn.BCEWithLogitsLoss()
    z_gen = torch.Generator().manual_seed(derive_seed(config.seed, "train-latents"))
    order_rng = np.random.default_rng(derive_seed(config.seed, "train-batches"))

    x_all = torch.from_numpy(data.pixels).permute(0, 3, 1, 2) * 2.0 - 1.0
    n, bs = data.count, config.batch_size
    order, pos = order_rng.permutation(n), 0

    def snapshot(step):
        return Checkpoint(
            state_dict={k: v.detach().clone() for k, v in gen.state_dict().items()},
            step=step,
            manifest={
                "arch_id": arch_id, "latent_dim": latent_dim, "resolution": resolution,
                "channels": channels, "step": step, "config_hash": config.config_hash(),
                "seed": config.seed, "wall_time": time.time(),
            },
        )

    checkpoints = [snapshot(0)]
    for step in range(1, config.steps + 1):
        if pos + bs > n:
            order, pos = order_rng.permutation(n), 0
        real = x_all[order[pos:pos + bs]]
        pos += bs
        z = torch.randn(bs, latent_dim, generator=z_gen)
        fake = gen(z)

        opt_d.zero_grad()
        if config.loss_kind == "nonsaturating":
            # one-sided label smoothing on the real term
            loss_d = bce(disc(real), torch.full((bs, 1), 0.9)) + \
                     bce(disc(fake.detach()), torch.zeros(bs, 1))
        else:
            loss_d = torch.relu(1.0 - disc(real)).mean() + \
                     torch.relu(1.0 + disc(fake.detach())).mean()
        loss_d.backward()
        opt_d.step()

        opt_g.zero_grad()
        if config.loss_kind == "nonsaturating":
            loss_g = bce(disc(fake), torch.ones(bs, 1))
        else:
            loss_g = -disc(fake).mean()
        loss_g.backward()
        opt_g.step()

        if not (torch.isfinite(loss_d) and torch.isfinite(loss_g)):
            raise TrainingDivergedError(
                f"non-finite loss at step {step} (d={loss_d.item()}, g={loss_g.item()})",
                last_checkpoint=checkpoints[-1],
            )
        if step % config.snapshot_every == 0:
            checkpoints.append(snapshot(step))

    gen.eval()
    return template, checkpoints


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_model(model: GeneratorModel, directory) -> Path:
    """Weights blob plus JSON manifest side-file; returns the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.net.state_dict(), directory / "weights.pt")
    (directory / "manifest.json").write_text(json.dumps(model.manifest(), indent=2, sort_keys=True))
    return directory


def read_model_manifest(directory) -> dict:
    """Lineage/metadata inspection without touching the weights blob."""
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise CorruptArtifactError(f"missing manifest at {path}")
    return json.loads(path.read_text())


def load_model(directory) -> GeneratorModel:
    directory = Path(directory)
    manifest = read_model_manifest(directory)
    try:
        state = torch.load(directory / "weights.pt", weights_only=True)
    except Exception as exc:
        raise CorruptArtifactError(f"unreadable weights at {directory}: {exc}") from exc
    if _weights_hash(state) != manifest["content_hash"]:
        raise CorruptArtifactError(f"content hash mismatch at {directory}")
    net = _build_generator(manifest["arch_id"], manifest["latent_dim"],
                           manifest["resolution"], manifest["channels"])
    net.load_state_dict(state)
    return GeneratorModel(
        net=net, arch_id=manifest["arch_id"], latent_dim=manifest["latent_dim"],
        resolution=manifest["resolution"], channels=manifest["channels"],
        lineage=Lineage(**manifest["lineage"]), tag=manifest["tag"],
    )


def clone_model(model: GeneratorModel) -> GeneratorModel:
    """Bit-exact in-memory copy (physical stealing)."""
    net = _build_generator(model.arch_id, model.latent_dim, model.resolution, model.channels)
    net.load_state_dict(copy.deepcopy(model.net.state_dict()))
    return GeneratorModel(net=net, arch_id=model.arch_id, latent_dim=model.latent_dim,
                          resolution=model.resolution, channels=model.channels,
                          lineage=model.lineage, tag=model.tag)
