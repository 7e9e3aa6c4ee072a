"""Attacker-side evasion toolbox.

Input perturbation (latent resampling), the four output perturbations
(noise, normalized Gaussian filter, Gaussian blur, JPEG), wholly
fine-tuning, the two adaptive attacks, and the documented no-op for
watermark overwriting. Every perturbation preserves count, resolution,
and the [0, 1] range, and appends to the provenance tag chain.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

from .data import ImageBatch, LatentBatch, sample_prior
from .errors import PreconditionError
from .gan import Checkpoint, GeneratorModel, TrainConfig, clone_model, sample, train_gan
from .seeds import derive_seed

OUTPUT_PERTURB_KINDS = ("a", "b", "c", "d")

# combined output-perturbation magnitudes (noise sigma, filter sigma,
# blur sigma, jpeg quality) per adaptive-attack-II strategy
ADAPTIVE_II_STRATEGIES = {
    "I": {"a": 0.001, "b": 0.1, "c": 0.1, "d": 95},
    "II": {"a": 0.005, "b": 0.2, "c": 0.3, "d": 90},
    "III": {"a": 0.01, "b": 0.4, "c": 0.5, "d": 85},
}

ATTACK_KINDS = (
    "input_perturb", "oup_a_noise", "oup_b_filter", "oup_c_blur", "oup_d_jpeg",
    "fine_tune", "adaptive_I", "adaptive_II",
)


@dataclass
class AttackSpec:
    """Declarative description of an attack chain entry."""

    kind: str
    magnitude: float | None = None
    base: str = "PS"
    strategy: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise PreconditionError(f"unknown attack kind {self.kind!r}")
        if self.base not in ("PS", "ME"):
            raise PreconditionError(f"base must be PS or ME, got {self.base!r}")
        if self.kind == "adaptive_II":
            if self.strategy not in ADAPTIVE_II_STRATEGIES:
                raise PreconditionError("adaptive_II requires strategy I, II, or III")
        if self.kind in ("oup_a_noise", "oup_b_filter", "oup_c_blur"):
            if self.magnitude is None or self.magnitude < 0:
                raise PreconditionError(f"{self.kind} needs magnitude >= 0")
        if self.kind == "oup_d_jpeg" and self.magnitude is not None:
            _jpeg_quality(self.magnitude)


def input_perturb(model: GeneratorModel, count: int, seed: int) -> ImageBatch:
    """Resample latent codes from the Gaussian prior (attack 'Inp')."""
    latents = sample_prior(count, model.latent_dim, seed)
    batch = sample(model, latents)
    return ImageBatch(batch.pixels, f"{batch.provenance}/Inp")


# ---------------------------------------------------------------------------
# Output perturbations
# ---------------------------------------------------------------------------

def gaussian_taps(sigma: float) -> np.ndarray:
    """1-D Gaussian kernel at integer offsets -r..r, r = max(1, ceil(3*sigma))."""
    if sigma == 0:
        return np.array([1.0], dtype=np.float32)
    r = max(1, int(math.ceil(3.0 * sigma)))
    k = np.exp(-np.arange(-r, r + 1, dtype=np.float64) ** 2 / (2.0 * sigma * sigma))
    return (k / k.sum()).astype(np.float32)


def _separable(pixels, taps, pad_mode):
    r = len(taps) // 2
    h, w = pixels.shape[1], pixels.shape[2]
    out = np.pad(pixels, ((0, 0), (r, r), (0, 0), (0, 0)), mode=pad_mode)
    out = sum(out[:, i:i + h] * taps[i] for i in range(len(taps)))
    out = np.pad(out, ((0, 0), (0, 0), (r, r), (0, 0)), mode=pad_mode)
    out = sum(out[:, :, i:i + w] * taps[i] for i in range(len(taps)))
    return out


def _noise(pixels, sigma, seed):
    if sigma == 0:
        return pixels.copy()
    rng = np.random.default_rng(seed)
    return pixels + rng.normal(0.0, sigma, pixels.shape).astype(np.float32)


def _filter_normalized(pixels, sigma):
    """Gaussian filter with border renormalization (zero pad, divide by
    the locally accumulated kernel weight), which preserves brightness at
    the edges instead of smearing them."""
    if sigma == 0:
        return pixels.copy()
    taps = gaussian_taps(sigma)
    num = _separable(pixels, taps, "constant")
    den = _separable(np.ones_like(pixels[:1]), taps, "constant")
    return num / den


def _blur(pixels, sigma):
    """Plain Gaussian blur with reflective padding."""
    if sigma == 0:
        return pixels.copy()
    return _separable(pixels, gaussian_taps(sigma), "reflect")


def _jpeg_quality(magnitude) -> int:
    quality = float(magnitude) * 100.0 if 0.0 < float(magnitude) <= 1.0 else float(magnitude)
    q = int(round(quality))
    if not 1 <= q <= 100:
        raise PreconditionError(f"JPEG quality out of range: {magnitude!r}")
    return q


def encode_jpeg(image_uint8: np.ndarray, quality: int) -> bytes:
    """Baseline-JPEG bytes for one HWC (or HW1) uint8 image.

    Chroma subsampling is disabled at quality >= 95; below that the codec
    default (4:2:0) applies, as in common tooling.
    """
    gray = image_uint8.ndim == 3 and image_uint8.shape[2] == 1
    im = Image.fromarray(image_uint8[:, :, 0] if gray else image_uint8,
                         mode="L" if gray else "RGB")
    buf = io.BytesIO()
    im.save(buf, format="JPEG", quality=quality,
            subsampling=0 if quality >= 95 else -1)
    return buf.getvalue()


def decode_jpeg(blob: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(blob)) as im:
        arr = np.asarray(im, dtype=np.uint8)
    return arr[:, :, None] if arr.ndim == 2 else arr


def _jpeg(pixels, quality):
    out = np.empty_like(pixels)
    for i in range(len(pixels)):
        arr = np.clip(np.rint(pixels[i] * 255.0), 0, 255).astype(np.uint8)
        out[i] = decode_jpeg(encode_jpeg(arr, quality)).astype(np.float32) / 255.0
    return out


def output_perturb(images: ImageBatch, kind: str, magnitude, seed: int = 0) -> ImageBatch:
    """Apply one output perturbation; result clamped to [0, 1].

    Kinds: a = additive Gaussian noise (sigma in pixel units), b = Gaussian
    filter with border renormalization, c = Gaussian blur with reflective
    padding, d = baseline-JPEG encode/decode round trip.
    """
    if kind not in OUTPUT_PERTURB_KINDS:
        raise PreconditionError(f"unknown output perturbation {kind!r}")
    px = images.pixels
    if kind == "a":
        if magnitude < 0:
            raise PreconditionError("noise sigma must be >= 0")
        out = _noise(px, magnitude, seed)
    elif kind == "b":
        if magnitude < 0:
            raise PreconditionError("filter sigma must be >= 0")
        out = _filter_normalized(px, magnitude)
    elif kind == "c":
        if magnitude < 0:
            raise PreconditionError("blur sigma must be >= 0")
        out = _blur(px, magnitude)
    else:
        out = _jpeg(px, _jpeg_quality(magnitude))
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return ImageBatch(out, f"{images.provenance}/Oup-{kind}:{magnitude}")


def adaptive_attack_II(images: ImageBatch, strategy: str, seed: int = 0) -> ImageBatch:
    """Combined graded perturbations, applied in the fixed order a, b, c, d."""
    if strategy not in ADAPTIVE_II_STRATEGIES:
        raise PreconditionError(f"strategy must be one of {sorted(ADAPTIVE_II_STRATEGIES)}")
    mags = ADAPTIVE_II_STRATEGIES[strategy]
    out = images
    for kind in OUTPUT_PERTURB_KINDS:
        out = output_perturb(out, kind, mags[kind], seed=seed)
    return ImageBatch(out.pixels, f"{images.provenance}/AdaII:{strategy}")


# ---------------------------------------------------------------------------
# Model-level attacks
# ---------------------------------------------------------------------------

def fine_tune(stolen: GeneratorModel, new_data: ImageBatch, config: TrainConfig) -> GeneratorModel:
    """Wholly fine-tune: stolen weights as initialization, retrain on new data."""
    if new_data.provenance == stolen.lineage.train_data_ref:
        raise PreconditionError("fine-tune data must differ from the original training data")
    if config.steps == 0:
        model = clone_model(stolen)
        model.lineage = replace(
            stolen.lineage, role="suspect", parent_id=stolen.model_id,
            generation_index=stolen.lineage.generation_index + 1,
            train_data_ref=f"finetune0:{new_data.provenance}|orig:{stolen.lineage.train_data_ref}",
        )
        model.tag = f"{stolen.tag}/FT"
        return model
    model, _ = train_gan(
        new_data, stolen.arch_id, config,
        role="suspect", parent_id=stolen.model_id,
        generation_index=stolen.lineage.generation_index + 1,
        data_ref=f"finetune:{new_data.provenance}|orig:{stolen.lineage.train_data_ref}",
        latent_dim=stolen.latent_dim,
        tag=f"{stolen.tag}/FT",
        init_state={k: v.detach().clone() for k, v in stolen.net.state_dict().items()},
    )
    return model


@dataclass
class AdaptiveIResult:
    """Per-snapshot verification reports paired with the fidelity curve."""

    steps: list[int]
    reports: list
    fid_values: list[float]


def adaptive_attack_I(
    snapshots: list[Checkpoint],
    template: GeneratorModel,
    clf,
    victim_samples: ImageBatch,
    tau: float,
    m: int,
    extractor,
    seed: int = 0,
) -> AdaptiveIResult:
    """Verify every training snapshot of an extraction run.

    The adversary hopes an inferior snapshot evades detection; the result
    pairs each snapshot's confidence with its fidelity
    FID(snapshot samples, victim samples).
    """
    from .metrics import fid
    from .protection import perform_verification

    if len(snapshots) < 1:
        raise PreconditionError("need at least one snapshot")
    steps, reports, fids = [], [], []
    for ckpt in snapshots:
        model = ckpt.to_model(template)
        latents = sample_prior(max(m, victim_samples.count), model.latent_dim,
                               derive_seed(seed, f"adaptive1:{ckpt.step}"))
        batch = sample(model, latents)
        reports.append(perform_verification(clf, batch.take(m), tau, m))
        fid_batch = batch.take(victim_samples.count)
        fids.append(fid(fid_batch, victim_samples, extractor).value)
        steps.append(ckpt.step)
    return AdaptiveIResult(steps=steps, reports=reports, fid_values=fids)


@dataclass(frozen=True)
class OverwriteAttackRecord:
    """Overwriting targets embedded watermarks/fingerprints; this detector
    uses neither, so the attack has nothing to overwrite."""

    applicable: bool = False
    reason: str = (
        "detector relies on distributional characteristics of generated "
        "samples, not on embedded watermarks or fingerprints; there is "
        "nothing to overwrite"
    )

    def to_dict(self) -> dict:
        return {"applicable": self.applicable, "reason": self.reason}


def overwrite_attack() -> OverwriteAttackRecord:
    return OverwriteAttackRecord()
