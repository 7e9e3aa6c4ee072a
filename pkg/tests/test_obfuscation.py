import numpy as np
import pytest

from ganguards.data import ImageBatch, make_procedural_dataset, sample_prior
from ganguards.errors import PreconditionError
from ganguards.gan import TrainConfig, sample
from ganguards.obfuscation import (ADAPTIVE_II_STRATEGIES, AttackSpec,
                                   adaptive_attack_II, decode_jpeg, encode_jpeg,
                                   fine_tune, gaussian_taps, input_perturb,
                                   output_perturb, overwrite_attack)


@pytest.fixture(scope="module")
def shapes():
    return make_procedural_dataset("blobs", 12, 3)


# ------------------------------------------------------------- attack specs

def test_attack_spec_validation():
    AttackSpec(kind="oup_a_noise", magnitude=0.01)
    AttackSpec(kind="adaptive_II", strategy="II")
    with pytest.raises(PreconditionError):
        AttackSpec(kind="adaptive_II")  # missing strategy
    with pytest.raises(PreconditionError):
        AttackSpec(kind="oup_c_blur", magnitude=-1.0)
    with pytest.raises(PreconditionError):
        AttackSpec(kind="oup_d_jpeg", magnitude=500)
    with pytest.raises(PreconditionError):
        AttackSpec(kind="steal_everything")


def test_adaptive_ii_magnitude_table():
    assert ADAPTIVE_II_STRATEGIES == {
        "I": {"a": 0.001, "b": 0.1, "c": 0.1, "d": 95},
        "II": {"a": 0.005, "b": 0.2, "c": 0.3, "d": 90},
        "III": {"a": 0.01, "b": 0.4, "c": 0.5, "d": 85},
    }


# ----------------------------------------------------------- perturbations

def test_shape_range_count_preserved(shapes):
    for kind, mag in (("a", 0.05), ("b", 0.4), ("c", 0.5), ("d", 0.85)):
        out = output_perturb(shapes, kind, mag, seed=1)
        assert out.pixels.shape == shapes.pixels.shape
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


def test_provenance_chains_compose(shapes):
    once = output_perturb(shapes, "c", 0.5)
    assert once.provenance == f"{shapes.provenance}/Oup-c:0.5"
    twice = output_perturb(once, "a", 0.01)
    assert twice.provenance == f"{shapes.provenance}/Oup-c:0.5/Oup-a:0.01"


def test_sigma_zero_identities_exact(shapes):
    for kind in ("a", "b", "c"):
        out = output_perturb(shapes, kind, 0.0)
        assert np.array_equal(out.pixels, shapes.pixels), kind


def test_noise_deterministic_per_seed(shapes):
    a = output_perturb(shapes, "a", 0.05, seed=7)
    b = output_perturb(shapes, "a", 0.05, seed=7)
    c = output_perturb(shapes, "a", 0.05, seed=8)
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_blur_matches_convolution_oracle():
    # explicit dense 2-D convolution with reflect padding, written
    # independently of the separable implementation
    rng = np.random.default_rng(0)
    img = rng.random((1, 16, 16, 1)).astype(np.float32)
    sigma = 0.5
    taps = gaussian_taps(sigma)
    r = len(taps) // 2
    kernel = np.outer(taps, taps)
    padded = np.pad(img[0, :, :, 0], r, mode="reflect")
    expected = np.zeros((16, 16))
    for i in range(16):
        for j in range(16):
            expected[i, j] = float((padded[i:i + 2 * r + 1, j:j + 2 * r + 1] * kernel).sum())
    out = output_perturb(ImageBatch(img, "x"), "c", sigma)
    assert np.abs(out.pixels[0, :, :, 0] - np.clip(expected, 0, 1)).max() < 1e-6


def test_blur_impulse_is_kernel():
    img = np.zeros((1, 16, 16, 1), np.float32)
    img[0, 8, 8, 0] = 1.0
    out = output_perturb(ImageBatch(img, "imp"), "c", 0.5)
    taps = gaussian_taps(0.5)
    r = len(taps) // 2
    window = out.pixels[0, 8 - r:8 + r + 1, 8 - r:8 + r + 1, 0]
    assert np.abs(window - np.outer(taps, taps)).max() < 1e-6


def test_filter_preserves_flat_regions_at_borders():
    # border renormalization: a constant image stays constant under the
    # normalized filter, while plain zero-padded convolution would darken edges
    const = ImageBatch(np.full((2, 16, 16, 3), 0.8, np.float32), "c")
    out = output_perturb(const, "b", 1.0)
    assert np.abs(out.pixels - 0.8).max() < 1e-6


def test_filter_and_blur_differ_at_edges(shapes):
    filtered = output_perturb(shapes, "b", 0.8)
    blurred = output_perturb(shapes, "c", 0.8)
    assert not np.allclose(filtered.pixels, blurred.pixels)


def test_jpeg_constant_midgray_is_near_lossless():
    gray = ImageBatch(np.full((2, 32, 32, 3), 0.5, np.float32), "g")
    out = output_perturb(gray, "d", 0.85)
    assert np.abs(out.pixels - gray.pixels).max() <= 1.0 / 255.0


def test_jpeg_quality_100_on_constants():
    for level in (0.0, 0.25, 0.5, 0.75, 1.0):
        for channels in (1, 3):
            img = ImageBatch(np.full((1, 32, 32, channels), level, np.float32), "g")
            out = output_perturb(img, "d", 100)
            assert np.abs(out.pixels - img.pixels).max() <= 1.0 / 255.0, (level, channels)


def test_jpeg_quality_mapping():
    gray = ImageBatch(np.full((1, 16, 16, 3), 0.5, np.float32), "g")
    frac = output_perturb(gray, "d", 0.85)
    pct = output_perturb(gray, "d", 85)
    assert np.array_equal(frac.pixels, pct.pixels)
    with pytest.raises(PreconditionError):
        output_perturb(gray, "d", 0.0)
    with pytest.raises(PreconditionError):
        output_perturb(gray, "d", 101)


def test_jpeg_bitstream_is_real_baseline(shapes):
    arr = (shapes.pixels[0] * 255).astype(np.uint8)
    blob = encode_jpeg(arr, 85)
    assert blob[:2] == b"\xff\xd8" and blob[-2:] == b"\xff\xd9"  # SOI/EOI
    assert b"\xff\xc0" in blob  # SOF0: baseline DCT
    assert b"\xff\xc2" not in blob  # not progressive
    decoded = decode_jpeg(blob)
    assert decoded.shape == arr.shape


def test_jpeg_lossy_at_low_quality(shapes):
    out = output_perturb(shapes, "d", 10)
    assert np.abs(out.pixels - shapes.pixels).max() > 0.02


# --------------------------------------------------------- adaptive attack

def test_adaptive_ii_equals_manual_chain(shapes):
    strategy = "II"
    mags = ADAPTIVE_II_STRATEGIES[strategy]
    manual = output_perturb(shapes, "a", mags["a"], seed=5)
    manual = output_perturb(manual, "b", mags["b"])
    manual = output_perturb(manual, "c", mags["c"])
    manual = output_perturb(manual, "d", mags["d"])
    combined = adaptive_attack_II(shapes, strategy, seed=5)
    assert np.array_equal(combined.pixels, manual.pixels)
    assert combined.provenance.endswith("/AdaII:II")


def test_adaptive_ii_rejects_unknown_strategy(shapes):
    with pytest.raises(PreconditionError):
        adaptive_attack_II(shapes, "IV")


# ------------------------------------------------------- model-level attacks

def test_input_perturb(micro_gan):
    batch = input_perturb(micro_gan["model"], 10, seed=3)
    assert batch.count == 10
    assert batch.provenance == "target/Inp"
    again = input_perturb(micro_gan["model"], 10, seed=3)
    assert np.array_equal(batch.pixels, again.pixels)


def test_zero_step_fine_tune_is_identity(micro_gan):
    new_data = make_procedural_dataset("rings", 66, 9, size=16)
    tuned = fine_tune(micro_gan["model"], new_data,
                      TrainConfig(steps=0, batch_size=32, snapshot_every=1, seed=0))
    latents = sample_prior(8, 64, 44)
    assert np.array_equal(sample(tuned, latents).pixels,
                          sample(micro_gan["model"], latents).pixels)
    assert tuned.lineage.parent_id == micro_gan["model"].model_id


def test_fine_tune_provenance_records_both_datasets(micro_gan):
    new_data = make_procedural_dataset("rings", 66, 9, size=16)
    tuned = fine_tune(micro_gan["model"], new_data,
                      TrainConfig(steps=4, batch_size=32, snapshot_every=4, seed=0))
    ref = tuned.lineage.train_data_ref
    assert new_data.provenance in ref
    assert micro_gan["model"].lineage.train_data_ref in ref
    assert tuned.tag == "target/FT"


def test_fine_tune_rejects_same_data(micro_gan):
    with pytest.raises(PreconditionError):
        fine_tune(micro_gan["model"], micro_gan["data"],
                  TrainConfig(steps=4, batch_size=32, snapshot_every=4, seed=0))


def test_overwrite_attack_is_documented_noop(shapes):
    record = overwrite_attack()
    assert record.applicable is False
    assert "watermark" in record.reason
    assert record.to_dict()["applicable"] is False
    # never alters provenance of anything
    assert shapes.provenance == "procedural:blobs:3"
