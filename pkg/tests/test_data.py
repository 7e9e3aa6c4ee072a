import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganguards.data import (DatasetSplit, ImageBatch, load_dataset_split,
                            load_image_folder, make_procedural_dataset,
                            sample_prior, save_dataset_split, save_image_batch,
                            split_three_way)
from ganguards.errors import PreconditionError


# ---------------------------------------------------------------- ImageBatch

def test_image_batch_validates_range():
    bad = np.full((1, 8, 8, 3), 1.5, np.float32)
    with pytest.raises(PreconditionError):
        ImageBatch(bad, "x")


def test_image_batch_requires_square_and_provenance():
    with pytest.raises(PreconditionError):
        ImageBatch(np.zeros((1, 8, 4, 3), np.float32), "x")
    with pytest.raises(PreconditionError):
        ImageBatch(np.zeros((1, 8, 8, 3), np.float32), "")
    with pytest.raises(PreconditionError):
        ImageBatch(np.zeros((1, 8, 8, 2), np.float32), "x")


@given(st.floats(min_value=0.0, max_value=1.0), st.sampled_from([1, 3]))
def test_image_batch_accepts_valid_pixels(value, channels):
    batch = ImageBatch(np.full((2, 8, 8, channels), value, np.float32), "x")
    assert batch.count == 2
    assert batch.channels == channels


def test_content_hashes_distinguish_images():
    batch = make_procedural_dataset("blobs", 6, 0)
    hashes = batch.content_hashes()
    assert len(set(hashes)) == 6
    assert hashes == batch.content_hashes()


# ------------------------------------------------------- procedural dataset

def test_procedural_range_and_determinism():
    a = make_procedural_dataset("blobs", 6, 0)
    b = make_procedural_dataset("blobs", 6, 0)
    assert a.pixels.min() >= 0.0 and a.pixels.max() <= 1.0
    assert a.pixels.tobytes() == b.pixels.tobytes()


def test_procedural_rejects_bad_args():
    with pytest.raises(PreconditionError):
        make_procedural_dataset("nonexistent", 6, 0)
    with pytest.raises(PreconditionError):
        make_procedural_dataset("blobs", 7, 0)
    with pytest.raises(PreconditionError):
        make_procedural_dataset("blobs", 0, 0)


@pytest.mark.parametrize("family", ["blobs", "rings", "stripes"])
def test_procedural_families_exist(family):
    batch = make_procedural_dataset(family, 3, 1, size=16)
    assert batch.pixels.shape == (3, 16, 16, 3)
    assert batch.provenance.startswith(f"procedural:{family}")


def test_families_statistically_separable():
    # oracle computed up front: per-pixel means of 3000-image draws differ
    # by >= 0.11 on average between any two families; same-distribution
    # noise at this count is ~0.005
    means = {
        family: make_procedural_dataset(family, 3000, 7).pixels.mean(axis=0)
        for family in ("blobs", "rings", "stripes")
    }
    pairs = [("blobs", "rings"), ("blobs", "stripes"), ("rings", "stripes")]
    for fam_a, fam_b in pairs:
        gap = float(np.abs(means[fam_a] - means[fam_b]).mean())
        assert gap > 0.05, (fam_a, fam_b, gap)


def test_families_separable_two_sample_z():
    bi = make_procedural_dataset("blobs", 3000, 7).pixels.mean(axis=(1, 2, 3))
    ri = make_procedural_dataset("rings", 3000, 7).pixels.mean(axis=(1, 2, 3))
    z = (bi.mean() - ri.mean()) / np.sqrt(bi.var() / 3000 + ri.var() / 3000)
    assert abs(z) > 10.0


# ------------------------------------------------------------------- splits

def test_split_partition_property():
    data = make_procedural_dataset("blobs", 9, 1)
    split = split_three_way(data, seed=0)
    all_hashes = sorted(
        h for part in split.parts() for h in part.content_hashes())
    assert all_hashes == sorted(data.content_hashes())
    assert all(p.count == 3 for p in split.parts())


def test_split_seed_sensitivity():
    data = make_procedural_dataset("blobs", 30, 1)
    s0 = split_three_way(data, seed=0)
    s1 = split_three_way(data, seed=1)
    assert set(s0.part_i.content_hashes()) != set(s1.part_i.content_hashes())


def test_split_3000_disjoint():
    data = make_procedural_dataset("blobs", 3000, 7)
    split = split_three_way(data, seed=0)
    sets = [set(p.content_hashes()) for p in split.parts()]
    assert all(len(s) == 1000 for s in sets)
    assert not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])


def test_split_rejects_indivisible():
    data = ImageBatch(np.zeros((4, 8, 8, 3), np.float32) + 0.5, "x")
    with pytest.raises(PreconditionError):
        split_three_way(data, seed=0)


def test_dataset_split_rejects_shared_images():
    batch = make_procedural_dataset("blobs", 3, 2)
    with pytest.raises(PreconditionError):
        DatasetSplit(batch, batch, batch, source_name="dup")


# -------------------------------------------------------------------- prior

def test_prior_moments():
    codes = sample_prior(100_000, 64, 3).codes.astype(np.float64)
    assert np.abs(codes.mean(axis=0)).max() < 0.02
    assert np.abs(codes.var(axis=0) - 1.0).max() < 0.02


def test_prior_determinism_and_bounds():
    a = sample_prior(1, 16, 5)
    b = sample_prior(1, 16, 5)
    assert np.array_equal(a.codes, b.codes)
    with pytest.raises(PreconditionError):
        sample_prior(0, 16, 5)
    with pytest.raises(PreconditionError):
        sample_prior(4, 0, 5)


# ----------------------------------------------------------------------- IO

def test_png_roundtrip(tmp_path):
    batch = make_procedural_dataset("rings", 6, 4, size=16)
    save_image_batch(batch, tmp_path / "imgs")
    loaded = load_image_folder(tmp_path / "imgs")
    assert loaded.pixels.shape == batch.pixels.shape
    # 8-bit quantization is the only loss
    assert np.abs(loaded.pixels - batch.pixels).max() <= 0.5 / 255 + 1e-6
    assert loaded.content_hashes() == batch.content_hashes()


def test_split_persistence_roundtrip(tmp_path):
    data = make_procedural_dataset("blobs", 9, 1, size=16)
    split = split_three_way(data, seed=3)
    save_dataset_split(split, tmp_path / "split", seed=3)
    loaded = load_dataset_split(tmp_path / "split")
    for orig, back in zip(split.parts(), loaded.parts()):
        assert orig.content_hashes() == back.content_hashes()


def test_load_missing_folder_errors(tmp_path):
    with pytest.raises(PreconditionError):
        load_image_folder(tmp_path)
