import numpy as np
import pytest
import torch

from ganguards.data import make_procedural_dataset, sample_prior
from ganguards.errors import (CorruptArtifactError, PreconditionError,
                              TrainingDivergedError)
from ganguards.gan import (ARCH_IDS, Lineage, TrainConfig, clone_model,
                           load_model, read_model_manifest, sample, save_model,
                           train_gan)


def test_train_config_validation():
    with pytest.raises(PreconditionError):
        TrainConfig(steps=10, snapshot_every=3)  # does not divide
    with pytest.raises(PreconditionError):
        TrainConfig(batch_size=0)
    with pytest.raises(PreconditionError):
        TrainConfig(loss_kind="wasserstein")
    TrainConfig(steps=0)  # allowed (zero-step fine-tune), rejected by train_gan


def test_lineage_invariants():
    with pytest.raises(PreconditionError):
        Lineage(role="target", train_seed=0, train_data_ref="d", generation_index=1)
    with pytest.raises(PreconditionError):
        Lineage(role="substitute", train_seed=0, train_data_ref="d",
                parent_id="abc", generation_index=0)
    with pytest.raises(PreconditionError):
        Lineage(role="owner", train_seed=0, train_data_ref="d")


def test_zero_step_training_rejected():
    data = make_procedural_dataset("blobs", 96, 5, size=16)
    with pytest.raises(PreconditionError):
        train_gan(data, "gan-a", TrainConfig(steps=0), role="target")


def test_training_determinism(micro_gan):
    model2, ckpts2 = train_gan(micro_gan["data"], "gan-a", micro_gan["config"],
                               role="target", tag="target")
    latents = sample_prior(8, 64, 99)
    a = sample(micro_gan["model"], latents)
    b = sample(model2, latents)
    assert a.pixels.tobytes() == b.pixels.tobytes()
    for c1, c2 in zip(micro_gan["checkpoints"], ckpts2):
        m1 = {k: v for k, v in c1.manifest.items() if k != "wall_time"}
        m2 = {k: v for k, v in c2.manifest.items() if k != "wall_time"}
        assert m1 == m2


def test_sampling_contracts(micro_gan):
    model = micro_gan["model"]
    batch = sample(model, sample_prior(10, 64, 1))
    assert batch.count == 10
    assert batch.pixels.min() >= 0.0 and batch.pixels.max() <= 1.0
    assert batch.provenance == "target"
    again = sample(model, sample_prior(10, 64, 1))
    assert np.array_equal(batch.pixels, again.pixels)
    with pytest.raises(PreconditionError):
        sample(model, sample_prior(4, 32, 1))


def test_snapshot_steps_monotonic(micro_gan):
    steps = [c.step for c in micro_gan["checkpoints"]]
    assert steps == sorted(steps)
    assert steps[0] == 0 and steps[-1] == micro_gan["config"].steps


@pytest.mark.parametrize("arch", ARCH_IDS)
def test_all_architectures_train_and_sample(arch):
    data = make_procedural_dataset("rings", 66, 2, size=16)
    model, _ = train_gan(data, arch, TrainConfig(steps=2, batch_size=32,
                                                 snapshot_every=2, seed=0))
    batch = sample(model, sample_prior(4, 64, 0))
    assert batch.pixels.shape == (4, 16, 16, 3)


def test_save_load_roundtrip(tmp_path, micro_gan):
    model = micro_gan["model"]
    save_model(model, tmp_path / "m")
    loaded = load_model(tmp_path / "m")
    latents = sample_prior(6, 64, 7)
    assert np.array_equal(sample(model, latents).pixels,
                          sample(loaded, latents).pixels)
    assert loaded.lineage == model.lineage
    assert loaded.model_id == model.model_id


def test_manifest_only_inspection(tmp_path, micro_gan):
    save_model(micro_gan["model"], tmp_path / "m")
    manifest = read_model_manifest(tmp_path / "m")
    assert manifest["lineage"]["role"] == "target"
    assert manifest["arch_id"] == "gan-a"


def test_truncated_weights_detected(tmp_path, micro_gan):
    save_model(micro_gan["model"], tmp_path / "m")
    blob = (tmp_path / "m" / "weights.pt").read_bytes()
    (tmp_path / "m" / "weights.pt").write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CorruptArtifactError):
        load_model(tmp_path / "m")


def test_tampered_weights_detected(tmp_path, micro_gan):
    save_model(micro_gan["model"], tmp_path / "m")
    state = torch.load(tmp_path / "m" / "weights.pt", weights_only=True)
    key = next(iter(state))
    state[key] = state[key] + 1.0
    torch.save(state, tmp_path / "m" / "weights.pt")
    with pytest.raises(CorruptArtifactError):
        load_model(tmp_path / "m")


def test_physical_stealing_is_bit_identical(micro_gan):
    stolen = clone_model(micro_gan["model"])
    latents = sample_prior(16, 64, 123)
    assert np.array_equal(sample(stolen, latents).pixels,
                          sample(micro_gan["model"], latents).pixels)


def test_divergence_aborts_with_checkpoint():
    data = make_procedural_dataset("blobs", 66, 1, size=16)
    # absurd learning rate forces non-finite loss within a few steps
    config = TrainConfig(steps=40, batch_size=32, snapshot_every=1,
                         lr_g=1e18, lr_d=1e18, loss_kind="hinge", seed=0)
    with pytest.raises(TrainingDivergedError) as err:
        train_gan(data, "gan-a", config)
    assert err.value.last_checkpoint is not None
