"""Ownership protection for GANs.

Builds a discriminative detector from a target generator, an extracted
substitute, and an independently trained generator, then verifies suspect
models from their generated samples alone.
"""

from .data import (ImageBatch, LatentBatch, DatasetSplit,
                   make_procedural_dataset, sample_prior, split_three_way)
from .extraction import extract_model, extraction_chain
from .gan import GeneratorModel, TrainConfig, load_model, sample, save_model, train_gan
from .metrics import fid, ssim, suspect_zoo_report
from .obfuscation import (AttackSpec, adaptive_attack_I, adaptive_attack_II,
                          fine_tune, input_perturb, output_perturb, overwrite_attack)
from .protection import (Budgets, ClassifierConfig, ProtectionClassifier,
                         VerificationReport, build_protection, confidence_score,
                         penultimate_features, perform_verification, predict_batch)

__version__ = "0.1.0"

__all__ = [
    "ImageBatch", "LatentBatch", "DatasetSplit", "make_procedural_dataset",
    "sample_prior", "split_three_way",
    "GeneratorModel", "TrainConfig", "train_gan", "sample", "save_model", "load_model",
    "extract_model", "extraction_chain",
    "Budgets", "ClassifierConfig", "ProtectionClassifier", "VerificationReport",
    "build_protection", "predict_batch", "confidence_score",
    "perform_verification", "penultimate_features",
    "AttackSpec", "input_perturb", "output_perturb", "fine_tune",
    "adaptive_attack_I", "adaptive_attack_II", "overwrite_attack",
    "fid", "ssim", "suspect_zoo_report",
]
