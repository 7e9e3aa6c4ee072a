"""Experiment harness: configs, artifact cache, and experiment execution.

One JSON config document fully specifies an experiment; no implicit global
state. Trained artifacts (generators, classifiers, the FID extractor) are
cached by content-derived keys so re-running a config never retrains
anything whose manifest already matches. The cache root defaults to
``~/.cache/ganguards`` and can be overridden with the ``GANGUARDS_CACHE``
environment variable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import ImageBatch, make_procedural_dataset, sample_prior, split_three_way
from .errors import PreconditionError
from .extraction import extract_model, extract_with_snapshots, extraction_chain
from .gan import (GeneratorModel, TrainConfig, clone_model, load_model,
                  sample, save_model, train_gan)
from .metrics import (fid, load_fid_extractor, mean_ssim, save_fid_extractor,
                      suspect_zoo_report, train_fid_extractor)
from .obfuscation import (ADAPTIVE_II_STRATEGIES, adaptive_attack_I,
                          adaptive_attack_II, fine_tune, input_perturb,
                          output_perturb, overwrite_attack)
from .protection import (Budgets, ClassifierConfig, ProtectionClassifier,
                         build_protection, load_classifier, penultimate_features,
                         perform_verification, predict_batch, save_classifier)
from .seeds import SeedPolicy, derive_seed

log = logging.getLogger(__name__)

EXPERIMENT_KINDS = (
    "verification", "obfuscation_sweep", "cross_arch_extraction", "generations",
    "sample_count_sweep", "adaptive_I", "adaptive_II", "finetune",
)

DEFAULT_OUTPUT_MAGNITUDES = {"a": 0.01, "b": 0.4, "c": 0.5, "d": 0.85}


# ---------------------------------------------------------------------------
# Config documents
# ---------------------------------------------------------------------------

@dataclass
class DatasetConfig:
    family: str = "blobs"
    count: int = 3000
    resolution: int = 32
    channels: int = 3


@dataclass
class GanParams:
    steps: int = 1200
    batch_size: int = 32
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    loss_kind: str = "nonsaturating"
    snapshot_every: int = 300
    latent_dim: int = 64

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size,
                           lr_g=self.lr_g, lr_d=self.lr_d, loss_kind=self.loss_kind,
                           snapshot_every=self.snapshot_every, seed=seed)


@dataclass
class ClassifierParams:
    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.003
    momentum: float = 0.9
    weight_decay: float = 0.0
    feature_dim: int = 128
    holdout_fraction: float = 0.05
    fresh_check_per_class: int = 2000

    def config(self, seed: int) -> ClassifierConfig:
        return ClassifierConfig(seed=seed, **asdict(self))


@dataclass
class ExperimentConfig:
    kind: str = "verification"
    seed: int = 0
    tau: float = 0.90
    m: int = 1000
    arch: str = "gan-a"
    n_query: int = 10_000
    n: int = 5_000
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    gan: GanParams = field(default_factory=GanParams)
    classifier: ClassifierParams = field(default_factory=ClassifierParams)
    out_dir: str = "runs/experiment"
    # kind-specific knobs
    generations: int = 3
    m_grid: list = field(default_factory=lambda: [50, 100, 500, 1000, 2000])
    sweep_pool: int = 20_000
    output_magnitudes: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUT_MAGNITUDES))
    attacker_archs: list = field(default_factory=lambda: ["gan-a", "gan-b", "gan-c"])
    strategies: list = field(default_factory=lambda: ["I", "II", "III"])
    finetune_steps: int = 0  # 0 = same as gan.steps
    tsne_perplexity: float = 30.0

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise PreconditionError(f"unknown experiment kind {self.kind!r}")
        if not 0.0 < self.tau < 1.0:
            raise PreconditionError("tau must be in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        for key, cls in (("dataset", DatasetConfig), ("gan", GanParams),
                         ("classifier", ClassifierParams)):
            if key in doc and isinstance(doc[key], dict):
                doc[key] = cls(**doc[key])
        return ExperimentConfig(**doc)

    @staticmethod
    def from_json_file(path) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("out_dir", None)  # semantic identity, not placement
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Artifact cache
# ---------------------------------------------------------------------------

def _key_hash(key: dict) -> str:
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:24]


class ArtifactCache:
    """Content-keyed store for trained artifacts."""

    def __init__(self, root=None):
        root = root or os.environ.get("GANGUARDS_CACHE") or (Path.home() / ".cache" / "ganguards")
        self.root = Path(root)

    def _slot(self, namespace: str, key: dict) -> Path:
        return self.root / namespace / _key_hash(key)

    def model(self, key: dict, builder) -> GeneratorModel:
        slot = self._slot("models", key)
        if (slot / "manifest.json").exists():
            log.debug("cache hit: model %s", slot.name)
            return load_model(slot)
        model = builder()
        save_model(model, slot)
        (slot / "key.json").write_text(json.dumps(key, indent=2, sort_keys=True))
        return model

    def model_with_snapshots(self, key: dict, builder):
        """Caches a training run's snapshot set alongside the final model."""
        slot = self._slot("snapshot-runs", key)
        if (slot / "index.json").exists():
            index = json.loads((slot / "index.json").read_text())
            final = load_model(slot / "final")
            models = [load_model(slot / f"step-{step}") for step in index["steps"]]
            return final, models
        final, checkpoints = builder()
        models = [c.to_model(final) for c in checkpoints]
        save_model(final, slot / "final")
        for ckpt, model in zip(checkpoints, models):
            save_model(model, slot / f"step-{ckpt.step}")
        (slot / "index.json").write_text(json.dumps(
            {"steps": [c.step for c in checkpoints]}, indent=2, sort_keys=True))
        (slot / "key.json").write_text(json.dumps(key, indent=2, sort_keys=True))
        return final, models

    def classifier(self, key: dict, builder) -> ProtectionClassifier:
        slot = self._slot("classifiers", key)
        if (slot / "manifest.json").exists():
            log.debug("cache hit: classifier %s", slot.name)
            return load_classifier(slot)
        clf = builder()
        save_classifier(clf, slot)
        (slot / "key.json").write_text(json.dumps(key, indent=2, sort_keys=True))
        return clf

    def fid_extractor(self, key: dict, builder):
        slot = self._slot("fid-extractors", key)
        if (slot / "manifest.json").exists():
            return load_fid_extractor(slot)
        extractor = builder()
        save_fid_extractor(extractor, slot)
        (slot / "key.json").write_text(json.dumps(key, indent=2, sort_keys=True))
        return extractor


# ---------------------------------------------------------------------------
# Workbench: shared pipeline stages
# ---------------------------------------------------------------------------

class Workbench:
    """Builds and caches the artifacts an experiment kind needs.

    All randomness flows through labeled streams derived from the config
    seed, so identical configs reproduce identical artifacts.
    """

    def __init__(self, config: ExperimentConfig, cache: ArtifactCache | None = None):
        self.config = config
        self.cache = cache or ArtifactCache()
        self.seeds = SeedPolicy(config.seed)
        self._dataset = None
        self._split = None

    # -- keys ---------------------------------------------------------------

    def _base_key(self) -> dict:
        c = self.config
        return {
            "dataset": asdict(c.dataset), "gan": asdict(c.gan), "arch": c.arch,
            "seed": c.seed,
        }

    # -- data ---------------------------------------------------------------

    @property
    def dataset(self) -> ImageBatch:
        if self._dataset is None:
            c = self.config.dataset
            self._dataset = make_procedural_dataset(
                c.family, c.count, self.seeds.stream("dataset"),
                size=c.resolution, channels=c.channels)
        return self._dataset

    @property
    def split(self):
        if self._split is None:
            self._split = split_three_way(self.dataset, self.seeds.stream("split"))
        return self._split

    # -- models -------------------------------------------------------------

    def _gan_config(self, label: str, steps: int | None = None) -> TrainConfig:
        cfg = self.config.gan.train_config(self.seeds.stream(label))
        if steps is not None:
            # single final snapshot; cadence only matters for adaptive attack I
            cfg = dataclasses.replace(cfg, steps=steps, snapshot_every=max(steps, 1))
        return cfg

    def target(self) -> GeneratorModel:
        key = {**self._base_key(), "role": "target"}
        return self.cache.model(key, lambda: train_gan(
            self.split.part_i, self.config.arch, self._gan_config("target-train"),
            role="target", tag="target", latent_dim=self.config.gan.latent_dim)[0])

    def classifier(self) -> ProtectionClassifier:
        c = self.config
        key = {**self._base_key(), "role": "classifier",
               "budgets": {"n_query": c.n_query, "n": c.n},
               "classifier": asdict(c.classifier)}
        return self.cache.classifier(key, lambda: build_protection(
            self.target(), self.split.part_iii,
            Budgets(n_query=c.n_query, n=c.n),
            c.classifier.config(self.seeds.stream("classifier")),
            self._gan_config("protection-gans"),
        ))

    def suspect_ps(self) -> GeneratorModel:
        return clone_model(self.target())

    def suspect_me(self, arch: str | None = None) -> GeneratorModel:
        arch = arch or self.config.arch
        key = {**self._base_key(), "role": "suspect-me", "attacker_arch": arch}
        return self.cache.model(key, lambda: extract_model(
            self.target(), self.config.n_query, arch,
            self._gan_config(f"suspect-me-{arch}")))

    def suspect_ind_a(self) -> GeneratorModel:
        key = {**self._base_key(), "role": "suspect-ind-a"}
        return self.cache.model(key, lambda: train_gan(
            self.split.part_ii, self.config.arch, self._gan_config("suspect-ind-a"),
            role="independent", tag="Ind-a", latent_dim=self.config.gan.latent_dim)[0])

    def suspect_ind_b(self) -> GeneratorModel:
        key = {**self._base_key(), "role": "suspect-ind-b"}
        return self.cache.model(key, lambda: train_gan(
            self.split.part_i, self.config.arch, self._gan_config("suspect-ind-b"),
            role="independent", tag="Ind-b", latent_dim=self.config.gan.latent_dim)[0])

    def chain(self) -> list[GeneratorModel]:
        models = []
        victim = self.target()
        for gen in range(1, self.config.generations + 1):
            key = {**self._base_key(), "role": f"chain-gen{gen}",
                   "generations": gen}
            victim_now = victim
            models.append(self.cache.model(key, lambda v=victim_now, g=gen: extract_model(
                v, self.config.n_query, self.config.arch, self._gan_config(f"chain-gen{g}"))))
            victim = models[-1]
        return models

    def finetuned(self, base_name: str) -> GeneratorModel:
        base = self.suspect_ps() if base_name == "PS" else self.suspect_me()
        steps = self.config.finetune_steps or self.config.gan.steps
        key = {**self._base_key(), "role": f"finetune-{base_name}", "steps": steps}
        return self.cache.model(key, lambda: fine_tune(
            base, self.split.part_ii,
            self._gan_config(f"finetune-{base_name}", steps=steps)))

    def fid_extractor(self):
        c = self.config.dataset
        key = {"resolution": c.resolution, "channels": c.channels, "seed": 0}
        return self.cache.fid_extractor(key, lambda: train_fid_extractor(
            resolution=c.resolution, channels=c.channels, seed=0))

    # -- sampling/verification ----------------------------------------------

    def samples_from(self, model: GeneratorModel, count: int, label: str) -> ImageBatch:
        return sample(model, sample_prior(count, model.latent_dim, self.seeds.stream(label)))

    def verify_model(self, clf, model: GeneratorModel, label: str):
        batch = self.samples_from(model, self.config.m, f"verify-{label}")
        return perform_verification(clf, batch, self.config.tau, self.config.m)

    def verify_batch(self, clf, batch: ImageBatch):
        return perform_verification(clf, batch, self.config.tau, self.config.m)


# ---------------------------------------------------------------------------
# Experiment record
# ---------------------------------------------------------------------------

@dataclass
class ExperimentRecord:
    kind: str
    config: dict
    config_hash: str
    reports: dict
    tables: dict
    figure_paths: list
    wall_time_s: float
    out_dir: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "config": self.config, "config_hash": self.config_hash,
            "reports": {k: json.loads(v.to_json()) for k, v in self.reports.items()},
            "tables": self.tables, "figure_paths": self.figure_paths,
            "wall_time_s": self.wall_time_s,
        }

    def save(self) -> Path:
        out = Path(self.out_dir)
        (out / "reports").mkdir(parents=True, exist_ok=True)
        for name, report in self.reports.items():
            report.save(out / "reports" / f"{name}.json")
        (out / "record.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return out / "record.json"


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------

def _run_verification(wb: Workbench):
    clf = wb.classifier()
    suspects = {
        "PS": wb.suspect_ps(), "ME": wb.suspect_me(),
        "Ind-a": wb.suspect_ind_a(), "Ind-b": wb.suspect_ind_b(),
    }
    truth = {"PS": 1, "ME": 1, "Ind-a": 0, "Ind-b": 0}
    reports = {name: wb.verify_model(clf, model, name) for name, model in suspects.items()}
    zoo = suspect_zoo_report([reports[n] for n in suspects], [truth[n] for n in suspects],
                             names=list(suspects))
    # penultimate features for the characteristics scatter
    feats, labels = [], []
    for name, model in suspects.items():
        group = "Ind" if name.startswith("Ind") else name
        batch = wb.samples_from(model, 200, f"features-{name}")
        feats.append(penultimate_features(clf, batch))
        labels += [group] * 200
    features = np.concatenate(feats)
    tables = {
        "zoo": zoo.to_dict(),
        "classifier_manifest": clf.manifest,
        "confidences": {n: reports[n].confidence_score for n in suspects},
        "overwrite_attack": overwrite_attack().to_dict(),
    }
    extras = {"features": features, "feature_labels": labels}
    return reports, tables, extras


def _run_obfuscation_sweep(wb: Workbench):
    clf = wb.classifier()
    cfg = wb.config
    reports = {}
    reports["PS+Inp"] = wb.verify_batch(
        clf, input_perturb(wb.suspect_ps(), cfg.m, wb.seeds.stream("inp-ps")))
    for base_name, model in (("PS", wb.suspect_ps()), ("ME", wb.suspect_me())):
        base_batch = wb.samples_from(model, cfg.m, f"oup-base-{base_name}")
        for kind, mag in cfg.output_magnitudes.items():
            batch = output_perturb(base_batch, kind, mag,
                                   seed=wb.seeds.stream(f"oup-{base_name}-{kind}"))
            reports[f"{base_name}+Oup-{kind}"] = wb.verify_batch(clf, batch)
    tables = {
        "confidences": {k: r.confidence_score for k, r in reports.items()},
        "magnitudes": cfg.output_magnitudes,
        "overwrite_attack": overwrite_attack().to_dict(),
    }
    return reports, tables, {}


def _run_finetune(wb: Workbench):
    clf = wb.classifier()
    reports = {}
    for base_name in ("PS", "ME"):
        model = wb.finetuned(base_name)
        reports[f"{base_name}+FT"] = wb.verify_model(clf, model, f"ft-{base_name}")
    tables = {"confidences": {k: r.confidence_score for k, r in reports.items()},
              "expected": "fine-tuned suspects evade detection (known limitation)"}
    return reports, tables, {}


def _run_cross_arch(wb: Workbench):
    clf = wb.classifier()
    reports = {}
    for arch in wb.config.attacker_archs:
        model = wb.suspect_me(arch=arch)
        reports[f"ME[{arch}]"] = wb.verify_model(clf, model, f"xarch-{arch}")
    tables = {"confidences": {k: r.confidence_score for k, r in reports.items()}}
    return reports, tables, {}


def _run_generations(wb: Workbench):
    clf = wb.classifier()
    extractor = wb.fid_extractor()
    target = wb.target()
    chain = wb.chain()
    reports, rows = {}, []
    target_samples = wb.samples_from(target, 1000, "fid-gen-target")
    for gen, model in enumerate(chain, 1):
        name = f"G^({gen})"
        reports[name] = wb.verify_model(clf, model, f"gen{gen}")
        gen_samples = wb.samples_from(model, 1000, f"fid-gen{gen}")
        rows.append({
            "generation": gen,
            "confidence": reports[name].confidence_score,
            "decision": reports[name].decision,
            "fid_to_data": fid(gen_samples, wb.split.part_i, extractor).value,
            "fid_to_target": fid(gen_samples, target_samples, extractor).value,
        })
    tables = {"generations": rows, "fid_extractor": extractor.extractor_id}
    return reports, tables, {}


def _run_sample_count_sweep(wb: Workbench):
    clf = wb.classifier()
    cfg = wb.config
    pool = wb.samples_from(wb.suspect_ps(), cfg.sweep_pool, "sweep-pool")
    bits = predict_batch(clf, pool)
    rows = []
    for m in cfg.m_grid:
        if m > cfg.sweep_pool:
            raise PreconditionError(f"m={m} exceeds sweep pool {cfg.sweep_pool}")
        subsets = len(bits) // m
        confs = [float(bits[i * m:(i + 1) * m].mean()) for i in range(subsets)]
        rows.append({"m": m, "n_subsets": subsets,
                     "mean_confidence": float(np.mean(confs)),
                     "std_confidence": float(np.std(confs))})
    reports = {"PS": wb.verify_batch(clf, pool.take(cfg.m))}
    return reports, {"sweep": rows}, {}


def _run_adaptive_I(wb: Workbench):
    clf = wb.classifier()
    cfg = wb.config
    target = wb.target()
    key = {**wb._base_key(), "role": "adaptive1-snapshots"}
    final, snapshot_models = wb.cache.model_with_snapshots(
        key, lambda: extract_with_snapshots(
            target, cfg.n_query, cfg.arch, wb._gan_config("adaptive1")))
    extractor = wb.fid_extractor()
    victim_samples = wb.samples_from(target, 1000, "adaptive1-victim")
    reports, rows = {}, []
    for model in snapshot_models:
        step = int(model.tag.rsplit("@", 1)[1])
        batch = wb.samples_from(model, max(cfg.m, 1000), f"adaptive1-snap{step}")
        report = wb.verify_batch(clf, batch.take(cfg.m))
        fid_value = fid(batch.take(1000), victim_samples, extractor).value
        reports[f"snap@{step}"] = report
        rows.append({"step": step, "confidence": report.confidence_score,
                     "decision": report.decision, "fid_to_target": fid_value})
    tables = {"snapshots": rows, "fid_extractor": extractor.extractor_id}
    return reports, tables, {}


def _run_adaptive_II(wb: Workbench):
    clf = wb.classifier()
    cfg = wb.config
    reports, rows = {}, []
    for base_name, model in (("PS", wb.suspect_ps()), ("ME", wb.suspect_me())):
        base_batch = wb.samples_from(model, cfg.m, f"adaptive2-base-{base_name}")
        for strategy in cfg.strategies:
            batch = adaptive_attack_II(base_batch, strategy,
                                       seed=wb.seeds.stream(f"adaptive2-{base_name}-{strategy}"))
            name = f"{base_name}+AdaII-{strategy}"
            reports[name] = wb.verify_batch(clf, batch)
            rows.append({
                "base": base_name, "strategy": strategy,
                "magnitudes": ADAPTIVE_II_STRATEGIES[strategy],
                "confidence": reports[name].confidence_score,
                "decision": reports[name].decision,
                "mean_ssim": mean_ssim(base_batch, batch),
            })
    return reports, {"strategies": rows}, {}


_RUNNERS = {
    "verification": _run_verification,
    "obfuscation_sweep": _run_obfuscation_sweep,
    "finetune": _run_finetune,
    "cross_arch_extraction": _run_cross_arch,
    "generations": _run_generations,
    "sample_count_sweep": _run_sample_count_sweep,
    "adaptive_I": _run_adaptive_I,
    "adaptive_II": _run_adaptive_II,
}


def run_experiment(config: ExperimentConfig, cache: ArtifactCache | None = None,
                   emit: bool = True) -> ExperimentRecord:
    """Execute one experiment kind end to end and persist its record."""
    start = time.time()
    wb = Workbench(config, cache=cache)
    reports, tables, extras = _RUNNERS[config.kind](wb)
    record = ExperimentRecord(
        kind=config.kind, config=config.to_dict(), config_hash=config.config_hash(),
        reports=reports, tables=tables, figure_paths=[],
        wall_time_s=time.time() - start, out_dir=config.out_dir,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "features" in extras:
        np.savez_compressed(out / "features.npz", features=extras["features"],
                            labels=np.array(extras["feature_labels"]))
    if emit:
        from .figures import emit_figures
        record.figure_paths = [str(p) for p in emit_figures(record)]
    record.save()
    return record
