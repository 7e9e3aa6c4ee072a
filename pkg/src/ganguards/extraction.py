"""Model extraction: retrain a substitute on a victim's generated samples.

The attacker never sees real training data; the substitute's training set
consists solely of samples queried from the victim, drawn on a seed stream
independent of the defender's.
"""

from __future__ import annotations

import logging
from dataclasses import replace

from .data import sample_prior
from .errors import PreconditionError, TrainingDivergedError
from .gan import GeneratorModel, TrainConfig, sample, train_gan
from .seeds import derive_seed

log = logging.getLogger(__name__)


def extract_model(
    victim: GeneratorModel,
    query_budget: int,
    attacker_arch: str,
    config: TrainConfig,
) -> GeneratorModel:
    """Train a substitute generator on ``query_budget`` victim samples."""
    if query_budget < config.batch_size:
        raise PreconditionError(
            f"query budget {query_budget} smaller than batch size {config.batch_size}"
        )
    query_seed = derive_seed(config.seed, f"attacker-queries:{victim.model_id}")
    queries = sample_prior(query_budget, victim.latent_dim, query_seed)
    stolen_samples = sample(victim, queries)

    model, _ = train_gan(
        stolen_samples,
        attacker_arch,
        config,
        role="substitute",
        parent_id=victim.model_id,
        generation_index=victim.lineage.generation_index + 1,
        data_ref=f"samples:{victim.model_id}:{query_budget}",
        latent_dim=victim.latent_dim,
        tag=f"{victim.tag}/ME",
    )
    return model


def extract_with_snapshots(
    victim: GeneratorModel,
    query_budget: int,
    attacker_arch: str,
    config: TrainConfig,
):
    """Like ``extract_model`` but keeps the training snapshots (adaptive attack I)."""
    if query_budget < config.batch_size:
        raise PreconditionError(
            f"query budget {query_budget} smaller than batch size {config.batch_size}"
        )
    query_seed = derive_seed(config.seed, f"attacker-queries:{victim.model_id}")
    stolen_samples = sample(victim, sample_prior(query_budget, victim.latent_dim, query_seed))
    return train_gan(
        stolen_samples, attacker_arch, config,
        role="substitute", parent_id=victim.model_id,
        generation_index=victim.lineage.generation_index + 1,
        data_ref=f"samples:{victim.model_id}:{query_budget}",
        latent_dim=victim.latent_dim, tag=f"{victim.tag}/ME",
    )


def extraction_chain(
    root: GeneratorModel,
    generations: int,
    query_budget: int,
    attacker_arch: str,
    config: TrainConfig,
) -> list[GeneratorModel]:
    """Repeated extraction: model i is extracted from model i-1.

    On divergence the chain stops early and the completed prefix is
    returned; callers can detect truncation from the list length.
    """
    if generations < 1:
        raise PreconditionError(f"generations must be >= 1, got {generations}")
    models = []
    victim = root
    for gen in range(1, generations + 1):
        gen_config = replace(config, seed=derive_seed(config.seed, f"chain-gen:{gen}"))
        try:
            substitute = extract_model(victim, query_budget, attacker_arch, gen_config)
        except TrainingDivergedError as exc:
            log.warning("extraction chain aborted at generation %d: %s", gen, exc)
            break
        models.append(substitute)
        victim = substitute
    return models
