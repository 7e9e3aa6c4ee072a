"""Command-line interface.

Every subcommand accepts --seed, --config <json>, and --out <dir>; values
from --config fill in defaults, explicit flags win. Exit codes: 0 success,
2 precondition violation (including missing paths), 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import CorruptArtifactError, PreconditionError, TrainingDivergedError

log = logging.getLogger("ganguards")


def _common(parser):
    parser.add_argument("--seed", type=int, default=None, help="global seed")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with defaults for this subcommand")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def _merge_config(args):
    """Fill unset args from the --config JSON document."""
    if args.config is None:
        return args
    doc = json.loads(Path(args.config).read_text())
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) in (None, argparse.SUPPRESS) and hasattr(args, attr):
            setattr(args, attr, value)
    return args


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganguards",
                                     description="GAN ownership protection workbench")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate a procedural dataset (optionally split)")
    _common(p)
    p.add_argument("--family", default="blobs")
    p.add_argument("--count", type=int, default=3000)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--split", action="store_true", help="persist a three-way split")

    p = sub.add_parser("train-gan", help="train a generator on a PNG folder")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--arch", default="gan-a")
    p.add_argument("--steps", type=int, default=1200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--snapshot-every", type=int, default=300)
    p.add_argument("--role", default="independent")
    p.add_argument("--tag", default="")

    p = sub.add_parser("extract", help="model-extraction attack against a saved generator")
    _common(p)
    p.add_argument("--victim", type=Path, required=True)
    p.add_argument("--arch", default="gan-a")
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--steps", type=int, default=1200)
    p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("chain", help="chained extraction across generations")
    _common(p)
    p.add_argument("--victim", type=Path, required=True)
    p.add_argument("--generations", type=int, default=3)
    p.add_argument("--arch", default="gan-a")
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--steps", type=int, default=1200)
    p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("build-protection", help="train the ownership detector")
    _common(p)
    p.add_argument("--target", type=Path, required=True)
    p.add_argument("--ind-data", type=Path, required=True)
    p.add_argument("--n", type=int, default=5_000)
    p.add_argument("--n-query", type=int, default=10_000)
    p.add_argument("--steps", type=int, default=1200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=5)

    p = sub.add_parser("verify", help="verify a suspect from generated samples")
    _common(p)
    p.add_argument("--classifier", type=Path, required=True)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--tau", type=float, default=0.90)
    p.add_argument("--m", type=int, default=1000)

    p = sub.add_parser("attack", help="apply an obfuscation to a PNG folder")
    _common(p)
    p.add_argument("--kind", required=True,
                   choices=["oup_a_noise", "oup_b_filter", "oup_c_blur", "oup_d_jpeg",
                            "input_perturb", "adaptive_II", "overwrite"])
    p.add_argument("--samples", type=Path)
    p.add_argument("--model", type=Path, help="generator dir (input_perturb)")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--magnitude", type=float)
    p.add_argument("--strategy", choices=["I", "II", "III"])

    p = sub.add_parser("metrics", help="compute FID or SSIM")
    _common(p)
    p.add_argument("metric", choices=["fid", "ssim"])
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.add_argument("--extractor", default="family", choices=["family", "pixel"])

    p = sub.add_parser("experiment", help="run a configured experiment")
    _common(p)
    p.add_argument("action", choices=["run"])

    p = sub.add_parser("plot", help="re-emit figures for a saved record")
    _common(p)
    p.add_argument("--record", type=Path, required=True)

    return parser


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------

def _require(path: Path, what: str) -> Path:
    if path is None or not Path(path).exists():
        raise PreconditionError(f"{what} not found: {path}")
    return Path(path)


def _load_samples(path: Path):
    from .data import load_image_folder
    return load_image_folder(_require(path, "samples directory"))


def _cmd_make_data(args):
    from .data import make_procedural_dataset, save_image_batch, save_dataset_split, split_three_way
    seed = args.seed or 0
    out = args.out or Path("data")
    batch = make_procedural_dataset(args.family, args.count, seed,
                                    size=args.size, channels=args.channels)
    if args.split:
        split = split_three_way(batch, seed)
        save_dataset_split(split, out, seed=seed)
        print(f"wrote split of {args.count} {args.family} images to {out}")
    else:
        save_image_batch(batch, out)
        print(f"wrote {args.count} {args.family} images to {out}")
    return 0


def _cmd_train_gan(args):
    from .gan import TrainConfig, save_model, train_gan
    data = _load_samples(args.data)
    config = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                         snapshot_every=args.snapshot_every, seed=args.seed or 0)
    model, _ = train_gan(data, args.arch, config, role=args.role, tag=args.tag)
    out = args.out or Path("model")
    save_model(model, out)
    print(f"trained {args.arch} on {data.count} images -> {out} (id {model.model_id})")
    return 0


def _cmd_extract(args):
    from .extraction import extract_model
    from .gan import TrainConfig, load_model, save_model
    victim = load_model(_require(args.victim, "victim model"))
    config = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                         snapshot_every=min(300, args.steps), seed=args.seed or 0)
    substitute = extract_model(victim, args.budget, args.arch, config)
    out = args.out or Path("substitute")
    save_model(substitute, out)
    print(f"extracted {args.arch} substitute (budget {args.budget}) -> {out}")
    return 0


def _cmd_chain(args):
    from .extraction import extraction_chain
    from .gan import TrainConfig, load_model, save_model
    victim = load_model(_require(args.victim, "victim model"))
    config = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                         snapshot_every=min(300, args.steps), seed=args.seed or 0)
    models = extraction_chain(victim, args.generations, args.budget, args.arch, config)
    out = args.out or Path("chain")
    for model in models:
        save_model(model, Path(out) / f"generation-{model.lineage.generation_index}")
    print(f"chain of {len(models)} generation(s) -> {out}")
    return 0 if len(models) == args.generations else 3


def _cmd_build_protection(args):
    from .gan import TrainConfig, load_model
    from .protection import Budgets, ClassifierConfig, build_protection, save_classifier
    target = load_model(_require(args.target, "target model"))
    ind_data = _load_samples(args.ind_data)
    clf = build_protection(
        target, ind_data, Budgets(n_query=args.n_query, n=args.n),
        ClassifierConfig(epochs=args.epochs, seed=args.seed or 0),
        TrainConfig(steps=args.steps, batch_size=args.batch_size,
                    snapshot_every=min(300, args.steps), seed=args.seed or 0),
    )
    out = args.out or Path("classifier")
    save_classifier(clf, out)
    acc = clf.manifest.get("fresh_sample_accuracy")
    print(f"detector built (fresh-sample accuracy {acc}) -> {out}")
    return 0


def _cmd_verify(args):
    from .protection import load_classifier, perform_verification
    clf = load_classifier(_require(args.classifier, "classifier"))
    samples = _load_samples(args.samples)
    report = perform_verification(clf, samples, args.tau, args.m)
    verdict = "STOLEN" if report.decision == 1 else "honest"
    print(f"confidence {report.confidence_score:.4f} (tau {args.tau}) -> {verdict}")
    out = args.out or Path("reports")
    path = report.save(Path(out) / "verification_report.json")
    print(f"report written to {path}")
    return 0


def _cmd_attack(args):
    from .data import save_image_batch
    from .obfuscation import (adaptive_attack_II, input_perturb, output_perturb,
                              overwrite_attack)
    seed = args.seed or 0
    out = args.out or Path("attacked")
    if args.kind == "overwrite":
        record = overwrite_attack()
        print(json.dumps(record.to_dict(), indent=2))
        return 0
    if args.kind == "input_perturb":
        from .gan import load_model
        model = load_model(_require(args.model, "generator"))
        batch = input_perturb(model, args.count, seed)
    elif args.kind == "adaptive_II":
        if args.strategy is None:
            raise PreconditionError("adaptive_II requires --strategy")
        batch = adaptive_attack_II(_load_samples(args.samples), args.strategy, seed=seed)
    else:
        if args.magnitude is None:
            raise PreconditionError(f"{args.kind} requires --magnitude")
        kind = args.kind.split("_")[1]  # oup_a_noise -> a
        batch = output_perturb(_load_samples(args.samples), kind, args.magnitude, seed=seed)
    save_image_batch(batch, out)
    print(f"wrote {batch.count} perturbed images ({batch.provenance}) to {out}")
    return 0


def _cmd_metrics(args):
    if args.metric == "fid":
        from .harness import ArtifactCache
        from .metrics import PixelPoolExtractor, fid, train_fid_extractor
        a, b = _load_samples(args.a), _load_samples(args.b)
        if args.extractor == "pixel":
            extractor = PixelPoolExtractor()
        else:
            cache = ArtifactCache()
            extractor = cache.fid_extractor(
                {"resolution": a.resolution, "channels": a.channels, "seed": 0},
                lambda: train_fid_extractor(a.resolution, a.channels, seed=0))
        result = fid(a, b, extractor)
        print(json.dumps({"fid": result.value, "extractor": result.feature_extractor_id,
                          "count_a": result.count_a, "count_b": result.count_b}, indent=2))
    else:
        from .metrics import mean_ssim
        a, b = _load_samples(args.a), _load_samples(args.b)
        print(json.dumps({"mean_ssim": mean_ssim(a, b)}, indent=2))
    return 0


def _cmd_experiment(args):
    from .harness import ExperimentConfig, run_experiment
    config = ExperimentConfig.from_json_file(_require(args.config, "experiment config"))
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = str(args.out)
    record = run_experiment(config)
    print(f"experiment {config.kind} done in {record.wall_time_s:.1f}s; "
          f"record at {Path(config.out_dir) / 'record.json'}")
    for name, report in record.reports.items():
        print(f"  {name:24s} confidence {report.confidence_score:.4f} "
              f"decision {report.decision}")
    return 0


def _cmd_plot(args):
    from .figures import emit_figures
    from .harness import ExperimentRecord
    from .protection import VerificationReport
    record_dir = _require(args.record, "record directory")
    doc = json.loads((Path(record_dir) / "record.json").read_text())
    record = ExperimentRecord(
        kind=doc["kind"], config=doc["config"], config_hash=doc["config_hash"],
        reports={k: VerificationReport(**v) for k, v in doc["reports"].items()},
        tables=doc["tables"], figure_paths=doc.get("figure_paths", []),
        wall_time_s=doc.get("wall_time_s", 0.0), out_dir=str(record_dir),
    )
    paths = emit_figures(record)
    print("\n".join(str(p) for p in paths))
    return 0


_COMMANDS = {
    "make-data": _cmd_make_data,
    "train-gan": _cmd_train_gan,
    "extract": _cmd_extract,
    "chain": _cmd_chain,
    "build-protection": _cmd_build_protection,
    "verify": _cmd_verify,
    "attack": _cmd_attack,
    "metrics": _cmd_metrics,
    "experiment": _cmd_experiment,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _merge_config(args) if args.command != "experiment" else args
        return _COMMANDS[args.command](args)
    except (PreconditionError, CorruptArtifactError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        stage = f" (stage: {exc.stage})" if exc.stage else ""
        print(f"training diverged{stage}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
