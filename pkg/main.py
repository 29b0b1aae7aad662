"""
Command-line entry point for the skeleton augmentation toolkit.

    python main.py prepare --dataset msr --root /data/MSRAction3D --out cd.txt
    python main.py train-gan --in train.txt --out gan.ckpt --hidden 512
    python main.py run-recipe table1 --out runs/table1

Options may also come from a KEY=value file given with --config; flags on
the command line win over the file, and the file wins over built-in defaults.
"""

import argparse
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

import config
from augment.classical import AugmentPolicy, augment_dataset, default_joint_range
from data.normalized import export_normalized, import_normalized
from data.splits import SplitSpec, split
from errors import EXIT_OK, EXIT_OTHER, EXIT_USAGE, UsageError, exit_code_for
from evaluation.metrics import diversity
from evaluation.search import GridSpec, best_policy, run_grid, write_grid_table, write_grid_timings
from evaluation.viz import embed_latents, write_points_csv
from gan.trainer import GanModel, GanTrainConfig, generate, load_gan, save_gan, train
from pipeline.manifest import RunManifest, load_manifest, recorded_run
from pipeline.recipes import RECIPES, RecipeConfig, prepare, run_recipe
from recognition.models import RecognizerSpec, build
from recognition.training import (
    TrainSchedule,
    evaluate,
    extract_latents,
    load_recognizer,
    save_recognizer,
    train_recognizer,
)

logger = logging.getLogger("skelaug")


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name, None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command} needs {', '.join(missing)}")


def _joint_range(text: Optional[str], dataset_name: str, joints: int):
    if not text:
        low, high = default_joint_range(dataset_name)
        return low, min(high, joints)
    try:
        low, high = (int(v) for v in text.split(":"))
    except ValueError as e:
        raise UsageError(f"--joints expects MIN:MAX, got '{text}'") from e
    return low, high


def _int_list(text: Optional[str]) -> Optional[List[int]]:
    if not text:
        return None
    return [int(v) for v in text.split(",") if v.strip()]


def _export(dataset, path: str, manifest: RunManifest) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    export_normalized(dataset, path)
    manifest.add_artifact(path)
    print(f"✓ Wrote {len(dataset)} sequences to {path}")


def _load(path: str, manifest: RunManifest):
    manifest.add_input(path)
    return import_normalized(path)


def cmd_prepare(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "dataset")
    manifest.seeds = [args.seed]
    with manifest.stage("prepare"):
        clean = prepare(args.dataset, args.root, args.label_mode, args.seed, args.toy_per_class, args.toy_length)
    if args.out:
        _export(clean, args.out, manifest)
    if args.split:
        _require(args, "train_out", "val_out")
        root = args.root or ""
        spec = SplitSpec(
            mode=args.split,
            train_list=args.train_list or (os.path.join(root, "train_gestures.txt") if args.split == "predefined" else None),
            val_list=args.val_list or (os.path.join(root, "test_gestures.txt") if args.split == "predefined" else None),
            train_subjects=_int_list(args.train_subjects),
            ratio=args.ratio,
            seed=args.seed,
        )
        train_set, val_set = split(clean, spec)
        _export(train_set, args.train_out, manifest)
        _export(val_set, args.val_out, manifest)
    if not args.out and not args.split:
        raise UsageError("prepare needs --out and/or --split with --train-out/--val-out")


def cmd_augment_classical(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "in_path", "out")
    dataset = _load(args.in_path, manifest)
    joint_min, joint_max = _joint_range(args.joints, dataset.name, dataset.num_joints)
    policy = AugmentPolicy(
        sigma_scale=args.sigma_scale,
        sigma_shift=args.sigma_shift,
        sigma_noise=args.sigma_noise,
        joint_min=joint_min,
        joint_max=joint_max,
        multiplier=args.multiplier,
        seed=args.seed,
        include_originals=args.include_originals,
        pin_knots=args.pin_knots,
    )
    manifest.seeds = [args.seed]
    with manifest.stage("augment"):
        augmented = augment_dataset(dataset, policy)
    _export(augmented, args.out, manifest)


def cmd_train_gan(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "in_path", "out")
    dataset = _load(args.in_path, manifest)
    cfg = GanTrainConfig(
        hidden=args.hidden,
        batch_size=args.batch,
        max_epochs=args.max_epochs,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        noise_sigma=args.noise_sigma,
        checkpoint_every=args.checkpoint_every,
        checkpoint_path=args.out if args.checkpoint_every else None,
        dump_dir=os.path.dirname(os.path.abspath(args.out)),
        seed=args.seed,
    )
    manifest.seeds = [args.seed]
    with manifest.stage("train-gan"):
        model, history = train(GanModel.initialize(dataset.width, cfg), dataset, cfg)
    save_gan(model, args.out, length=dataset.length)
    manifest.add_artifact(args.out)
    if history:
        print(f"✓ GAN trained for {model.epoch} epochs (objective {history[0].total:.4f} → {history[-1].total:.4f})")


def cmd_generate(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "ckpt", "in_path", "out")
    manifest.add_input(args.ckpt)
    model, _ = load_gan(args.ckpt)
    dataset = _load(args.in_path, manifest)
    manifest.seeds = [args.seed]
    with manifest.stage("generate"):
        synthetic = generate(model, dataset, args.per_sample, seed=args.seed, sampling_noise=not args.no_sampling_noise)
    _export(synthetic, args.out, manifest)


def cmd_train_recognizer(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "train", "val", "out")
    train_set = _load(args.train, manifest)
    val_set = _load(args.val, manifest)
    spec = RecognizerSpec(
        kind=args.kind,
        num_classes=train_set.num_classes,
        length=train_set.length,
        width=train_set.width,
        hidden=args.hidden,
        latent=args.latent,
        seed=args.seed,
    )
    schedule = TrainSchedule(lr=args.lr, batch_size=args.batch, max_epochs=args.max_epochs, seed=args.seed)
    manifest.seeds = [args.seed]
    with manifest.stage("train-recognizer"):
        trained = train_recognizer(build(spec), train_set, val_set, schedule)
    save_recognizer(trained, args.out, {"train_checksum": train_set.checksum(), "val_checksum": val_set.checksum()})
    manifest.add_artifact(args.out)
    best = trained.best()
    print(f"✓ {args.kind} recognizer: {trained.stopped_epoch} epochs, best val acc {best.val_acc:.4f}")


def cmd_evaluate(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "ckpt", "data", "report")
    manifest.add_input(args.ckpt)
    trained = load_recognizer(args.ckpt)
    dataset = _load(args.data, manifest)
    with manifest.stage("evaluate"):
        report = evaluate(trained.recognizer, dataset)
    lines = [
        f"checkpoint\t{args.ckpt}",
        f"data\t{args.data}",
        f"data_checksum\t{dataset.checksum()}",
        f"count\t{report.count}",
        f"accuracy\t{report.accuracy!r}",
        f"loss\t{report.loss!r}",
    ]
    if trained.history:
        lines.append(f"diversity\t{diversity(trained)!r}")
    lines += [f"class_{label}\t{acc!r}\t{report.class_counts[label]}" for label, acc in sorted(report.per_class.items())]
    with open(args.report, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    manifest.add_artifact(args.report)
    print(f"✓ Accuracy {report.accuracy:.4f} on {report.count} sequences ({args.report})")


def cmd_grid_search(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "grid", "dataset", "out")
    manifest.add_input(args.grid)
    settings = config.read_config_file(args.grid)
    if args.kind:
        settings["KIND"] = args.kind
    grid = GridSpec.from_settings(settings)
    dataset = _load(args.dataset, manifest)
    if args.val:
        train_set, val_set = dataset, _load(args.val, manifest)
    else:
        train_set, val_set = split(dataset, SplitSpec(mode="subject"))
    manifest.seeds = list(grid.seeds)
    os.makedirs(args.out, exist_ok=True)
    with manifest.stage("grid"):
        result = run_grid(train_set, val_set, grid, jobs=args.jobs)
    table = os.path.join(args.out, "grid.tsv")
    write_grid_table(result, table)
    manifest.add_artifact(table)
    timings = os.path.join(args.out, "grid-timings.tsv")
    write_grid_timings(result, timings)
    manifest.add_artifact(timings, deterministic=False)
    if result.points:
        policy = best_policy(result)
        best_path = os.path.join(args.out, "best-policy.env")
        with open(best_path, "w", encoding="utf-8") as handle:
            handle.write(
                f"SIGMA_SCALE={policy.sigma_scale!r}\nSIGMA_SHIFT={policy.sigma_shift!r}\nSIGMA_NOISE={policy.sigma_noise!r}\n"
            )
        manifest.add_artifact(best_path)
        print(f"✓ {len(result.points)}/{result.expected_points} points, best index {result.best_index} "
              f"(σ = {policy.sigma_scale}, {policy.sigma_shift}, {policy.sigma_noise})")


def cmd_visualize(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "ckpt", "data", "out")
    manifest.add_input(args.ckpt)
    trained = load_recognizer(args.ckpt)
    dataset = _load(args.data, manifest)
    manifest.seeds = [args.seed]
    with manifest.stage("latents"):
        latents, labels = extract_latents(trained.recognizer, dataset)
    with manifest.stage("embed"):
        embedding = embed_latents(
            latents, labels, pca_keep=args.pca_keep, perplexity=args.perplexity,
            iterations=args.iterations, seed=args.seed,
        )
    write_points_csv(embedding, args.out)
    manifest.add_artifact(args.out)
    print(f"✓ Embedded {len(labels)} latents (PCA {embedding.pca_keep}, final KL {embedding.final_kl})")


def cmd_run_recipe(args: argparse.Namespace, manifest: RunManifest) -> None:
    _require(args, "recipe", "out")
    fields = {
        "name": args.recipe,
        "out_dir": args.out,
        "train_path": args.train,
        "val_path": args.val,
        "jobs": args.jobs,
    }
    optional = {
        "kinds": args.kinds.split(",") if args.kinds else None,
        "seeds": _int_list(args.seeds),
        "recognizer_hidden": args.recognizer_hidden,
        "recognizer_latent": args.recognizer_latent,
        "recognizer_epochs": args.recognizer_epochs,
        "gan_batch": args.gan_batch,
        "toy_per_class": args.toy_per_class,
        "toy_length": args.toy_length,
        "gan_hidden": args.gan_hidden,
        "gan_epochs": args.gan_epochs,
        "per_sample": args.per_sample,
        "withheld": args.withheld,
        "ablation_hidden": _int_list(args.ablation_hidden),
    }
    fields.update({key: value for key, value in optional.items() if value is not None})
    run_recipe(RecipeConfig(**fields), manifest)


def _without_manifest_flag(tokens: List[str]) -> List[str]:
    """Drop "--manifest FILE" and "--manifest=FILE" from a recorded command."""
    command = []
    skip = False
    for token in tokens:
        if skip:
            skip = False
            continue
        if token == "--manifest":
            skip = True
            continue
        if token.startswith("--manifest="):
            continue
        command.append(token)
    return command


def cmd_replay(args: argparse.Namespace, manifest: Optional[RunManifest]) -> int:
    _require(args, "manifest_file")
    recorded = load_manifest(args.manifest_file)
    command = _without_manifest_flag(recorded.command)
    replay_path = os.path.splitext(args.manifest_file)[0] + ".replay.json"
    code = main(["--manifest", replay_path] + command)
    if code != EXIT_OK:
        print(f"❌ Replayed command failed with exit code {code}")
        return code
    replayed = load_manifest(replay_path)
    mismatches = []
    for artifact in recorded.artifacts:
        if not artifact.deterministic:
            continue
        again = replayed.artifact(artifact.path)
        if again is None or again.sha256 != artifact.sha256:
            mismatches.append(artifact.path)
    if mismatches:
        for path in mismatches:
            print(f"❌ Checksum mismatch: {path}")
        return EXIT_OTHER
    print(f"✓ Replay reproduced {sum(a.deterministic for a in recorded.artifacts)} artifact checksums")
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "prepare": cmd_prepare,
    "augment-classical": cmd_augment_classical,
    "train-gan": cmd_train_gan,
    "generate": cmd_generate,
    "train-recognizer": cmd_train_recognizer,
    "evaluate": cmd_evaluate,
    "grid-search": cmd_grid_search,
    "visualize": cmd_visualize,
    "run-recipe": cmd_run_recipe,
    "replay": cmd_replay,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="skelaug", description="Skeleton motion data augmentation toolkit")
    parser.add_argument("--jobs", type=int, default=config.JOBS, help="worker process cap")
    parser.add_argument("--config", help="KEY=value settings file")
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    parser.add_argument("--manifest", help="where to write the run manifest")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands = {}

    p = sub.add_parser("prepare", help="smooth and pad a raw dataset into clean data")
    p.add_argument("--dataset", choices=["shrec", "shrec17", "msr", "msr3d", "toy"])
    p.add_argument("--root")
    p.add_argument("--label-mode", type=int, choices=[14, 28], default=14)
    p.add_argument("--out")
    p.add_argument("--split", choices=["predefined", "subject", "ratio"])
    p.add_argument("--train-list")
    p.add_argument("--val-list")
    p.add_argument("--train-subjects", help="comma-separated subject ids")
    p.add_argument("--ratio", type=float)
    p.add_argument("--train-out")
    p.add_argument("--val-out")
    p.add_argument("--toy-per-class", type=int, default=20)
    p.add_argument("--toy-length", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    commands["prepare"] = p

    p = sub.add_parser("augment-classical", help="expand a dataset with the classical transforms")
    p.add_argument("--in", dest="in_path")
    p.add_argument("--out")
    p.add_argument("--sigma-scale", type=float, default=0.1)
    p.add_argument("--sigma-shift", type=float, default=0.1)
    p.add_argument("--sigma-noise", type=float, default=0.1)
    p.add_argument("--joints", help="MIN:MAX joints receiving noise")
    p.add_argument("--multiplier", type=int, default=config.AUG_MULTIPLIER)
    p.add_argument("--include-originals", action="store_true")
    p.add_argument("--pin-knots", action="store_true", help="keep original frames at integer time positions")
    p.add_argument("--seed", type=int, default=0)
    commands["augment-classical"] = p

    p = sub.add_parser("train-gan", help="train the sequence CycleGAN")
    p.add_argument("--in", dest="in_path")
    p.add_argument("--out")
    p.add_argument("--hidden", type=int, default=config.GAN_HIDDEN)
    p.add_argument("--batch", type=int, default=config.GAN_BATCH)
    p.add_argument("--lambda1", type=float, default=config.GAN_LAMBDA_CYCLE)
    p.add_argument("--lambda2", type=float, default=config.GAN_LAMBDA_IDENTITY)
    p.add_argument("--noise-sigma", type=float, default=config.GAN_NOISE_SIGMA)
    p.add_argument("--max-epochs", type=int, default=config.GAN_MAX_EPOCHS)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    commands["train-gan"] = p

    p = sub.add_parser("generate", help="sample synthetic sequences from a trained GAN")
    p.add_argument("--ckpt")
    p.add_argument("--in", dest="in_path")
    p.add_argument("--out")
    p.add_argument("--per-sample", type=int, default=config.GAN_PER_SAMPLE)
    p.add_argument("--no-sampling-noise", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    commands["generate"] = p

    p = sub.add_parser("train-recognizer", help="train an LSTM or CNN recognizer")
    p.add_argument("--kind", choices=["lstm", "cnn"], default="lstm")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--out")
    p.add_argument("--hidden", type=int, default=config.LSTM_HIDDEN)
    p.add_argument("--latent", type=int, default=config.LATENT_DIM)
    p.add_argument("--lr", type=float, default=config.RECOGNIZER_LR)
    p.add_argument("--batch", type=int, default=config.RECOGNIZER_BATCH)
    p.add_argument("--max-epochs", type=int, default=config.RECOGNIZER_MAX_EPOCHS)
    p.add_argument("--seed", type=int, default=0)
    commands["train-recognizer"] = p

    p = sub.add_parser("evaluate", help="score a recognizer checkpoint")
    p.add_argument("--ckpt")
    p.add_argument("--data")
    p.add_argument("--report")
    commands["evaluate"] = p

    p = sub.add_parser("grid-search", help="search the classical σ hyperparameters")
    p.add_argument("--grid")
    p.add_argument("--dataset", help="training split (or full set, split by subject when --val is absent)")
    p.add_argument("--val")
    p.add_argument("--kind", choices=["lstm", "cnn"])
    p.add_argument("--out")
    commands["grid-search"] = p

    p = sub.add_parser("visualize", help="PCA + t-SNE of recognizer latents")
    p.add_argument("--ckpt")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--pca-keep", type=int, default=config.PCA_KEEP)
    p.add_argument("--perplexity", type=float, default=config.TSNE_PERPLEXITY)
    p.add_argument("--iterations", type=int, default=config.TSNE_ITERATIONS)
    p.add_argument("--seed", type=int, default=0)
    commands["visualize"] = p

    p = sub.add_parser("run-recipe", help="run an experiment recipe end to end")
    p.add_argument("recipe", nargs="?", choices=RECIPES)
    p.add_argument("--out")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--kinds", help="comma-separated recognizer kinds")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--recognizer-hidden", type=int)
    p.add_argument("--recognizer-latent", type=int)
    p.add_argument("--recognizer-epochs", type=int)
    p.add_argument("--gan-hidden", type=int)
    p.add_argument("--gan-epochs", type=int)
    p.add_argument("--gan-batch", type=int)
    p.add_argument("--toy-per-class", type=int, help="toy dataset size when --train/--val are absent")
    p.add_argument("--toy-length", type=int)
    p.add_argument("--per-sample", type=int)
    p.add_argument("--withheld", type=int)
    p.add_argument("--ablation-hidden", help="comma-separated GAN widths")
    commands["run-recipe"] = p

    p = sub.add_parser("replay", help="re-run a recorded command and compare artifact checksums")
    p.add_argument("--manifest", dest="manifest_file")
    commands["replay"] = p
    return parser, commands


def apply_config_file(parser: argparse.ArgumentParser, command: argparse.ArgumentParser, settings: Dict[str, str]) -> None:
    """Install file settings as parser defaults, below command-line flags."""
    for key, raw in settings.items():
        dest = key.lower().replace("-", "_")
        if dest == "in":
            dest = "in_path"
        target = None
        for candidate in (command, parser):
            action = next((a for a in candidate._actions if a.dest == dest), None)
            if action is not None:
                target = (candidate, action)
                break
        if target is None:
            logger.warning("Ignoring unknown config setting %s", key)
            continue
        candidate, action = target
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            value = raw
        candidate.set_defaults(**{dest: value})


def _default_manifest_path(args: argparse.Namespace) -> str:
    if args.command in ("grid-search", "run-recipe"):
        return os.path.join(args.out, "manifest.json")
    target = getattr(args, "out", None) or getattr(args, "report", None) or getattr(args, "train_out", None)
    return f"{target}.manifest.json" if target else f"{args.command}.manifest.json"


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        if args.config:
            apply_config_file(parser, commands[args.command], config.read_config_file(args.config))
            args = parser.parse_args(argv)
        logging.basicConfig(level=str(args.log_level).upper(), format="%(message)s")

        if args.command == "replay":
            return cmd_replay(args, None)
        _require(args, *(("out",) if args.command in ("grid-search", "run-recipe") else ()))
        with recorded_run(args.manifest or _default_manifest_path(args), argv, vars(args)) as manifest:
            COMMANDS[args.command](args, manifest)
        return EXIT_OK
    except (ValidationError, FileNotFoundError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
