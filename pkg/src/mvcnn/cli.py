"""Command-line entry point: preprocessing, training, evaluation, sweeps,
gradient checks, synthetic data generation and offload simulation.

Every verb accepts --seed; every results file starts with a '#' comment
carrying the fully resolved flag set, so any run can be reproduced from
its output alone. Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

import os

# cap BLAS parallelism before numpy initializes its thread pools
_threads = os.environ.get("MVCNN_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio import AudioClip, SilenceConfig
from .errors import MvcnnError
from .evaluation import (
    METHOD_NAMES,
    PipelineConfig,
    SweepSpec,
    SyntheticSpec,
    clip_frame_features,
    generate_synthetic,
    load_manifest,
    prepare_fold,
    run_cv,
    run_sweep,
    save_dataset,
    stratified_fraction_split,
    tune_silence_threshold,
    write_results_csv,
)
from .model import ModelConfig, TrainConfig, build, gradient_check, load, save, train
from .spectral import highpass_butterworth
from .wasn import (
    load_scenario,
    simulate,
    train_fallback_models,
    train_server_model,
    write_records_csv,
)

WINDOW_CHOICES = (2**11, 2**12, 2**13, 2**14, 2**15)


def resolved_flags(args) -> str:
    """The verb plus every resolved flag (defaults included), sorted."""
    skip = {"func", "verb"}
    parts = [f"mvcnn {args.verb}"]
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        parts.append(f"--{key.replace('_', '-')} {value}")
    return " ".join(parts)


def add_pipeline_flags(p):
    p.add_argument("--window", type=int, default=2**14,
                   help="segment window length in samples (power of two, 2048..32768)")
    p.add_argument("--overlap", type=float, default=0.5,
                   help="segment overlap fraction in [0, 1)")
    p.add_argument("--silence-threshold", type=float, default=0.03,
                   help="RMS silence-removal threshold")
    p.add_argument("--feature-len", type=int, default=512,
                   help="bin-averaged feature vector length")
    p.add_argument("--snr", type=float, default=None,
                   help="inject Gaussian noise at this SNR (dB) before features")


def add_train_flags(p):
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--dropout", type=float, default=0.8,
                   help="dropout rate = keep probability (0.8 keeps 80%%)")
    p.add_argument("--iters", type=int, default=200, help="training iterations")
    p.add_argument("--batch", type=int, default=16, help="minibatch size")


def add_dataset_flags(p):
    p.add_argument("--manifest", type=Path, default=None,
                   help="path,label CSV of WAV clips (default: built-in synthetic set)")
    p.add_argument("--classes", type=int, default=4,
                   help="synthetic class count when no manifest is given")
    p.add_argument("--clips-per-class", type=int, default=16)
    p.add_argument("--clip-seconds", type=float, default=3.0)


def check_window(parser, window):
    if window not in WINDOW_CHOICES:
        parser.error(
            f"--window must be one of {WINDOW_CHOICES}, got {window}"
        )


def get_dataset(args):
    if args.manifest is not None:
        return load_manifest(args.manifest)
    return generate_synthetic(
        SyntheticSpec(
            n_classes=args.classes,
            clips_per_class=args.clips_per_class,
            clip_seconds=args.clip_seconds,
            seed=args.seed,
        )
    )


def get_pipeline(args) -> PipelineConfig:
    return PipelineConfig(
        window_len=args.window,
        overlap=args.overlap,
        silence=SilenceConfig(threshold=args.silence_threshold),
        feature_len=args.feature_len,
        snr_db=args.snr,
        noise_seed=args.seed,
    )


# --- verbs ---

def cmd_synth(args):
    dataset = generate_synthetic(
        SyntheticSpec(
            n_classes=args.classes,
            clips_per_class=args.clips_per_class,
            clip_seconds=args.clip_seconds,
            sample_rate=args.sample_rate,
            amplitude=args.amplitude,
            seed=args.seed,
        )
    )
    manifest = save_dataset(dataset, args.out)
    (Path(args.out) / "run_info.txt").write_text(resolved_flags(args) + "\n")
    print(f"wrote {len(dataset)} clips, manifest at {manifest}")
    return 0


def cmd_prep(args):
    dataset = get_dataset(args)
    pipeline = get_pipeline(args)
    if args.mfcc:
        pipeline = replace(pipeline, feature_kind="mfcc")
    if args.highpass is not None:
        dataset.clips = [
            highpass_butterworth(c, args.highpass) for c in dataset.clips
        ]
    per_clip = clip_frame_features(dataset, pipeline)
    clip_index = np.concatenate(
        [np.full(len(f), i, dtype=np.int64) for i, f in enumerate(per_clip)]
    ) if per_clip else np.empty(0, dtype=np.int64)
    features = np.vstack([f for f in per_clip if len(f)]) if any(
        len(f) for f in per_clip
    ) else np.empty((0, pipeline.feature_dim))
    np.savez(
        args.out,
        features=features,
        clip_index=clip_index,
        labels=dataset.labels,
        label_names=np.array(dataset.label_names),
        flags=np.array(resolved_flags(args)),
    )
    print(f"wrote {features.shape[0]} frames x {features.shape[1]} features to {args.out}")
    return 0


def cmd_train(args):
    dataset = get_dataset(args)
    pipeline = get_pipeline(args)
    per_clip = clip_frame_features(dataset, pipeline)
    train_idx, val_idx = stratified_fraction_split(
        dataset.labels, 1.0 - args.val_fraction, seed=args.seed
    )
    fold = prepare_fold(per_clip, dataset.labels, train_idx, val_idx, True)
    val_frames = [f for f in fold.test_features if len(f)]
    validation = None
    if val_frames:
        val_X = np.vstack(val_frames)
        val_y = np.concatenate([
            np.full(len(per_clip[i]), dataset.labels[i])
            for i in val_idx if len(per_clip[i])
        ])
        validation = (val_X, val_y)
    widths = (10, 15, 20) if args.arch == "multiview" else (10,)
    model = build(
        ModelConfig(
            input_len=pipeline.feature_len, n_classes=dataset.n_classes,
            view_widths=widths, keep_prob=args.dropout, seed=args.seed,
        )
    )
    history = train(
        model, fold.train_features, fold.train_labels,
        TrainConfig(args.lr, args.iters, args.batch, args.seed),
        validation=validation,
    )
    model.norm_stats = fold.stats
    save(model, args.out)
    history_path = args.history or Path(str(args.out) + ".history.csv")
    with open(history_path, "w", newline="") as fh:
        fh.write(f"# {resolved_flags(args)}\n")
        fh.write("iteration,loss,val_accuracy\n")
        for rec in history:
            val = "" if rec.val_accuracy is None else repr(rec.val_accuracy)
            fh.write(f"{rec.iteration},{rec.loss!r},{val}\n")
    final_val = next(
        (r.val_accuracy for r in reversed(history) if r.val_accuracy is not None),
        None,
    )
    print(f"saved model to {args.out}; history at {history_path}")
    if final_val is not None:
        print(f"final validation accuracy: {final_val:.4f}")
    return 0


def cmd_eval(args):
    dataset = get_dataset(args)
    pipeline = get_pipeline(args)
    result = run_cv(
        dataset, args.method, k=args.k, seed=args.seed, pipeline=pipeline,
        clip_level=not args.frame_level,
        learning_rate=args.lr, iterations=args.iters, batch_size=args.batch,
        keep_prob=args.dropout,
    )
    report = result.report
    mean = report.fold_mean()
    std = report.fold_std()
    print(f"method={args.method} folds={args.k}")
    for name, m, s in zip(("accuracy", "precision", "recall", "f1"), mean, std):
        print(f"  {name}: {m:.4f} +/- {s:.4f}")
    print(f"  pooled accuracy: {report.accuracy:.4f}")
    if args.out:
        rows = [
            {
                "axis": "cv", "value": 0.0 if args.snr is None else args.snr,
                "method": args.method, "fold": f, "seed": args.seed,
                "accuracy": acc, "precision": prec, "recall": rec, "f1": f1,
            }
            for f, (acc, prec, rec, f1) in enumerate(report.fold_metrics)
        ]
        write_results_csv(args.out, rows, meta=(resolved_flags(args),))
        print(f"fold metrics written to {args.out}")
    if args.confusion_out:
        with open(args.confusion_out, "w", newline="") as fh:
            fh.write(f"# {resolved_flags(args)}\n")
            fh.write("," + ",".join(dataset.label_names) + "\n")
            for name, row in zip(dataset.label_names, result.confusion.counts):
                fh.write(name + "," + ",".join(str(c) for c in row) + "\n")
        print(f"confusion matrix written to {args.confusion_out}")
    return 0


def cmd_sweep(args):
    dataset = get_dataset(args)
    pipeline = get_pipeline(args)
    grid = tuple(float(v) for v in args.grid.split(",")) if args.grid else None
    if grid and args.axis in ("window_size", "iterations"):
        grid = tuple(int(v) for v in grid)
    spec = SweepSpec(
        axis=args.axis, grid=grid,
        methods=tuple(args.methods.split(",")),
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        k=args.k,
    )
    rows = run_sweep(
        spec, dataset, pipeline=pipeline, clip_level=not args.frame_level,
        learning_rate=args.lr, iterations=args.iters, batch_size=args.batch,
        keep_prob=args.dropout,
    )
    write_results_csv(args.out, rows, meta=(resolved_flags(args),))
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_gradcheck(args):
    model = build(
        ModelConfig(
            input_len=args.input_len, n_classes=args.classes,
            seed=args.seed, dtype=np.float64,
        )
    )
    rng = np.random.Generator(np.random.PCG64(args.seed))
    features = rng.normal(size=args.input_len)
    err = gradient_check(
        model, features, label=0, n_samples=args.samples, seed=args.seed
    )
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err < 1e-4 else 1


def cmd_simulate(args):
    scenario = load_scenario(args.scenario)
    if args.model:
        server = load(args.model)
    else:
        print("no --model given; training a server model on synthetic data")
        server = train_server_model(scenario, iterations=args.iters, seed=args.seed)
    fallbacks = {}
    needed = [
        num for num, spec in enumerate(scenario.nodes, start=1)
        if spec.fallback_classes
    ]
    if needed:
        print(f"training fallback models for nodes {needed}")
        fallbacks = train_fallback_models(
            scenario, iterations=max(20, args.iters // 2), seed=args.seed
        )
    result = simulate(scenario, server, fallbacks)
    write_records_csv(args.out, result, meta=(resolved_flags(args),))
    n_fallback = sum(r.origin == "node_fallback" for r in result.records)
    print(
        f"{len(result.records)} records ({n_fallback} via node fallback), "
        f"{len(result.events)} outage events -> {args.out}"
    )
    return 0


def cmd_tune_threshold(args):
    if args.manifest is not None:
        dataset = load_manifest(args.manifest)
        names = {n.lower() for n in dataset.label_names}
        if not names <= {"active", "silent", "0", "1"}:
            raise MvcnnError(
                "tune-threshold manifests must label clips active/silent (or 1/0)"
            )
        active_ids = {
            i for i, n in enumerate(dataset.label_names)
            if n.lower() in ("active", "1")
        }
        labeled = list(zip(dataset.clips, dataset.labels))
    else:
        dataset = generate_synthetic(SyntheticSpec(seed=args.seed))
        labeled = [(c, 1) for c in dataset.clips]
        sr = dataset.clips[0].sample_rate
        labeled += [
            (AudioClip(np.zeros(3 * sr), sr), 0) for _ in range(len(labeled) // 2)
        ]
        active_ids = {1}
    windows = []
    for clip, label in labeled:
        win = int(round(args.window_seconds * clip.sample_rate))
        for start in range(0, len(clip.samples), win):
            chunk = clip.samples[start : start + win]
            if len(chunk):
                windows.append((chunk, label in active_ids))
    rho = tune_silence_threshold(windows)
    print(f"best silence threshold: {rho:.2f}")
    if args.out:
        Path(args.out).write_text(f"# {resolved_flags(args)}\nthreshold,{rho:.2f}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvcnn",
        description="Acoustic species classification: preprocessing, multi-view "
                    "CNN training, baselines, sweeps and offload simulation.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--clips-per-class", type=int, default=16)
    p.add_argument("--clip-seconds", type=float, default=3.0)
    p.add_argument("--sample-rate", type=int, default=24000)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="run the node preprocessing chain to features")
    add_dataset_flags(p)
    add_pipeline_flags(p)
    p.add_argument("--mfcc", action="store_true", help="extract MFCCs instead of spectra")
    p.add_argument("--highpass", type=float, default=None,
                   help="apply a Butterworth high-pass at this cutoff (Hz) first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output .npz path")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train the classifier and save the model")
    add_dataset_flags(p)
    add_pipeline_flags(p)
    add_train_flags(p)
    p.add_argument("--arch", choices=("multiview", "single"), default="multiview")
    p.add_argument("--val-fraction", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="model file path")
    p.add_argument("--history", type=Path, default=None,
                   help="history CSV path (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="k-fold cross-validation of one method")
    add_dataset_flags(p)
    add_pipeline_flags(p)
    add_train_flags(p)
    p.add_argument("--method", choices=METHOD_NAMES, default="multiview")
    p.add_argument("--k", type=int, default=10, help="number of folds")
    p.add_argument("--frame-level", action="store_true",
                   help="score frames instead of clip-level majority votes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="fold metrics CSV")
    p.add_argument("--confusion-out", type=Path, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="parameter sweep over a grid")
    add_dataset_flags(p)
    add_pipeline_flags(p)
    add_train_flags(p)
    p.add_argument("--axis", required=True,
                   choices=("window_size", "iterations", "dropout",
                            "learning_rate", "train_fraction", "snr"))
    p.add_argument("--grid", type=str, default=None,
                   help="comma-separated values (default: the standard grid)")
    p.add_argument("--methods", type=str, default="multiview",
                   help="comma-separated method names")
    p.add_argument("--seeds", type=str, default="0", help="comma-separated seeds")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--frame-level", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="results CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p.add_argument("--input-len", type=int, default=32)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--samples", type=int, default=24,
                   help="number of parameters to probe")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("simulate", help="run a node-to-server offload scenario")
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--model", type=Path, default=None,
                   help="server model file (default: train one on the fly)")
    p.add_argument("--iters", type=int, default=150,
                   help="iterations for on-the-fly model training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="records CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune-threshold", help="exhaustive silence-threshold search")
    p.add_argument("--manifest", type=Path, default=None,
                   help="clips labeled active/silent (default: synthetic demo)")
    p.add_argument("--window-seconds", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_tune_threshold)

    return parser


def dispatch(argv) -> int:
    """Parse argv and run the verb; argparse itself exits 2 on usage errors."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "window"):
        check_window(parser, args.window)
    try:
        return args.func(args)
    except (MvcnnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
