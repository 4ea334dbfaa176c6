"""Experiment harness: synthetic corpus, cross-validation, metrics, sweeps.

The synthetic generator stands in for field recordings: each class is a
set of tones amplitude-modulated by a periodic envelope whose period
sets the class's temporal scale, so classes differ in both tone
placement and sideband comb spacing. Evaluation is clip-level by
default (majority vote over a clip's frame predictions) with a
frame-level toggle.

Feature normalization statistics are always fitted on training folds
only; test features are transformed with the training-fold statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import AudioClip, SilenceConfig, load_wav, remove_silence, rms, save_wav, segment
from .errors import (
    EmptyDataset,
    EmptyMatrix,
    InvalidSpec,
    TooFewSamples,
)
from .knn import KnnModel, knn_classify_batch, tune_k
from .model import ModelConfig, TrainConfig, build, predict, train
from .spectral import (
    add_noise_snr,
    fit_normalizer,
    hamming_coefficients,
    mfcc_features,
    normalize,
    spectrum_features,
)

METHOD_NAMES = ("multiview", "single_view_cnn", "knn_spectrum", "knn_mfcc")


# --- synthetic corpus ---

@dataclass(frozen=True)
class ClassSignature:
    """Tones plus the amplitude-envelope period that sets the temporal scale."""

    tones_hz: tuple
    envelope_period_s: float


# Default classes share their tones and differ only in envelope period,
# i.e. in the spacing of the AM sidebands around each tone: ~2, ~9, ~31
# and ~43 feature bins at the default window/feature sizes. Separating
# the last two requires integrating spectral context wider than a
# short-filter stack can reach.
_BASE_SIGNATURES = (
    ClassSignature((1800.0, 4100.0), 0.020),
    ClassSignature((1800.0, 4100.0), 0.005),
    ClassSignature((1800.0, 4100.0), 0.0014),
    ClassSignature((1800.0, 4100.0), 0.0010),
)


def default_signatures(n_classes: int) -> tuple:
    sigs = list(_BASE_SIGNATURES[:n_classes])
    for i in range(len(sigs), n_classes):
        base = 650.0 + 380.0 * i
        sigs.append(ClassSignature((base, 2.15 * base), 0.004 * 1.9 ** (i - 3)))
    return tuple(sigs)


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 4
    clips_per_class: int = 16
    clip_seconds: float = 3.0
    sample_rate: int = 24000
    amplitude: float = 0.5
    signatures: tuple | None = None
    freq_jitter: float = 0.01  # per-clip relative tone frequency spread
    period_jitter: float = 0.02  # per-clip relative envelope period spread
    seed: int = 0


@dataclass
class ClipDataset:
    clips: list
    labels: np.ndarray
    n_classes: int
    label_names: list

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def __len__(self):
        return len(self.clips)


def generate_synthetic(spec: SyntheticSpec) -> ClipDataset:
    """Deterministically synthesize a labeled clip dataset.

    Every clip draws per-clip tone amplitudes, small frequency jitter
    and random phases from a seed derived from (spec.seed, class, clip),
    so the dataset is reproducible and independent of generation order.

    Raises:
        InvalidSpec: non-distinct signatures, tones above Nyquist, or
        degenerate sizes.
    """
    if spec.n_classes < 2 or spec.clips_per_class < 1:
        raise InvalidSpec("need at least 2 classes and 1 clip per class")
    n_samples = int(round(spec.clip_seconds * spec.sample_rate))
    if n_samples < 1:
        raise InvalidSpec("clip_seconds too short for the sample rate")
    if not 0.0 < spec.amplitude <= 1.0:
        raise InvalidSpec("amplitude must be in (0, 1]")
    signatures = spec.signatures or default_signatures(spec.n_classes)
    if len(signatures) < spec.n_classes:
        raise InvalidSpec("need one signature per class")
    signatures = tuple(signatures[: spec.n_classes])
    if len(set(signatures)) != len(signatures):
        raise InvalidSpec("class signatures must be pairwise distinct")
    nyquist = spec.sample_rate / 2
    for sig in signatures:
        if any(not 0 < f < nyquist for f in sig.tones_hz):
            raise InvalidSpec(f"tones must lie in (0, {nyquist}) Hz")
        if sig.envelope_period_s <= 0:
            raise InvalidSpec("envelope period must be positive")

    t = np.arange(n_samples) / spec.sample_rate
    clips = []
    labels = []
    for cls, sig in enumerate(signatures):
        for j in range(spec.clips_per_class):
            rng = np.random.Generator(np.random.PCG64([spec.seed, cls, j]))
            env_phase = rng.uniform()
            period = sig.envelope_period_s * (
                1.0 + rng.uniform(-spec.period_jitter, spec.period_jitter)
            )
            envelope = 0.5 - 0.5 * np.cos(2 * np.pi * (t / period + env_phase))
            amps = rng.uniform(0.6, 1.0, len(sig.tones_hz))
            wave = np.zeros(n_samples)
            for freq, amp in zip(sig.tones_hz, amps):
                jittered = freq * (
                    1.0 + rng.uniform(-spec.freq_jitter, spec.freq_jitter)
                )
                wave += amp * np.sin(2 * np.pi * jittered * t + rng.uniform(0, 2 * np.pi))
            wave *= spec.amplitude / amps.sum()
            clips.append(AudioClip(envelope * wave, spec.sample_rate))
            labels.append(cls)
    names = [f"class{i}" for i in range(spec.n_classes)]
    return ClipDataset(clips, np.array(labels), spec.n_classes, names)


# --- folds ---

def kfold_split(labels, k: int = 10, seed: int = 0) -> list:
    """Stratified k-fold indices: per-class fold counts differ by at most 1.

    Shuffles each class independently and deals round-robin with a
    rotating offset so remainders spread across folds. Deterministic
    per seed.

    Raises:
        TooFewSamples: fewer samples than folds.
    """
    labels = np.asarray(labels)
    if len(labels) < k:
        raise TooFewSamples(f"{len(labels)} samples cannot fill {k} folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    folds = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(int(i))
        offset = (offset + len(idx)) % k
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def stratified_fraction_split(labels, train_fraction: float, seed: int = 0):
    """Per-class random split into (train_idx, test_idx).

    Each class contributes round(fraction * count) training samples,
    clamped so both sides stay nonempty.
    """
    labels = np.asarray(labels)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n_train = int(np.clip(round(train_fraction * len(idx)), 1, len(idx) - 1))
        train.extend(idx[:n_train])
        test.extend(idx[n_train:])
    return np.array(sorted(train)), np.array(sorted(test))


# --- metrics ---

@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predictions."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    def add(self, true_class: int, predicted: int, n: int = 1):
        self.counts[true_class, predicted] += n

    def merge(self, other: "ConfusionMatrix"):
        self.counts += other.counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    flagged_classes: tuple = ()
    fold_metrics: list = field(default_factory=list)  # (acc, prec, rec, f1) rows

    def fold_mean(self) -> np.ndarray:
        return np.mean(np.asarray(self.fold_metrics), axis=0)

    def fold_std(self) -> np.ndarray:
        return np.std(np.asarray(self.fold_metrics), axis=0)


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy plus macro precision/recall/F1 from a confusion matrix.

    Classes with an empty precision or recall denominator contribute 0
    to the macro average and are listed in flagged_classes.

    Raises:
        EmptyMatrix: no counts at all.
    """
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no observations")
    diag = np.diag(counts).astype(np.float64)
    col_sums = counts.sum(axis=0).astype(np.float64)
    row_sums = counts.sum(axis=1).astype(np.float64)
    flagged = []
    n = counts.shape[0]
    precision = np.zeros(n)
    recall = np.zeros(n)
    f1 = np.zeros(n)
    for c in range(n):
        if col_sums[c] > 0:
            precision[c] = diag[c] / col_sums[c]
        else:
            flagged.append(c)
        if row_sums[c] > 0:
            recall[c] = diag[c] / row_sums[c]
        elif c not in flagged:
            flagged.append(c)
        if precision[c] + recall[c] > 0:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])
    return MetricsReport(
        accuracy=float(diag.sum() / total),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        flagged_classes=tuple(sorted(flagged)),
    )


# --- feature pipeline ---

@dataclass(frozen=True)
class PipelineConfig:
    window_len: int = 2**14
    overlap: float = 0.5
    silence: SilenceConfig = SilenceConfig()
    feature_len: int = 512
    feature_kind: str = "spectrum"  # "spectrum" or "mfcc"
    mfcc_filters: int = 26
    mfcc_coeffs: int = 13
    snr_db: float | None = None
    noise_seed: int = 0

    @property
    def feature_dim(self) -> int:
        return self.feature_len if self.feature_kind == "spectrum" else self.mfcc_coeffs


def clip_frame_features(dataset: ClipDataset, pipeline: PipelineConfig) -> list:
    """Per-clip [n_frames, D] feature matrices (pre-normalization).

    Applies optional SNR noise injection (deterministic per clip index),
    silence removal, segmentation, Hamming windowing and the configured
    feature transform. Clips that yield no frames produce empty matrices.
    """
    out = []
    for i, clip in enumerate(dataset.clips):
        if pipeline.snr_db is not None:
            clip = add_noise_snr(
                clip, pipeline.snr_db,
                seed=(pipeline.noise_seed * 1_000_003 + i) & 0x7FFFFFFFFFFF,
            )
        active = remove_silence(clip, pipeline.silence)
        frames = (
            segment(active, pipeline.window_len, pipeline.overlap)
            if len(active) else []
        )
        if not frames:
            out.append(np.empty((0, pipeline.feature_dim)))
            continue
        if pipeline.feature_kind == "spectrum":
            out.append(spectrum_features(frames, pipeline.feature_len))
        elif pipeline.feature_kind == "mfcc":
            mat = np.stack([f.values for f in frames])
            mat = mat * hamming_coefficients(mat.shape[1])
            out.append(
                mfcc_features(mat, clip.sample_rate, pipeline.mfcc_filters,
                              pipeline.mfcc_coeffs)
            )
        else:
            raise ValueError(f"unknown feature kind {pipeline.feature_kind!r}")
    return out


@dataclass
class FoldData:
    """Training matrix plus per-clip test features, normalized per fold."""

    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: list  # per test clip
    stats: object  # NormStats or None for raw features


def prepare_fold(per_clip, labels, train_idx, test_idx, normalize_features: bool) -> FoldData:
    """Stack training frames and fit normalization on them alone."""
    train_parts = [per_clip[i] for i in train_idx if len(per_clip[i])]
    train_y = np.concatenate(
        [np.full(len(per_clip[i]), labels[i]) for i in train_idx if len(per_clip[i])]
    ) if train_parts else np.empty(0, dtype=np.int64)
    if not train_parts:
        raise EmptyDataset("no training frames in fold")
    train_X = np.vstack(train_parts)
    stats = None
    test_feats = [per_clip[i] for i in test_idx]
    if normalize_features:
        stats = fit_normalizer(train_X)
        train_X = normalize(train_X, stats)
        test_feats = [
            normalize(f, stats) if len(f) else f for f in test_feats
        ]
    return FoldData(train_X, train_y.astype(np.int64), test_feats, stats)


# --- methods ---

class CnnClassifier:
    """Multi-view (or single-view) network behind the harness interface."""

    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig):
        self.model_cfg = model_cfg
        self.train_cfg = train_cfg
        self.model = None

    def fit(self, features, labels):
        self.model = build(self.model_cfg)
        train(self.model, features, labels, self.train_cfg)
        return self

    def predict(self, features):
        return predict(self.model, features)


class KnnClassifier:
    """KNN with k tuned on an inner stratified split of the training frames."""

    def __init__(self, k_candidates=(1, 3, 5, 7), seed: int = 0):
        self.k_candidates = k_candidates
        self.seed = seed
        self.model = None
        self.k = None

    def fit(self, features, labels):
        labels = np.asarray(labels)
        if len(labels) >= 8 and len(np.unique(labels)) > 1:
            folds = kfold_split(labels, 4, seed=self.seed)
            val_idx = folds[0]
            fit_idx = np.setdiff1d(np.arange(len(labels)), val_idx)
            self.k = tune_k(
                features[fit_idx], labels[fit_idx],
                features[val_idx], labels[val_idx],
                candidates=self.k_candidates,
            )
        else:
            self.k = 1
        self.model = KnnModel(features, labels, self.k)
        return self

    def predict(self, features):
        return knn_classify_batch(self.model, features)


def make_method(
    name: str,
    n_classes: int,
    feature_dim: int,
    seed: int = 0,
    *,
    learning_rate: float = 0.001,
    iterations: int = 200,
    batch_size: int = 16,
    keep_prob: float = 0.8,
    k_candidates=(1, 3, 5, 7),
):
    """Instantiate a classifier by method name with paper-default settings."""
    if name == "multiview" or name == "single_view_cnn":
        widths = (10, 15, 20) if name == "multiview" else (10,)
        return CnnClassifier(
            ModelConfig(
                input_len=feature_dim, n_classes=n_classes, view_widths=widths,
                keep_prob=keep_prob, seed=seed,
            ),
            TrainConfig(learning_rate, iterations, batch_size, seed),
        )
    if name in ("knn_spectrum", "knn_mfcc"):
        return KnnClassifier(k_candidates, seed)
    raise ValueError(f"unknown method {name!r}; expected one of {METHOD_NAMES}")


def pipeline_for_method(method: str, base: PipelineConfig) -> PipelineConfig:
    """MFCC methods swap the feature transform; everything else is shared."""
    kind = "mfcc" if method == "knn_mfcc" else "spectrum"
    return replace(base, feature_kind=kind)


# --- cross-validation ---

@dataclass
class CvResult:
    report: MetricsReport
    confusion: ConfusionMatrix


def evaluate_split(per_clip, labels, test_idx, fold: FoldData, classifier,
                   n_classes: int, clip_level: bool = True) -> ConfusionMatrix:
    """Fit a classifier on a fold's training data and score its test clips."""
    classifier.fit(fold.train_features, fold.train_labels)
    cm = ConfusionMatrix.zeros(n_classes)
    for clip_i, feats in zip(test_idx, fold.test_features):
        if len(feats) == 0:
            continue
        preds = classifier.predict(feats)
        if clip_level:
            votes = np.bincount(preds, minlength=n_classes)
            cm.add(int(labels[clip_i]), int(np.argmax(votes)))
        else:
            for p in preds:
                cm.add(int(labels[clip_i]), int(p))
    return cm


def run_cv(
    dataset: ClipDataset,
    method: str = "multiview",
    k: int = 10,
    seed: int = 0,
    pipeline: PipelineConfig = PipelineConfig(),
    clip_level: bool = True,
    method_factory=None,
    **method_params,
) -> CvResult:
    """Stratified k-fold cross-validation of one method.

    Normalization statistics are fitted per fold on training frames
    only. Returns per-fold metrics plus the pooled confusion matrix.
    method_factory overrides the named method with a custom
    factory(n_classes, feature_dim, seed) -> classifier.
    """
    pipe = pipeline_for_method(method, pipeline)
    per_clip = clip_frame_features(dataset, pipe)
    labels = dataset.labels
    folds = kfold_split(labels, k, seed)
    normalize_features = pipe.feature_kind == "spectrum"
    pooled = ConfusionMatrix.zeros(dataset.n_classes)
    fold_metrics = []
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(labels)), test_idx)
        fold = prepare_fold(per_clip, labels, train_idx, test_idx, normalize_features)
        if method_factory is not None:
            clf = method_factory(dataset.n_classes, pipe.feature_dim, seed * 101 + f)
        else:
            clf = make_method(
                method, dataset.n_classes, pipe.feature_dim, seed * 101 + f,
                **method_params,
            )
        fold_cm = evaluate_split(
            per_clip, labels, test_idx, fold, clf, dataset.n_classes, clip_level
        )
        m = compute_metrics(fold_cm)
        fold_metrics.append(
            (m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1)
        )
        pooled.merge(fold_cm)
    report = compute_metrics(pooled)
    report.fold_metrics = fold_metrics
    return CvResult(report, pooled)


# --- parameter sweeps ---

DEFAULT_GRIDS = {
    "window_size": (2**11, 2**12, 2**13, 2**14, 2**15),
    "iterations": (10, 25, 50, 100, 200),
    "dropout": (0.5, 0.6, 0.7, 0.8, 0.9),
    "learning_rate": (1e-4, 5e-4, 1e-3, 5e-3, 1e-2),
    "train_fraction": tuple(round(0.1 * i, 1) for i in range(1, 10)),
    "snr": (-6.0, -3.0, 0.0, 3.0, 6.0),
}

RESULTS_HEADER = ("axis", "value", "method", "fold", "seed",
                  "accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    grid: tuple | None = None
    methods: tuple = ("multiview",)
    seeds: tuple = (0,)
    k: int = 10

    def resolved_grid(self) -> tuple:
        if self.grid:
            return self.grid
        if self.axis not in DEFAULT_GRIDS:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        return DEFAULT_GRIDS[self.axis]


def _sweep_point(axis, value, pipeline, method_params, seed):
    """Apply one grid value to the pipeline or the method parameters."""
    if axis == "window_size":
        return replace(pipeline, window_len=int(value)), method_params
    if axis == "snr":
        return replace(pipeline, snr_db=float(value), noise_seed=seed), method_params
    if axis == "iterations":
        return pipeline, {**method_params, "iterations": int(value)}
    if axis == "dropout":
        return pipeline, {**method_params, "keep_prob": float(value)}
    if axis == "learning_rate":
        return pipeline, {**method_params, "learning_rate": float(value)}
    if axis == "train_fraction":
        return pipeline, method_params
    raise ValueError(f"unknown sweep axis {axis!r}")


def run_sweep(
    spec: SweepSpec,
    dataset: ClipDataset,
    pipeline: PipelineConfig = PipelineConfig(),
    clip_level: bool = True,
    **method_params,
) -> list:
    """Grid x methods x seeds sweep; one row dict per (value, method, fold, seed).

    SNR values are injected into training and test clips alike (before
    feature extraction). The train_fraction axis replaces k-fold CV with
    k stratified train/test splits at the given fraction, indexed by the
    fold column. Rows come back sorted by (value, method, fold, seed).
    """
    rows = []
    for value in spec.resolved_grid():
        for method in spec.methods:
            for seed in spec.seeds:
                pipe, params = _sweep_point(
                    spec.axis, value, pipeline, method_params, seed
                )
                if spec.axis == "train_fraction":
                    fold_rows = _fraction_splits(
                        spec, dataset, float(value), method, seed, pipe,
                        clip_level, params,
                    )
                else:
                    result = run_cv(
                        dataset, method, spec.k, seed, pipe, clip_level, **params
                    )
                    fold_rows = [
                        (f, m) for f, m in enumerate(result.report.fold_metrics)
                    ]
                for fold, (acc, prec, rec, f1) in fold_rows:
                    rows.append({
                        "axis": spec.axis, "value": value, "method": method,
                        "fold": fold, "seed": seed, "accuracy": acc,
                        "precision": prec, "recall": rec, "f1": f1,
                    })
    rows.sort(key=lambda r: (float(r["value"]), r["method"], r["fold"], r["seed"]))
    return rows


def _fraction_splits(spec, dataset, fraction, method, seed, pipe, clip_level, params):
    pipe = pipeline_for_method(method, pipe)
    per_clip = clip_frame_features(dataset, pipe)
    labels = dataset.labels
    normalize_features = pipe.feature_kind == "spectrum"
    out = []
    for rep in range(spec.k):
        train_idx, test_idx = stratified_fraction_split(
            labels, fraction, seed=seed * 1009 + rep
        )
        fold = prepare_fold(per_clip, labels, train_idx, test_idx, normalize_features)
        clf = make_method(
            method, dataset.n_classes, pipe.feature_dim, seed * 101 + rep, **params
        )
        cm = evaluate_split(
            per_clip, labels, test_idx, fold, clf, dataset.n_classes, clip_level
        )
        m = compute_metrics(cm)
        out.append((rep, (m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1)))
    return out


def write_results_csv(path, rows, meta=()) -> None:
    """Write sweep/CV rows with '#'-prefixed metadata lines up top."""
    with open(path, "w", newline="") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in rows:
            writer.writerow([
                r["axis"], f"{r['value']:g}", r["method"], r["fold"], r["seed"],
                f"{r['accuracy']:.6f}", f"{r['precision']:.6f}",
                f"{r['recall']:.6f}", f"{r['f1']:.6f}",
            ])


# --- silence threshold tuning ---

def tune_silence_threshold(windows) -> float:
    """Exhaustive threshold search over {0, 0.01, ..., 0.5}.

    windows is a sequence of (samples, is_active) pairs; a window is
    predicted active when its RMS is >= the threshold. Returns the
    threshold with the best window-level accuracy, ties resolving to
    the smallest value.

    Raises:
        EmptyDataset: no labeled windows.
    """
    windows = list(windows)
    if not windows:
        raise EmptyDataset("no labeled windows to tune on")
    levels = np.array([rms(w) for w, _ in windows])
    truth = np.array([bool(a) for _, a in windows])
    best_rho = 0.0
    best_acc = -1.0
    for i in range(51):
        rho = i / 100.0
        acc = float(np.mean((levels >= rho) == truth))
        if acc > best_acc:
            best_acc = acc
            best_rho = rho
    return best_rho


# --- dataset I/O ---

def load_manifest(path) -> ClipDataset:
    """Load a `path,label` CSV manifest; relative paths resolve beside it.

    String labels are mapped to ids in sorted order.

    Raises:
        EmptyDataset: manifest has no rows.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames[:2]] != ["path", "label"]:
            raise InvalidSpec(f"{path}: manifest must have a path,label header")
        entries = [(row["path"].strip(), row["label"].strip()) for row in reader]
    if not entries:
        raise EmptyDataset(f"{path}: empty manifest")
    names = sorted({label for _, label in entries})
    ids = {name: i for i, name in enumerate(names)}
    clips = []
    labels = []
    for rel, label in entries:
        clip_path = Path(rel)
        if not clip_path.is_absolute():
            clip_path = path.parent / clip_path
        clips.append(load_wav(clip_path))
        labels.append(ids[label])
    return ClipDataset(clips, np.array(labels), len(names), names)


def save_dataset(dataset: ClipDataset, out_dir) -> Path:
    """Write clips as WAVs plus a manifest.csv; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        for i, (clip, label) in enumerate(zip(dataset.clips, dataset.labels)):
            name = f"clip_{i:04d}_{dataset.label_names[label]}.wav"
            save_wav(out_dir / name, clip)
            writer.writerow([name, dataset.label_names[label]])
    return manifest
