import numpy as np
import pytest

from mvcnn.audio import AudioClip
from mvcnn.errors import EmptyDataset, EmptyMatrix, InvalidSpec, TooFewSamples
from mvcnn.evaluation import (
    ClassSignature,
    ClipDataset,
    ConfusionMatrix,
    PipelineConfig,
    SweepSpec,
    SyntheticSpec,
    clip_frame_features,
    compute_metrics,
    generate_synthetic,
    kfold_split,
    load_manifest,
    prepare_fold,
    run_cv,
    run_sweep,
    save_dataset,
    stratified_fraction_split,
    tune_silence_threshold,
    write_results_csv,
)
from mvcnn.spectral import fit_normalizer, normalize


# small, fast configurations for harness tests
def small_dataset(n_classes=3, clips_per_class=8, seed=0):
    return generate_synthetic(
        SyntheticSpec(
            n_classes=n_classes,
            clips_per_class=clips_per_class,
            clip_seconds=0.5,
            seed=seed,
        )
    )


SMALL_PIPE = PipelineConfig(window_len=2**11, feature_len=64)


class TestKfold:
    def test_uniform_sizes(self):
        labels = np.repeat(np.arange(10), 10)  # 100 samples
        folds = kfold_split(labels, 10, seed=0)
        assert [len(f) for f in folds] == [10] * 10

    def test_two_class_balance(self):
        labels = np.array([0] * 50 + [1] * 50)
        folds = kfold_split(labels, 10, seed=1)
        for fold in folds:
            assert np.sum(labels[fold] == 0) == 5
            assert np.sum(labels[fold] == 1) == 5

    def test_deterministic(self):
        labels = np.arange(40) % 4
        a = kfold_split(labels, 10, seed=7)
        b = kfold_split(labels, 10, seed=7)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa, fb)
        c = kfold_split(labels, 10, seed=8)
        assert any(not np.array_equal(fa, fc) for fa, fc in zip(a, c))

    def test_disjoint_exhaustive_balanced(self):
        rng = np.random.Generator(np.random.PCG64(2))
        for trial in range(20):
            n = int(rng.integers(10, 80))
            labels = rng.integers(0, 4, n)
            k = int(rng.integers(2, min(n, 11)))
            folds = kfold_split(labels, k, seed=trial)
            merged = np.concatenate(folds)
            assert len(merged) == n
            assert len(np.unique(merged)) == n
            for cls in np.unique(labels):
                counts = [int(np.sum(labels[f] == cls)) for f in folds]
                assert max(counts) - min(counts) <= 1

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            kfold_split(np.zeros(5), 10)


class TestMetrics:
    def test_diagonal_is_perfect(self):
        cm = ConfusionMatrix(np.diag([5, 3, 7]))
        m = compute_metrics(cm)
        assert m.accuracy == m.macro_precision == m.macro_recall == m.macro_f1 == 1.0

    def test_hand_computed_two_class(self):
        cm = ConfusionMatrix(np.array([[3, 2], [1, 4]]))
        m = compute_metrics(cm)
        assert m.accuracy == pytest.approx(7 / 10)
        assert m.per_class_precision[0] == pytest.approx(3 / 4)
        assert m.per_class_recall[0] == pytest.approx(3 / 5)
        assert m.per_class_f1[0] == pytest.approx(2 / 3)

    def test_all_predictions_one_class(self):
        cm = ConfusionMatrix(np.array([[4, 0], [6, 0]]))
        m = compute_metrics(cm)
        assert m.accuracy == pytest.approx(0.4)  # prevalence of class 0
        assert 1 in m.flagged_classes  # empty predicted column

    def test_label_permutation_permutes_per_class_metrics(self):
        counts = np.array([[5, 1, 0], [2, 6, 1], [0, 2, 7]])
        m = compute_metrics(ConfusionMatrix(counts))
        perm = [2, 0, 1]
        permuted = counts[np.ix_(perm, perm)]
        mp = compute_metrics(ConfusionMatrix(permuted))
        np.testing.assert_allclose(mp.per_class_precision, m.per_class_precision[perm])
        np.testing.assert_allclose(mp.per_class_recall, m.per_class_recall[perm])
        assert mp.macro_f1 == pytest.approx(m.macro_f1)
        assert mp.accuracy == pytest.approx(m.accuracy)

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrix):
            compute_metrics(ConfusionMatrix.zeros(3))


class TestSynthetic:
    def test_deterministic(self):
        a = small_dataset(seed=5)
        b = small_dataset(seed=5)
        for ca, cb in zip(a.clips, b.clips):
            np.testing.assert_array_equal(ca.samples, cb.samples)

    def test_different_seed_differs(self):
        a = small_dataset(seed=5)
        b = small_dataset(seed=6)
        assert not np.array_equal(a.clips[0].samples, b.clips[0].samples)

    def test_envelope_scale_separates_features(self):
        # identical tones, envelope 5 ms vs 80 ms: sideband structure
        # must move the normalized features by more than 0.1
        sigs = (
            ClassSignature((1500.0, 3100.0), 0.005),
            ClassSignature((1500.0, 3100.0), 0.080),
        )
        ds = generate_synthetic(
            SyntheticSpec(n_classes=2, clips_per_class=4, clip_seconds=1.0,
                          signatures=sigs, seed=1)
        )
        feats = clip_frame_features(ds, PipelineConfig())
        stats = fit_normalizer(np.vstack(feats))
        for fa in feats[0]:
            for fb in feats[4]:
                gap = np.linalg.norm(normalize(fa, stats) - normalize(fb, stats))
                assert gap > 0.1

    def test_clips_survive_silence_removal(self):
        ds = small_dataset()
        pipe = PipelineConfig(window_len=2**11, feature_len=64)
        feats = clip_frame_features(ds, pipe)
        assert all(len(f) > 0 for f in feats)

    def test_amplitude_bound(self):
        ds = small_dataset()
        for clip in ds.clips:
            assert np.max(np.abs(clip.samples)) <= 0.5 + 1e-12

    def test_invalid_specs(self):
        with pytest.raises(InvalidSpec):
            generate_synthetic(SyntheticSpec(n_classes=1))
        with pytest.raises(InvalidSpec):
            generate_synthetic(
                SyntheticSpec(n_classes=2, signatures=(
                    ClassSignature((1000.0,), 0.01),
                    ClassSignature((1000.0,), 0.01),
                ))
            )
        with pytest.raises(InvalidSpec):
            generate_synthetic(
                SyntheticSpec(n_classes=2, signatures=(
                    ClassSignature((1000.0,), 0.01),
                    ClassSignature((13000.0,), 0.02),  # above Nyquist
                ))
            )


class _Memorizer:
    """Leakage canary: perfect on anything seen in fit, chance otherwise."""

    def __init__(self, n_classes):
        self.n_classes = n_classes
        self.bank = {}

    def fit(self, features, labels):
        self.bank = {
            hash(f.tobytes()): int(l) for f, l in zip(features, labels)
        }
        return self

    def predict(self, features):
        return np.array(
            [self.bank.get(hash(f.tobytes()), 0) for f in features], dtype=np.int64
        )


class TestRunCv:
    def test_deterministic(self):
        ds = small_dataset()
        kwargs = dict(method="knn_spectrum", k=4, seed=3, pipeline=SMALL_PIPE)
        a = run_cv(ds, **kwargs)
        b = run_cv(ds, **kwargs)
        np.testing.assert_array_equal(a.confusion.counts, b.confusion.counts)
        assert a.report.fold_metrics == b.report.fold_metrics

    def test_memorizer_fails_on_held_out_random_labels(self):
        ds = small_dataset(n_classes=2, clips_per_class=10)
        rng = np.random.Generator(np.random.PCG64(4))
        shuffled = ClipDataset(
            ds.clips, rng.permutation(ds.labels), ds.n_classes, ds.label_names
        )
        res = run_cv(
            shuffled, "knn_spectrum", k=5, seed=0, pipeline=SMALL_PIPE,
            method_factory=lambda n, d, s: _Memorizer(n),
        )
        # memorizer has never seen the test frames: accuracy must sit
        # near chance, nowhere near its training-set perfection
        assert res.report.accuracy < 0.85

    def test_memorizer_is_perfect_on_training_data(self):
        rng = np.random.Generator(np.random.PCG64(5))
        X = rng.normal(size=(20, 6))
        y = rng.integers(0, 2, 20)
        clf = _Memorizer(2).fit(X, y)
        np.testing.assert_array_equal(clf.predict(X), y)

    def test_knn_easy_task_sanity(self):
        # default synthetic set at +6 dB: k=1 KNN on spectra is accurate
        ds = generate_synthetic(SyntheticSpec(seed=0))
        res = run_cv(
            ds, "knn_spectrum", k=10, seed=0,
            pipeline=PipelineConfig(snr_db=6.0, noise_seed=0),
            k_candidates=(1,),
        )
        assert res.report.accuracy >= 0.9

    def test_pooled_accuracy_is_weighted_fold_mean(self):
        ds = small_dataset()
        res = run_cv(ds, "knn_spectrum", k=4, seed=1, pipeline=SMALL_PIPE)
        fold_sizes = [len(f) for f in kfold_split(ds.labels, 4, seed=1)]
        weighted = sum(
            size * acc for size, (acc, _, _, _) in zip(fold_sizes, res.report.fold_metrics)
        ) / sum(fold_sizes)
        assert abs(res.report.accuracy - weighted) < 1e-12

    def test_normalizer_fit_excludes_test_fold(self):
        ds = small_dataset()
        per_clip = clip_frame_features(ds, SMALL_PIPE)
        folds = kfold_split(ds.labels, 4, seed=0)
        test_idx = folds[0]
        train_idx = np.setdiff1d(np.arange(len(ds.labels)), test_idx)
        base = prepare_fold(per_clip, ds.labels, train_idx, test_idx, True)
        # corrupt a test clip's features: fitted statistics must not move
        mutated = [f.copy() for f in per_clip]
        mutated[test_idx[0]] = mutated[test_idx[0]] + 1e6
        poked = prepare_fold(mutated, ds.labels, train_idx, test_idx, True)
        np.testing.assert_array_equal(base.stats.mean, poked.stats.mean)
        np.testing.assert_array_equal(base.stats.std, poked.stats.std)

    def test_frame_level_toggle(self):
        ds = small_dataset()
        clip_res = run_cv(ds, "knn_spectrum", k=4, seed=0, pipeline=SMALL_PIPE)
        frame_res = run_cv(
            ds, "knn_spectrum", k=4, seed=0, pipeline=SMALL_PIPE, clip_level=False
        )
        assert clip_res.confusion.total == len(ds)
        assert frame_res.confusion.total == sum(
            len(f) for f in clip_frame_features(ds, SMALL_PIPE)
        )


class TestSweep:
    def test_default_grids(self):
        assert SweepSpec("train_fraction").resolved_grid() == (
            0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9,
        )
        assert SweepSpec("window_size").resolved_grid() == (
            2048, 4096, 8192, 16384, 32768,
        )
        assert SweepSpec("snr").resolved_grid() == (-6.0, -3.0, 0.0, 3.0, 6.0)

    def test_row_count_is_cartesian_product(self):
        ds = small_dataset()
        spec = SweepSpec(
            "snr", grid=(0.0, 6.0), methods=("knn_spectrum", "knn_mfcc"),
            seeds=(0, 1), k=3,
        )
        rows = run_sweep(spec, ds, pipeline=SMALL_PIPE)
        assert len(rows) == 2 * 2 * 3 * 2

    def test_train_fraction_axis_uses_fraction_splits(self):
        ds = small_dataset()
        spec = SweepSpec("train_fraction", grid=(0.5,), methods=("knn_spectrum",),
                         seeds=(0,), k=3)
        rows = run_sweep(spec, ds, pipeline=SMALL_PIPE)
        assert len(rows) == 3
        assert {r["fold"] for r in rows} == {0, 1, 2}

    def test_rows_sorted_and_complete(self):
        ds = small_dataset()
        spec = SweepSpec("window_size", grid=(2**11, 2**12),
                         methods=("knn_spectrum",), seeds=(0,), k=3)
        rows = run_sweep(spec, ds, pipeline=SMALL_PIPE)
        values = [r["value"] for r in rows]
        assert values == sorted(values)
        for r in rows:
            for key in ("accuracy", "precision", "recall", "f1"):
                assert 0.0 <= r[key] <= 1.0

    def test_csv_round_trip(self, tmp_path):
        ds = small_dataset()
        spec = SweepSpec("snr", grid=(6.0,), methods=("knn_spectrum",), seeds=(0,), k=3)
        rows = run_sweep(spec, ds, pipeline=SMALL_PIPE)
        path = tmp_path / "rows.csv"
        write_results_csv(path, rows, meta=("flags: --example",))
        text = path.read_text().splitlines()
        assert text[0] == "# flags: --example"
        assert text[1] == "axis,value,method,fold,seed,accuracy,precision,recall,f1"
        assert len(text) == 2 + len(rows)


class TestFractionSplit:
    def test_fraction_and_stratification(self):
        labels = np.array([0] * 20 + [1] * 20)
        train, test = stratified_fraction_split(labels, 0.3, seed=0)
        assert np.sum(labels[train] == 0) == 6
        assert np.sum(labels[train] == 1) == 6
        assert len(train) + len(test) == 40
        assert len(np.intersect1d(train, test)) == 0

    def test_every_class_in_both_sides(self):
        labels = np.array([0, 0, 1, 1, 2, 2])
        train, test = stratified_fraction_split(labels, 0.1, seed=1)
        assert set(labels[train]) == {0, 1, 2}
        assert set(labels[test]) == {0, 1, 2}


class TestTuneThreshold:
    def test_separable_windows_return_smallest_perfect(self):
        rng = np.random.Generator(np.random.PCG64(6))
        t = np.arange(1000) / 1000
        active = [
            (0.5 * np.sin(2 * np.pi * 50 * t + rng.uniform()), True)
            for _ in range(10)
        ]
        silent = [(np.zeros(1000), False) for _ in range(10)]
        assert tune_silence_threshold(active + silent) == pytest.approx(0.01)

    def test_all_active_returns_zero(self):
        windows = [(np.full(100, 0.4), True) for _ in range(5)]
        assert tune_silence_threshold(windows) == 0.0

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            tune_silence_threshold([])


class TestDatasetIo:
    def test_save_load_round_trip(self, tmp_path):
        ds = small_dataset(n_classes=2, clips_per_class=3)
        manifest = save_dataset(ds, tmp_path / "corpus")
        back = load_manifest(manifest)
        assert len(back) == len(ds)
        assert back.n_classes == 2
        np.testing.assert_array_equal(back.labels, ds.labels)
        # 16-bit quantization bounds the reload error
        for ca, cb in zip(ds.clips, back.clips):
            assert np.max(np.abs(ca.samples - cb.samples)) <= 0.5 / 32768

    def test_missing_header_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("file,cls\nx.wav,frog\n")
        with pytest.raises(InvalidSpec):
            load_manifest(bad)

    def test_empty_manifest(self, tmp_path):
        bad = tmp_path / "empty.csv"
        bad.write_text("path,label\n")
        with pytest.raises(EmptyDataset):
            load_manifest(bad)
