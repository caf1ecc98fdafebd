import csv
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualhead_pd.evaluation import (
    ConfusionMatrix,
    UsageError,
    confusion,
    evaluate,
    export_embeddings,
    metrics,
    pca_2d,
    speaker_vote,
    write_embeddings_csv,
    write_metrics,
)
from dualhead_pd.model import AblationSwitches, LanguageLookupError, LanguageRegistry, Model, ModelConfig, TaskType

counts = st.integers(0, 50)


def oracle(tp, fn, tn, fp):
    """Vectorized from-scratch recomputation (works on arrays)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        def safe(a, b):
            return np.where(b > 0, a / np.where(b > 0, b, 1), 0.0)

        def f1(tp_, fp_, fn_):
            p, r = safe(tp_, tp_ + fp_), safe(tp_, tp_ + fn_)
            return safe(2 * p * r, p + r)

        total = tp + fn + tn + fp
        return (
            100 * (tp + tn) / total,
            100 * (f1(tp, fp, fn) + f1(tn, fn, fp)) / 2,
            100 * safe(tp, tp + fn),
            100 * safe(tn, tn + fp),
        )


class TestMetrics:
    def test_first_table_row(self):
        r = metrics(ConfusionMatrix(tp=32, fn=14, tn=289, fp=49)).rendered()
        assert (r["accuracy"], r["sensitivity"], r["specificity"], r["macro_f1"]) == ("83.59", "69.57", "85.50", "70.28")

    def test_second_table_row(self):
        r = metrics(ConfusionMatrix(tp=55, fn=5, tn=53, fp=7)).rendered()
        assert (r["accuracy"], r["sensitivity"], r["specificity"], r["macro_f1"]) == ("90.00", "91.67", "88.33", "90.00")

    def test_all_correct(self):
        rep = metrics(ConfusionMatrix(tp=3, fn=0, tn=4, fp=0))
        assert all(getattr(rep, k) == 100 for k in rep.FIELDS)

    def test_empty_denominator_flagged(self):
        rep = metrics(ConfusionMatrix(tp=0, fn=0, tn=5, fp=0))
        assert rep.sensitivity == 0 and "sensitivity" in rep.undefined

    def test_empty_matrix(self):
        with pytest.raises(UsageError):
            metrics(ConfusionMatrix())

    @settings(max_examples=300, deadline=None)
    @given(counts, counts, counts, counts)
    def test_matches_recomputation(self, tp, fn, tn, fp):
        # the exhaustive grid runs in the acceptance suite
        if tp + fn + tn + fp == 0:
            return
        r = metrics(ConfusionMatrix(tp, fn, tn, fp))
        want = [float(v) for v in oracle(*(np.float64(c) for c in (tp, fn, tn, fp)))]
        assert [r.accuracy, r.macro_f1, r.sensitivity, r.specificity] == pytest.approx(want, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(counts, counts, counts)
    def test_balanced_accuracy_identity(self, tp, tn, extra):
        pos = max(tp, tn) + extra + 1
        rep = metrics(ConfusionMatrix(tp=tp, fn=pos - tp, tn=tn, fp=pos - tn))
        assert rep.accuracy == pytest.approx((rep.sensitivity + rep.specificity) / 2, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(counts, counts, counts, counts)
    def test_class_swap_symmetry(self, tp, fn, tn, fp):
        if tp + fn + tn + fp == 0:
            return
        a = metrics(ConfusionMatrix(tp, fn, tn, fp))
        b = metrics(ConfusionMatrix(tn, fp, tp, fn))
        assert a.macro_f1 == pytest.approx(b.macro_f1, abs=1e-12)
        assert (a.sensitivity, a.specificity) == (b.specificity, b.sensitivity)


class TestConfusion:
    def test_basic(self):
        assert confusion([0.9, 0.1], [1, 0]) == ConfusionMatrix(tp=1, fn=0, tn=1, fp=0)

    def test_tie_is_positive(self):
        assert confusion([0.5], [0]).fp == 1

    def test_counting_oracle(self, rng):
        p, y = rng.random(1000), rng.integers(0, 2, 1000)
        cm = ConfusionMatrix()
        for pi, yi in zip(p, y):
            pred = pi >= 0.5
            cm.tp += int(pred and yi == 1)
            cm.fn += int(not pred and yi == 1)
            cm.tn += int(not pred and yi == 0)
            cm.fp += int(pred and yi == 0)
        assert confusion(p, y) == cm

    def test_additive(self, rng):
        p, y = rng.random(40), rng.integers(0, 2, 40)
        assert confusion(p[:15], y[:15]) + confusion(p[15:], y[15:]) == confusion(p, y)

    def test_empty(self):
        with pytest.raises(UsageError):
            confusion([], [])

    def test_single_sample_extremes(self):
        rep = metrics(confusion([0.8], [1]))
        assert rep.accuracy == 100 and rep.sensitivity == 100 and rep.specificity == 0


class TestPca:
    def test_centered(self, rng):
        proj, _ = pca_2d(rng.standard_normal((30, 5)) + 7)
        np.testing.assert_allclose(proj.mean(axis=0), 0, atol=1e-10)

    def test_beats_random_projections(self, rng):
        x = rng.standard_normal((60, 6)) * np.array([5, 3, 1, 1, 0.5, 0.2])
        proj, _ = pca_2d(x)
        best = proj.var(axis=0).sum()
        xc = x - x.mean(axis=0)
        for _ in range(200):
            q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
            assert (xc @ q).var(axis=0).sum() <= best + 1e-9

    def test_sign_convention_and_determinism(self, rng):
        x = rng.standard_normal((20, 4))
        p1, c1 = pca_2d(x)
        p2, c2 = pca_2d(x.copy())
        np.testing.assert_array_equal(p1, p2)
        for c in c1:
            assert c[np.argmax(np.abs(c))] > 0


def trained_free_model(switches=None):
    return Model(ModelConfig(hidden=8, emb_dim=4), LanguageRegistry(["lang_a", "lang_b"]), switches, seed=0)


class TestEvaluate:
    def test_cells_reaggregate(self, small_splits):
        ev = evaluate(trained_free_model(), small_splits["test"])
        total = ConfusionMatrix()
        for cm in ev.cells.values():
            total = total + cm
        assert total == ev.overall
        assert sum(ev.per_dataset.values(), ConfusionMatrix()) == ev.overall
        assert {task for _, task in ev.cells} == {"ddk", "speech"}

    def test_concatenated_splits_sum(self, small_splits):
        model = trained_free_model()
        a, b = small_splits["val"], small_splits["test"]
        assert evaluate(model, a).overall + evaluate(model, b).overall == evaluate(model, a + b).overall

    def test_unregistered_dataset(self, small_splits):
        model = Model(ModelConfig(hidden=8), LanguageRegistry(["lang_a"]), seed=0)
        with pytest.raises(LanguageLookupError):
            evaluate(model, small_splits["test"])

    def test_lang_map_allows_unseen(self, small_splits):
        model = Model(ModelConfig(hidden=8), LanguageRegistry(["lang_a"]), seed=0)
        ev = evaluate(model, small_splits["test"], lang_map={"lang_b": "lang_a"})
        assert ev.overall.total == len(small_splits["test"])

    def test_write_metrics(self, small_splits, tmp_path):
        ev = evaluate(trained_free_model(), small_splits["test"])
        write_metrics(tmp_path / "m.txt", ev)
        kv = dict(line.split("=") for line in (tmp_path / "m.txt").read_text().splitlines())
        assert kv["macro_f1"] == f"{ev.report.macro_f1:.2f}"
        assert int(kv["tp"]) == ev.overall.tp
        assert "lang_a.ddk.accuracy" in kv

    def test_speaker_vote_one_row_per_speaker(self, small_splits):
        utts = small_splits["test"]
        p, y = speaker_vote(utts, np.full(len(utts), 0.9))
        assert len(p) == len({(u.dataset, u.speaker_id) for u in utts})
        assert np.all(p == 1.0)


class TestExport:
    def test_rows_and_csv(self, small_splits, tmp_path):
        utts = small_splits["test"]
        rows = export_embeddings(trained_free_model(), utts, TaskType.DDK)
        assert len(rows) == sum(u.task == TaskType.DDK for u in utts)
        proj = np.array([r["projection"] for r in rows])
        np.testing.assert_allclose(proj.mean(axis=0), 0, atol=1e-8)
        write_embeddings_csv(tmp_path / "e.csv", rows)
        with open(tmp_path / "e.csv") as fh:
            table = list(csv.reader(fh))
        d = trained_free_model().dim
        assert table[0][:4] == ["utterance_id", "dataset", "label", "task"]
        assert table[0][-2:] == ["pc1", "pc2"] and len(table[0]) == 4 + d + 2
        assert len(table) == len(rows) + 1

    def test_empty_selection(self, small_splits):
        one_task = [u for u in small_splits["test"] if u.task == TaskType.DDK]
        with pytest.raises(UsageError):
            export_embeddings(trained_free_model(), one_task, TaskType.CONTINUOUS)

    def test_embedding_is_head_pooled_vector(self, small_splits):
        model = trained_free_model(AblationSwitches())
        u = small_splits["test"][0]
        rows = export_embeddings(model, [u, small_splits["test"][1]])
        _, emb, _ = model.forward(u.ssl, u.wav, u.task, u.dataset)
        np.testing.assert_allclose(rows[0]["embedding"], emb, rtol=1e-6)
