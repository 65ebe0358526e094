import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chromaforge import attacks, classifier, metrics
from chromaforge.tensorcore import LabeledImage

from oracles import norms_loop


def test_norm_examples():
    a = np.full((2, 2, 3), 0.5)
    assert metrics.perturbation_norms(a, a) == metrics.PerturbationNorms(0.0, 0.0, 0.0)
    b = a.copy()
    b[1, 0, 2] += 0.1
    p = metrics.perturbation_norms(a, b)
    assert p.l0_percent == pytest.approx(100 / 12, abs=1e-12)
    assert p.l2 == pytest.approx(0.1, abs=1e-12) and p.linf_255 == pytest.approx(25.5, abs=1e-9)
    h, w = 3, 5
    c = np.zeros((h, w, 3))
    p = metrics.perturbation_norms(c, c + 0.2)
    assert p.l0_percent == 100.0
    assert p.l2 == pytest.approx(0.2 * np.sqrt(h * w * 3), abs=1e-12) and p.linf_255 == pytest.approx(51.0, abs=1e-12)
    with pytest.raises(ValueError):
        metrics.perturbation_norms(a, np.zeros((2, 3, 3)))


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.3))
def test_norms_match_loop_oracle(seed, sparsity):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(4, 4, 3))
    b = np.where(rng.uniform(size=a.shape) < sparsity, a, rng.uniform(size=a.shape))
    p = metrics.perturbation_norms(a, b)
    l0, l2, linf = norms_loop(a, b, metrics.L0_THRESHOLD)
    assert abs(p.l0_percent - l0) <= 1e-12 and abs(p.l2 - l2) <= 1e-12 and abs(p.linf_255 - linf) <= 1e-12
    assert 0.0 <= p.l0_percent <= 100.0 and p.linf_255 <= 255.0


def test_spatial_l0_counts_pixels():
    a = np.zeros((2, 2, 3))
    b = a.copy()
    b[0, 0, :2] = 0.5
    assert metrics.perturbation_norms(a, b, spatial=True).l0_percent == 25.0
    assert metrics.perturbation_norms(a, b).l0_percent == pytest.approx(100 * 2 / 12)


# transfer matrices on tiny linear models over 2x2 images


def linear(W):
    L = classifier.LayerSpec
    return classifier.ClassifierModel([L("flatten"), L("dense", (12, 3)), L("softmax")],
                                      [[], [np.asarray(W), np.zeros(3)], []], (2, 2, 3))


@pytest.fixture(scope="module")
def zoo():
    rng = np.random.default_rng(0)
    teacher = rng.normal(size=(3, 12))
    models = [linear(teacher + rng.normal(scale=s, size=teacher.shape)) for s in (0.0, 0.3, 0.6)]
    images = rng.uniform(size=(60, 2, 2, 3))
    labels = metrics._predict_all(models[0], images)
    return models, [LabeledImage(x, int(y)) for x, y in zip(images, labels)]


def invert(model, item, cfg=None):
    """Deterministic stand-in attack: the photographic negative."""
    adv = 1.0 - item.image
    after = classifier.predict(model, adv)
    return attacks.AttackResult("invert", adv, [], after != item.label, "", 1, [], item.label, item.label, after)


def keep_original(model, item, cfg=None):
    return attacks.AttackResult("none", item.image, [], False, "", 0, [], item.label, item.label, item.label)


def test_transfer_same_model_repeats_diagonal(zoo):
    models, items = zoo
    tm = metrics.transfer_matrix([models[1], models[1]], invert, items)
    assert tm.success[0][1] == tm.success[0][0] == tm.success[1][1]
    assert tm.agreement_counts[0][1] == tm.agreement_counts[0][0]


def test_transfer_with_originals_is_zero(zoo):
    models, items = zoo
    tm = metrics.transfer_matrix(models, keep_original, items)
    assert all(v == 0.0 for row in tm.success for v in row)


def test_transfer_counts_and_diagonal(zoo):
    models, items = zoo
    tm = metrics.transfer_matrix(models, invert, items, names=["a", "b", "c"])
    labels = np.array([it.label for it in items])
    images = np.stack([it.image for it in items])
    ok = [metrics._predict_all(m, images) == labels for m in models]
    for i in range(3):
        for j in range(3):
            sub = np.flatnonzero(ok[i] & ok[j])
            assert tm.agreement_counts[i][j] == sub.size
            fooled = metrics._predict_all(models[j], 1.0 - images[sub]) != labels[sub]
            assert tm.success[i][j] == pytest.approx(100.0 * fooled.mean())
    rows = tm.rows("invert")
    assert len(rows) == 9 and rows[1]["model_src"] == "a" and rows[1]["model_dst"] == "b"


def test_transfer_is_permutation_equivariant(zoo):
    models, items = zoo
    tm = metrics.transfer_matrix(models, invert, items)
    order = [2, 0, 1]
    perm = metrics.transfer_matrix([models[k] for k in order], invert, items)
    for i in range(3):
        for j in range(3):
            assert perm.success[i][j] == tm.success[order[i]][order[j]]
            assert perm.agreement_counts[i][j] == tm.agreement_counts[order[i]][order[j]]


def test_empty_agreement_is_undefined(zoo):
    models, items = zoo
    never = linear(np.zeros((3, 12)))  # always predicts class 0
    items = [it for it in items if it.label != 0]
    tm = metrics.transfer_matrix([models[0], never], invert, items)
    assert tm.success[0][1] is None and tm.success[1][1] is None
    assert tm.agreement_counts[0][1] == 0
    assert tm.rows()[1]["success_pct"] == ""


def test_attack_runs_once_per_source_image(zoo):
    models, items = zoo
    calls = []

    def counting(model, item):
        calls.append(1)
        return invert(model, item)

    metrics.transfer_matrix(models, counting, items)
    images = np.stack([it.image for it in items])
    labels = np.array([it.label for it in items])
    assert len(calls) == sum(int(np.sum(metrics._predict_all(m, images) == labels)) for m in models)


def result(success, iters=1, status=None):
    status = status or ("success" if success else "failure")
    return attacks.AttackResult("ace", np.zeros((1, 1, 3)), [], success, status, iters, [], 0, 0, 1 if success else 0)


def test_summarize_examples():
    assert metrics.summarize([result(True)] * 3)["success_pct"] == 100.0
    assert metrics.summarize([result(True)] + [result(False)] * 3)["success_pct"] == 25.0
    originals = [np.zeros((1, 1, 3)), np.zeros((1, 1, 3))]
    r1, r3 = result(True), result(True)
    r1.adversarial = np.array([[[1.0, 0.0, 0.0]]])
    r3.adversarial = np.array([[[1.0, 2.0, 2.0]]])  # L2 = 3
    row = metrics.summarize([r1, r3], originals)
    assert row["l2"] == 2.0
    skipped = metrics.summarize([result(True, 4), result(False, 0, "already-misclassified")])
    assert skipped["n"] == 1 and skipped["mean_iters"] == 4.0
    with pytest.raises(ValueError):
        metrics.summarize([])


def test_report_formats():
    rows = [metrics.summarize([result(True), result(False)], [np.zeros((1, 1, 3))] * 2, model_src="cnn")]
    rep = metrics.report(rows)
    parsed = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert list(parsed[0]) == metrics.CSV_COLUMNS
    assert parsed[0]["success_pct"] == "50.0" and parsed[0]["model_dst"] == "cnn"
    assert json.loads(rep.to_json())[0]["n"] == 2
