import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegaug.classifier import (
    Classifier,
    ClassifierError,
    ClassifierTrainingError,
    CnnArch,
    ConvBlock,
    Metrics,
    TrainHyper,
    clf_forward,
    conv_features,
    evaluate,
    init_classifier,
    load_classifier,
    metrics_csv,
    predict,
    save_classifier,
    train_classifier,
)
from eegaug.numerics.layers import param_shapes

SMALL = CnnArch(conv_blocks=(ConvBlock(4), ConvBlock(4)), dense_widths=(8,))


def toy_set(per_class=40, seed=0):
    rng = np.random.default_rng(seed)
    pattern = rng.choice([-0.8, 0.8], size=(3, 9, 64))
    y = np.arange(2 * per_class) % 2
    x = np.where(y[:, None, None, None] == 0, pattern, -pattern)
    return x, y


def test_default_architecture_chain():
    arch = CnnArch()
    assert arch.feature_shape() == (32, 5, 13)
    shapes = param_shapes(arch.layers())
    assert shapes["c0.w"] == (16, 3, 3, 5)
    assert shapes["c1.w"] == (32, 16, 3, 5)
    assert shapes["fc0.w"] == (64, 32 * 5 * 13)
    assert shapes["head.w"] == (2, 64)


def test_inconsistent_architecture_rejected():
    with pytest.raises(ClassifierError):
        CnnArch(conv_blocks=(ConvBlock(4, kernel=(10, 5)),))
    with pytest.raises(ClassifierError):
        CnnArch(class_count=1)


def test_identical_inputs_give_identical_logit_rows():
    clf = init_classifier(SMALL, seed=1)
    x = np.random.default_rng(0).uniform(-1, 1, size=(1, 3, 9, 64))
    out = clf_forward(np.concatenate([x, x]), SMALL, clf.params).data
    assert out.shape == (2, 2)
    # matmul reduction order may depend on the column position, so rows agree to rounding
    np.testing.assert_allclose(out[0], out[1], rtol=1e-12, atol=0)


def test_zero_parameters_give_zero_logits():
    zeros = {k: np.zeros(s) for k, s in param_shapes(SMALL.layers()).items()}
    x = np.random.default_rng(1).uniform(-1, 1, size=(3, 3, 9, 64))
    np.testing.assert_array_equal(clf_forward(x, SMALL, zeros).data, 0.0)


def test_identity_kernel_passes_non_negative_input_through():
    arch = CnnArch(input_shape=(1, 5, 7), conv_blocks=(ConvBlock(1, kernel=(1, 1), pool=None),), dense_widths=())
    params = {k: np.zeros(s) for k, s in param_shapes(arch.layers()).items()}
    params["c0.w"][0, 0, 0, 0] = 1.0
    x = np.random.default_rng(2).uniform(0, 1, size=(2, 1, 5, 7))
    np.testing.assert_array_equal(conv_features(x, arch, params).data, x)
    neg = -x
    np.testing.assert_array_equal(conv_features(neg, arch, params).data, 0.0)


def test_wrong_input_shape_rejected():
    clf = init_classifier(SMALL, 0)
    with pytest.raises(ClassifierError):
        clf_forward(np.zeros((1, 3, 9, 63)), SMALL, clf.params)


def test_zero_epochs_return_initialization():
    x, y = toy_set(5)
    clf = train_classifier((x, y), SMALL, TrainHyper(epochs=0), seed=3)
    init = init_classifier(SMALL, 3)
    for k in init.params:
        np.testing.assert_array_equal(clf.params[k], init.params[k])
    assert clf.final_loss is None


def test_initialization_depends_only_on_seed():
    a = train_classifier(toy_set(5, seed=1), SMALL, TrainHyper(epochs=0), seed=4)
    b = train_classifier(toy_set(7, seed=2), SMALL, TrainHyper(epochs=0), seed=4)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_same_seed_gives_bit_identical_params():
    x, y = toy_set(6)
    a = train_classifier((x, y), SMALL, TrainHyper(epochs=2), seed=5)
    b = train_classifier((x, y), SMALL, TrainHyper(epochs=2), seed=5)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    assert a.epoch_losses == b.epoch_losses


@pytest.fixture(scope="module")
def toy_model():
    x, y = toy_set(40)
    return train_classifier((x, y), CnnArch(), TrainHyper(epochs=30), seed=0), (x, y)


def test_separable_toy_reaches_perfect_training_accuracy(toy_model):
    clf, data = toy_model
    m = evaluate(clf, data)
    assert m.accuracy == 1.0
    assert m.confusion[0, 1] == 0 and m.confusion[1, 0] == 0


def test_toy_training_loss_mostly_non_increasing(toy_model):
    clf, _ = toy_model
    losses = np.asarray(clf.epoch_losses)
    assert len(losses) == 30
    assert np.mean(np.diff(losses) <= 0) >= 0.8


def test_empty_class_rejected():
    x, y = toy_set(5)
    with pytest.raises(ClassifierError, match="class 1"):
        train_classifier((x[y == 0], y[y == 0]), SMALL, TrainHyper(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_epoch():
    x, y = toy_set(5)
    with pytest.raises(ClassifierTrainingError, match="epoch 0"):
        train_classifier((x * np.inf, y), SMALL, TrainHyper(epochs=2))


def constant_classifier(label: int) -> Classifier:
    params = {k: np.zeros(s) for k, s in param_shapes(SMALL.layers()).items()}
    params["head.b"][label] = 1.0
    return Classifier(SMALL, params)


def test_constant_left_predictor_scores_half_on_balanced_test():
    x, y = toy_set(70)
    m = evaluate(constant_classifier(0), (x, y))
    assert m.n_test == 140
    assert m.accuracy == 0.5
    assert m.per_class == (1.0, 0.0)


def test_equal_logits_resolve_to_lower_class():
    zeros = {k: np.zeros(s) for k, s in param_shapes(SMALL.layers()).items()}
    x, _ = toy_set(3)
    assert np.all(predict(Classifier(SMALL, zeros), x) == 0)


def test_empty_test_set_rejected():
    with pytest.raises(ClassifierError):
        evaluate(constant_classifier(0), [])
    with pytest.raises(ClassifierError):
        Metrics.from_predictions([], [])


def test_evaluate_twice_identical(toy_model):
    clf, data = toy_model
    a, b = evaluate(clf, data), evaluate(clf, data)
    assert a.accuracy == b.accuracy
    np.testing.assert_array_equal(a.confusion, b.confusion)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60), st.randoms())
def test_metrics_invariants_and_permutation_invariance(pairs, rnd):
    y_true = [a for a, _ in pairs]
    y_pred = [b for _, b in pairs]
    m = Metrics.from_predictions(y_true, y_pred)
    assert m.confusion.sum() == m.n_test == len(pairs)
    assert m.accuracy == pytest.approx(np.trace(m.confusion) / m.n_test)
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    p = Metrics.from_predictions([y_true[i] for i in order], [y_pred[i] for i in order])
    assert p.accuracy == m.accuracy
    np.testing.assert_array_equal(p.confusion, m.confusion)


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50))
def test_argmax_invariant_to_shared_logit_offset(c):
    clf = init_classifier(SMALL, 6)
    x = np.random.default_rng(7).uniform(-1, 1, size=(8, 3, 9, 64))
    shifted = dict(clf.params)
    shifted["head.b"] = clf.params["head.b"] + c
    np.testing.assert_array_equal(predict(clf, x), predict(Classifier(SMALL, shifted), x))


def test_metrics_csv_row():
    m = Metrics.from_predictions([0, 0, 1, 1], [0, 1, 1, 1])
    lines = metrics_csv([("1.0raw", 3, m)]).splitlines()
    assert lines[0] == "condition,seed,accuracy,acc_left,acc_right,n_test"
    assert lines[1] == "1.0raw,3,0.75,0.5,1.0,4"


def test_checkpoint_round_trip(tmp_path):
    arch = CnnArch(conv_blocks=(ConvBlock(4, pool=None), ConvBlock(6, kernel=(3, 3), stride=(1, 2))),
                   dense_widths=(8, 5))
    clf = init_classifier(arch, 9)
    save_classifier(clf, tmp_path / "c.ckpt")
    back = load_classifier(tmp_path / "c.ckpt")
    assert back.arch == arch
    x = np.random.default_rng(8).uniform(-1, 1, size=(4, 3, 9, 64))
    np.testing.assert_array_equal(clf_forward(x, arch, clf.params).data, clf_forward(x, arch, back.params).data)
