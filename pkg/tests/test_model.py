"""Model stack: initialization, forward heads, exact backprop, checkpoints."""

import numpy as np
import pytest

from hcl.errors import ContractError, ShapeError
from hcl.losses import cross_entropy
from hcl.model import (
    LayerStack,
    ModelParams,
    classify,
    encode,
    init_params,
    load_checkpoint,
    model_backward,
    named_parameters,
    save_checkpoint,
)
from hcl.numeric import finite_diff_grad, make_rng, rel_error

from builders import flatten_params, safe_model_instance, unflatten_into


def small_params(seed=0, **kw):
    return init_params(make_rng(seed), encoder_sizes=[4, 3, 2],
                       classifier_sizes=[2, 3], **kw)


def test_init_glorot_bounds_and_zero_biases():
    rng = make_rng(0)
    params = init_params(rng, [3, 3, 3], [3, 3])
    for name, arr in named_parameters(params).items():
        if ".w" in name:
            # fan_in = fan_out = 3 gives limit exactly 1
            assert float(np.abs(arr).max()) < 1.0
        else:
            assert not arr.any()


def test_init_deterministic_per_seed():
    a = named_parameters(small_params(7))
    b = named_parameters(small_params(7))
    c = named_parameters(small_params(8))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_init_rejects_bad_sizes():
    with pytest.raises(ContractError):
        init_params(make_rng(0), [4], [4, 2])
    with pytest.raises(ContractError):
        init_params(make_rng(0), [4, 0], [0, 2])


def test_model_params_dimension_checks():
    rng = make_rng(1)
    with pytest.raises(ShapeError, match="classifier"):
        init_params(rng, [4, 3], [5, 2])
    with pytest.raises(ShapeError, match="share an output dimension"):
        init_params(rng, [4, 3], [6, 2], encoder2_sizes=[4, 2])
    # two-view classifier consumes the concatenation
    init_params(rng, [4, 3], [6, 2], encoder2_sizes=[5, 3])


def test_encode_identity_layer_passes_through():
    stack = LayerStack(weights=[np.eye(4)], biases=[np.zeros(4)])
    params = ModelParams(encoder1=stack, classifier=LayerStack(
        weights=[np.zeros((4, 2))], biases=[np.zeros(2)],
        output_activation="sigmoid"))
    x = make_rng(2).normal(size=(5, 4))
    z, _ = encode(params, x)
    assert np.array_equal(z, x)


def test_encode_second_view_requires_encoder():
    params = small_params()
    with pytest.raises(ContractError):
        encode(params, np.zeros((1, 4)), view=2)


def test_classify_sigmoid_extreme_logits_safe():
    stack = LayerStack(weights=[np.array([[1.0, 1.0]])], biases=[np.array([1000.0, -2000.0])],
                       output_activation="sigmoid")
    params = ModelParams(
        encoder1=LayerStack(weights=[np.eye(1)], biases=[np.zeros(1)]),
        classifier=stack)
    with np.errstate(over="raise"):
        y, _ = classify(params, np.array([[1000.0]]))
    assert 0.0 <= y[0, 1] < 1e-12
    assert 1.0 - 1e-12 < y[0, 0] <= 1.0
    assert np.all(np.isfinite(y))


def test_classify_softmax_rows_sum_to_one():
    rng = make_rng(3)
    params = init_params(rng, [4, 3], [3, 5], classifier_activation="softmax")
    z, _ = encode(params, rng.normal(size=(7, 4)) * 100.0)
    y, _ = classify(params, z)
    assert np.all(np.abs(y.sum(axis=1) - 1.0) < 1e-12)
    assert np.all(y >= 0.0)


@pytest.mark.parametrize("multiclass", [False, True])
def test_backward_matches_finite_differences_classifier_path(multiclass):
    params, x, _, y, _ = safe_model_instance(10 + multiclass, multiclass=multiclass)
    named = named_parameters(params)
    flat, keys = flatten_params(named)

    def objective(vec):
        unflatten_into(named, keys, vec)
        z, _ = encode(params, x)
        y_hat, _ = classify(params, z)
        return cross_entropy(y_hat, y)[0]

    z, enc_cache = encode(params, x)
    y_hat, cls_cache = classify(params, z)
    _, d_yhat = cross_entropy(y_hat, y)
    grads = model_backward(params, enc1_cache=enc_cache, cls_cache=cls_cache,
                           d_yhat=d_yhat)
    flat_grad = np.concatenate([grads[k].ravel() for k in keys])
    num = finite_diff_grad(lambda m: objective(m.ravel()), flat.reshape(1, -1))
    unflatten_into(named, keys, flat)  # restore
    assert rel_error(flat_grad, num.ravel()) < 1e-5


def test_backward_direct_embedding_gradient():
    params, x, _, _, rng = safe_model_instance(12)
    named = named_parameters(params)
    flat, keys = flatten_params(named)
    w = rng.normal(size=(x.shape[0], params.latent_dim))

    def objective(vec):
        unflatten_into(named, keys, vec)
        z, _ = encode(params, x)
        return float(np.sum(w * z * z))

    z, enc_cache = encode(params, x)
    grads = model_backward(params, enc1_cache=enc_cache, d_z1=2.0 * w * z)
    flat_grad = np.concatenate([grads[k].ravel() for k in keys])
    num = finite_diff_grad(lambda m: objective(m.ravel()), flat.reshape(1, -1))
    unflatten_into(named, keys, flat)
    assert rel_error(flat_grad, num.ravel()) < 1e-5
    # classifier untouched on this path
    assert not grads["cls.w0"].any()


def test_backward_two_view_classifier_subset_rows():
    params, x1, x2, y, _ = safe_model_instance(13, two_view=True)
    named = named_parameters(params)
    flat, keys = flatten_params(named)
    rows = np.array([0, 2, 3])

    def objective(vec):
        unflatten_into(named, keys, vec)
        z1, _ = encode(params, x1, view=1)
        z2, _ = encode(params, x2, view=2)
        s = np.hstack([z1, z2])[rows]
        y_hat, _ = classify(params, s)
        return cross_entropy(y_hat, y[rows])[0]

    z1, c1 = encode(params, x1, view=1)
    z2, c2 = encode(params, x2, view=2)
    s = np.hstack([z1, z2])[rows]
    y_hat, cc = classify(params, s)
    _, d_yhat = cross_entropy(y_hat, y[rows])
    grads = model_backward(params, enc1_cache=c1, enc2_cache=c2, cls_cache=cc,
                           d_yhat=d_yhat, classifier_rows=rows)
    flat_grad = np.concatenate([grads[k].ravel() for k in keys])
    num = finite_diff_grad(lambda m: objective(m.ravel()), flat.reshape(1, -1))
    unflatten_into(named, keys, flat)
    assert rel_error(flat_grad, num.ravel()) < 1e-5


def test_backward_zero_upstream_gives_zero_grads():
    params, x, _, y, _ = safe_model_instance(14)
    z, enc_cache = encode(params, x)
    y_hat, cls_cache = classify(params, z)
    grads = model_backward(params, enc1_cache=enc_cache, cls_cache=cls_cache,
                           d_yhat=np.zeros_like(y_hat))
    assert all(float(np.abs(g).max()) < 1e-8 for g in grads.values())


def test_backward_perfect_predictions_zero_classifier_grad():
    params, x, _, _, _ = safe_model_instance(15)
    z, enc_cache = encode(params, x)
    y_hat, cls_cache = classify(params, z)
    y = (y_hat > 0.5).astype(float)
    # drive predictions to their targets exactly via the clamp region
    _, d_yhat = cross_entropy(y, y)
    grads = model_backward(params, enc1_cache=enc_cache, cls_cache=cls_cache,
                           d_yhat=d_yhat)
    assert all(float(np.abs(g).max()) < 1e-8 for g in grads.values())


def test_checkpoint_round_trip_bit_exact(tmp_path):
    params, _, _, _, _ = safe_model_instance(16, two_view=True)
    path = str(tmp_path / "model.ckpt")
    extra = {"threshold": 0.5, "label_kind": "multilabel"}
    save_checkpoint(params, path, extra)
    loaded, extra2 = load_checkpoint(path)
    a = named_parameters(params)
    b = named_parameters(loaded)
    assert sorted(a) == sorted(b)
    for k in a:
        assert a[k].dtype == b[k].dtype == np.float64
        assert np.array_equal(a[k], b[k])
        assert np.array_equal(a[k].view(np.uint64), b[k].view(np.uint64))
    assert extra2 == extra


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "not_a_checkpoint.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ContractError):
        load_checkpoint(str(path))
