import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import numeric_grad
from sparsenet.data import Dataset, synthetic_separable
from sparsenet.errors import FormatError, NumericError, ShapeError
from sparsenet.linalg import SparsityPattern, make_rng
from sparsenet.nn import (
    SGD,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Model,
    ReLU,
    TrainConfig,
    backward,
    build_lenet5,
    build_lenet300,
    build_mlp,
    evaluate,
    forward,
    load_checkpoint,
    read_tensor,
    save_checkpoint,
    sgd_step,
    softmax_cross_entropy,
    train,
    write_tensor,
)
from sparsenet.topology import RadixSpec, radix_net, trim_inputs

LN10 = math.log(10)


def rand_mask(shape, keep, seed):
    return SparsityPattern(make_rng(seed, "mask").random(shape) < keep)


# --- builders & shapes --------------------------------------------------------


def test_lenet300_weight_count_and_logits():
    m = build_lenet300(seed=0)
    assert m.n_weights() == 784 * 300 + 300 * 100 + 100 * 10 == 266200
    logits, _ = forward(m, np.zeros((5, 1, 28, 28), np.float32))
    assert logits.shape == (5, 10)


def test_lenet300_accepts_flat_input():
    m = build_lenet300(seed=0)
    x = make_rng(0).normal(size=(3, 784)).astype(np.float32)
    assert np.array_equal(forward(m, x)[0], forward(m, x.reshape(3, 1, 28, 28))[0])


def test_lenet300_radix_masks():
    t = trim_inputs(radix_net(RadixSpec((10, 10), (8, 3, 1))), 16)
    m = build_lenet300({"fc1": t.masks[0], "fc2": t.masks[1]}, seed=0)
    assert m.layer_sparsities() == pytest.approx([0.9, 0.9, 0.0])
    assert not m.layer("fc1").weight[~t.masks[0].bits].any()


def test_lenet300_mask_shape_mismatch():
    with pytest.raises(ShapeError):
        build_lenet300({"fc1": SparsityPattern.ones((300, 784))})
    with pytest.raises(ShapeError):
        build_lenet300({"fc9": SparsityPattern.ones((784, 300))})


def test_lenet5_shapes():
    m = build_lenet5(seed=0)
    assert [l.name for l in m.weight_layers()] == ["conv1", "conv2", "fc1", "fc2"]
    assert m.layer("fc1").weight.shape == (800, 500)
    assert forward(m, np.zeros((2, 1, 28, 28), np.float32))[0].shape == (2, 10)


def test_lenet5_cifar_shape():
    m = build_lenet5(seed=0, input_shape=(3, 32, 32))
    assert m.layer("fc1").weight.shape == (1250, 500)
    assert forward(m, np.zeros((2, 3, 32, 32), np.float32))[0].shape == (2, 10)


def exact_mask(shape, keep_fraction, seed):
    n = int(np.prod(shape))
    bits = np.zeros(n, bool)
    bits[make_rng(seed, "mask").permutation(n)[: round(keep_fraction * n)]] = True
    return SparsityPattern(bits.reshape(shape))


def test_lenet5_conv_masks_at_95_percent():
    masks = {"conv1": exact_mask((20, 1, 5, 5), 0.05, 0), "conv2": exact_mask((50, 20, 5, 5), 0.05, 1)}
    m = build_lenet5(masks, seed=0)
    for name in masks:
        w = m.layer(name).weight
        assert np.count_nonzero(w) == round(0.05 * w.size)


def test_forward_shape_mismatch():
    with pytest.raises(ShapeError):
        forward(build_lenet300(seed=0), np.zeros((2, 1, 27, 28), np.float32))


def test_model_shape_chain_checked():
    with pytest.raises(ShapeError):
        Model([Dense("a", np.zeros((4, 3)), np.zeros(3)), Dense("b", np.zeros((4, 2)), np.zeros(2))], (4,))


def test_same_seed_same_init():
    a, b = build_lenet300(seed=7), build_lenet300(seed=7)
    for la, lb in zip(a.weight_layers(), b.weight_layers()):
        assert la.weight.tobytes() == lb.weight.tobytes()


# --- forward -------------------------------------------------------------------


def test_zero_model_gives_zero_logits():
    m = build_lenet300(seed=0)
    for l in m.weight_layers():
        l.weight[...] = 0
        l.bias[...] = 0
    assert not forward(m, make_rng(0).normal(size=(4, 784)))[0].any()


def test_identity_fc():
    m = Model([Dense("fc", np.eye(5), np.zeros(5))], (5,))
    x = make_rng(1).normal(size=(3, 5))
    assert np.array_equal(forward(m, x)[0], x)


@pytest.mark.parametrize("s", [0.5, 0.9, 0.99])
def test_csr_forward_matches_dense(s):
    rng = make_rng(2, s)
    w = rng.normal(size=(300, 100)).astype(np.float32)
    mask = rand_mask(w.shape, 1 - s, 3)
    x = rng.normal(size=(64, 300)).astype(np.float32)
    dense = Dense("d", w.copy(), rng.normal(size=100).astype(np.float32), mask)
    sparse = Dense("s", w.copy(), dense.bias.copy(), mask, use_csr=True)
    yd, _ = dense.forward(x)
    ys, _ = sparse.forward(x)
    assert np.max(np.abs(ys - yd)) <= 1e-5 * np.max(np.abs(yd))
    dy = rng.normal(size=yd.shape).astype(np.float32)
    (dxd, gd), (dxs, gs) = dense.backward(dy, x), sparse.backward(dy, x)
    assert np.max(np.abs(dxs - dxd)) <= 1e-5 * np.max(np.abs(dxd))
    assert np.array_equal(gd["weight"], gs["weight"])


# --- loss & gradients --------------------------------------------------------------


def test_uniform_logits_loss_is_ln10():
    loss, grad = softmax_cross_entropy(np.zeros((4, 10)), np.array([0, 3, 5, 9]))
    assert loss == pytest.approx(2.302585, abs=1e-6)
    assert grad.sum(axis=1) == pytest.approx(np.zeros(4), abs=1e-15)


def test_loss_batch_mismatch():
    with pytest.raises(ShapeError):
        softmax_cross_entropy(np.zeros((4, 10)), np.zeros(3, dtype=int))


@pytest.mark.parametrize("builder", [build_lenet300, build_lenet5])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_init_loss_near_ln10(builder, seed):
    x = make_rng(seed, "x").normal(size=(500, 1, 28, 28)).astype(np.float32)
    y = np.arange(500) % 10
    loss, _ = softmax_cross_entropy(forward(builder(seed=seed), x)[0], y)
    assert abs(loss - LN10) < 0.1


def fc_model(masked):
    rng = make_rng(11)
    m1 = rand_mask((4, 6), 0.6, 1) if masked else None
    m2 = rand_mask((6, 3), 0.6, 2) if masked else None
    layers = [
        Flatten(),
        Dense("fc1", rng.normal(size=(4, 6)), rng.normal(size=6) * 0.1, m1),
        ReLU("relu1"),
        Dense("fc2", rng.normal(size=(6, 3)), rng.normal(size=3) * 0.1, m2),
    ]
    return Model(layers, (4,)), rng.normal(size=(5, 4))


def conv_model(masked):
    rng = make_rng(12)
    layers = [
        Conv2D("conv1", rng.normal(size=(2, 1, 3, 3)), rng.normal(size=2) * 0.1, rand_mask((2, 1, 3, 3), 0.6, 3) if masked else None),
        ReLU("relu1"),
        MaxPool2D("pool1", 2),
        Flatten(),
        Dense("fc1", rng.normal(size=(8, 3)), rng.normal(size=3) * 0.1, rand_mask((8, 3), 0.6, 4) if masked else None),
    ]
    return Model(layers, (1, 6, 6)), rng.normal(size=(4, 1, 6, 6))


def strided_conv_model(masked):
    rng = make_rng(13)
    layers = [
        Conv2D("conv1", rng.normal(size=(3, 2, 3, 3)) * 0.5, rng.normal(size=3) * 0.1, rand_mask((3, 2, 3, 3), 0.5, 5) if masked else None, stride=2),
        MaxPool2D("pool1", 2),
        Flatten(),
        Dense("fc1", rng.normal(size=(3, 3)), rng.normal(size=3) * 0.1, rand_mask((3, 3), 0.7, 6) if masked else None),
    ]
    return Model(layers, (2, 7, 7)), rng.normal(size=(3, 2, 7, 7))


@pytest.mark.parametrize("make", [fc_model, conv_model, strided_conv_model])
@pytest.mark.parametrize("masked", [False, True])
def test_gradients_match_finite_differences(make, masked):
    model, x = make(masked)
    assert sum(p.size for l in model.weight_layers() for p in l.params().values()) <= 200
    y = np.arange(len(x)) % 3

    def loss():
        logits, _ = forward(model, x)
        return softmax_cross_entropy(logits, y)[0]

    logits, caches = forward(model, x)
    _, grads = backward(model, caches, logits, y)
    for layer, g in zip(model.layers, grads):
        for key, param in layer.params().items():
            analytic = g[key]
            numeric = numeric_grad(loss, param, h=1e-5)
            keep = np.ones(param.shape, bool)
            if key == "weight" and layer.mask is not None:
                keep = layer.mask.bits
                assert not analytic[~keep].any()
            err = np.max(np.abs(analytic[keep] - numeric[keep])) / max(np.max(np.abs(numeric[keep])), 1e-12)
            assert err < 1e-4, f"{layer.name}.{key}: {err}"


def test_input_gradient_matches_finite_differences():
    model, x = conv_model(False)
    y = np.arange(len(x)) % 3
    # prepend a parameter-free layer so backward has to produce an input gradient for conv1
    logits, caches = forward(model, x)
    loss, dy = softmax_cross_entropy(logits, y)
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        dy, _ = layer.backward(dy, cache)
    numeric = numeric_grad(lambda: softmax_cross_entropy(forward(model, x)[0], y)[0], x)
    assert np.max(np.abs(dy - numeric)) / np.max(np.abs(numeric)) < 1e-4


def test_maxpool_routes_gradient_to_first_max():
    pool = MaxPool2D("p", 2)
    x = np.array([[[[1.0, 3.0], [3.0, 0.0]]]])
    y, cache = pool.forward(x)
    assert y.item() == 3.0
    dx, _ = pool.backward(np.ones_like(y), cache)
    assert dx.tolist() == [[[[0.0, 1.0], [0.0, 0.0]]]]


# --- SGD -----------------------------------------------------------------------------


def test_zero_gradients_leave_model_unchanged():
    m = build_lenet300(seed=0)
    before = [l.weight.copy() for l in m.weight_layers()]
    grads = [{k: np.zeros_like(p) for k, p in l.params().items()} for l in m.layers]
    sgd_step(m, grads, TrainConfig())
    assert all(np.array_equal(b, l.weight) for b, l in zip(before, m.weight_layers()))


def test_single_weight_update():
    m = Model([Dense("fc", np.array([[1.0]]), np.array([0.0]))], (1,))
    sgd_step(m, [{"weight": np.array([[0.5]]), "bias": np.array([0.0])}], TrainConfig(learning_rate=0.1, momentum=0.0))
    assert m.layer("fc").weight.item() == pytest.approx(0.95)


def test_momentum_accumulates():
    m = Model([Dense("fc", np.array([[1.0]]), np.array([0.0]))], (1,))
    opt = SGD(m, 0.1, 0.9)
    g = [{"weight": np.array([[1.0]]), "bias": np.array([0.0])}]
    opt.step(m, g)
    opt.step(m, g)
    # v1 = 1, v2 = 1.9 -> w = 1 - 0.1 - 0.19
    assert m.layer("fc").weight.item() == pytest.approx(0.71)


def test_non_finite_gradient_reports_layer():
    m = build_lenet300(seed=0)
    grads = [{k: np.zeros_like(p) for k, p in l.params().items()} for l in m.layers]
    idx = m.layers.index(m.layer("fc2"))
    grads[idx]["weight"][0, 0] = np.nan
    with pytest.raises(NumericError) as info:
        sgd_step(m, grads, TrainConfig())
    assert info.value.layer == idx


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.99))
def test_mask_freeze_under_random_sgd(seed, keep):
    rng = make_rng(seed)
    m = build_mlp([12, 8, 5], {"fc1": rand_mask((12, 8), keep, seed), "fc2": rand_mask((8, 5), 0.5, seed + 1)}, seed=seed)
    opt = SGD(m, 0.05, 0.9)
    for _ in range(1000):
        grads = [{k: rng.normal(size=p.shape).astype(p.dtype) for k, p in l.params().items()} for l in m.layers]
        opt.step(m, grads)
        for l in m.weight_layers():
            assert not l.weight[~l.mask.bits].any()


def test_mask_freeze_through_training():
    ds = synthetic_separable(400, 20, 4, make_rng(0))
    masks = {"fc1": rand_mask((20, 16), 0.3, 1), "fc2": rand_mask((16, 4), 0.5, 2)}
    m = build_mlp([20, 16, 4], masks, seed=0)
    train(m, ds, TrainConfig(steps=1000, batch_size=20, learning_rate=0.05, eval_every=500))
    for name, mask in masks.items():
        assert not m.layer(name).weight[~mask.bits].any()


# --- evaluate ------------------------------------------------------------------------


def test_evaluate_constant_predictor():
    ds = Dataset(np.zeros((100, 3), np.float32), np.arange(100) % 10)
    m = Model([Dense("fc", np.zeros((3, 10), np.float32), np.eye(10, dtype=np.float32)[4])], (3,))
    acc, loss = evaluate(m, ds)
    assert acc == 0.1
    assert loss == pytest.approx(math.log(9 + math.e) - 0.1, abs=1e-6)  # one in ten rows sees the +1 logit


def test_evaluate_memorizing_model():
    x = np.eye(10, dtype=np.float32)
    m = Model([Dense("fc", np.eye(10, dtype=np.float32) * 10, np.zeros(10, np.float32))], (10,))
    assert evaluate(m, Dataset(x, np.arange(10)))[0] == 1.0


def test_evaluate_empty():
    with pytest.raises(ValueError):
        evaluate(build_lenet300(seed=0), Dataset(np.zeros((0, 784), np.float32), np.zeros(0, int)))


# --- train ---------------------------------------------------------------------------


def tiny_setup(seed=0, masks=None):
    ds = synthetic_separable(300, 10, 3, make_rng(5))
    return build_mlp([10, 12, 3], masks, seed=seed), ds


def test_zero_steps_is_a_no_op():
    m, ds = tiny_setup()
    before = m.copy()
    res = train(m, ds, TrainConfig(steps=0))
    assert res.metrics == [] and res.steps == 0
    for a, b in zip(before.weight_layers(), m.weight_layers()):
        assert np.array_equal(a.weight, b.weight)


def test_training_is_bit_reproducible():
    runs = []
    for _ in range(2):
        m, ds = tiny_setup()
        res = train(m, ds, TrainConfig(steps=120, batch_size=16, eval_every=25, seed=3))
        runs.append([r.deterministic() for r in res.metrics])
    assert runs[0] == runs[1]
    assert [r[0] for r in runs[0]] == [25, 50, 75, 100, 120]


def test_all_ones_masks_match_dense():
    ones = {"fc1": SparsityPattern.ones((10, 12)), "fc2": SparsityPattern.ones((12, 3))}
    dense, ds = tiny_setup()
    masked, _ = tiny_setup(masks=ones)
    cfg = TrainConfig(steps=100, batch_size=16, eval_every=20, seed=1)
    a = [r.deterministic()[:3] for r in train(dense, ds, cfg).metrics]
    b = [r.deterministic()[:3] for r in train(masked, ds, cfg).metrics]
    assert a == b


def test_separable_two_class_500_steps():
    ds = synthetic_separable(1000, 20, 2, make_rng(8))
    test = synthetic_separable(1000, 20, 2, make_rng(8))
    m = build_mlp([20, 16, 2], seed=0)
    res = train(m, ds, TrainConfig(steps=500, batch_size=20, eval_every=500), test=test)
    assert res.metrics[-1].test_accuracy >= 0.95


def test_hooks_see_every_step():
    seen = []
    m, ds = tiny_setup()
    train(m, ds, TrainConfig(steps=7, batch_size=50), [lambda step, model, opt: seen.append(step)])
    assert seen == list(range(1, 8))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_reports_step():
    m, ds = tiny_setup()
    bad = Dataset(ds.images.copy(), ds.labels)
    bad.images[:] = np.inf
    with pytest.raises(NumericError) as info:
        train(m, bad, TrainConfig(steps=3))
    assert info.value.step == 1


@pytest.mark.parametrize("kw", [{"learning_rate": 0}, {"momentum": 1.0}, {"batch_size": 0}, {"epochs": 1, "steps": 1}, {"eval_every": 0}])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# --- checkpoints ---------------------------------------------------------------------------


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_tensor_round_trip(tmp_path, dtype):
    a = make_rng(0).normal(size=(3, 4, 5)).astype(dtype)
    write_tensor(tmp_path / "t.spnt", a)
    b = read_tensor(tmp_path / "t.spnt")
    assert b.dtype == a.dtype and b.tobytes() == a.tobytes()
    raw = (tmp_path / "t.spnt").read_bytes()
    assert raw[:4] == b"SPNT" and raw[4:8] == (1 if dtype == np.float32 else 2).to_bytes(4, "little")


def test_tensor_errors(tmp_path):
    write_tensor(tmp_path / "t.spnt", np.ones(4, np.float32))
    raw = (tmp_path / "t.spnt").read_bytes()
    (tmp_path / "short.spnt").write_bytes(raw[:-1])
    (tmp_path / "magic.spnt").write_bytes(b"XXXX" + raw[4:])
    for name in ("short.spnt", "magic.spnt"):
        with pytest.raises(FormatError):
            read_tensor(tmp_path / name)
    with pytest.raises(ValueError):
        write_tensor(tmp_path / "i.spnt", np.ones(3, np.int32))


@pytest.mark.parametrize("builder", [build_lenet300, build_lenet5])
def test_checkpoint_round_trip_bit_exact(tmp_path, builder):
    m = builder(seed=4)
    first = m.weight_layers()[0]
    m.set_masks({first.name: rand_mask(first.weight.shape, 0.2, 9)})
    save_checkpoint(m, tmp_path / "ck", step=17, config={"note": "x"})
    back, manifest = load_checkpoint(tmp_path / "ck")
    assert manifest["step"] == 17 and manifest["architecture"] == m.name
    assert back.masks == m.masks
    for a, b in zip(m.weight_layers(), back.weight_layers()):
        assert a.weight.tobytes() == b.weight.tobytes()
        assert a.bias.tobytes() == b.bias.tobytes()
    x = make_rng(1).normal(size=(3, 1, 28, 28)).astype(np.float32)
    assert forward(m, x)[0].tobytes() == forward(back, x)[0].tobytes()


def test_checkpoint_rejects_nonzero_masked_weight(tmp_path):
    m = build_lenet300(seed=0)
    m.set_masks({"fc3": rand_mask((100, 10), 0.5, 1)})
    save_checkpoint(m, tmp_path)
    w = m.layer("fc3").weight.copy()
    w[~m.layer("fc3").mask.bits] = 1.0
    write_tensor(tmp_path / "fc3.weight.spnt", w)
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path)


def test_checkpoint_rejects_wrong_shape(tmp_path):
    save_checkpoint(build_lenet300(seed=0), tmp_path)
    write_tensor(tmp_path / "fc3.bias.spnt", np.zeros(11, np.float32))
    with pytest.raises(ShapeError):
        load_checkpoint(tmp_path)


def test_checkpoint_missing_manifest(tmp_path):
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path)
