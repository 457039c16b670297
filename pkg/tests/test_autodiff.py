"""Core tensor-engine tests: forward contracts, gradient checks vs central
finite differences, determinism, and the optimizer update rule."""

import math

import numpy as np
import pytest

import boningknife.autodiff as ad
from boningknife.autodiff import GradTape, Tensor, pause_recording
from boningknife.errors import DimensionError, NumericalError
from boningknife.optim import AdamW

from fdcheck import check_gradients, rand_tensor


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def test_linear_identity():
    x = Tensor([[1.0, 2.0]])
    w = Tensor(np.eye(2))
    b = Tensor(np.zeros(2))
    np.testing.assert_array_equal(ad.linear(x, w, b).data, [[1.0, 2.0]])


def test_linear_zero_weights_gives_bias():
    x = Tensor([[5.0, -3.0, 2.0]])
    w = Tensor(np.zeros((3, 1)))
    b = Tensor([3.0])
    np.testing.assert_array_equal(ad.linear(x, w, b).data, [[3.0]])


def test_linear_matches_loop_oracle():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 2))
    x = np.array([1.0, 1.0, 1.0])
    out = ad.linear(Tensor(x), Tensor(w), Tensor(np.zeros(2))).data
    expected = [sum(x[i] * w[i][j] for i in range(3)) for j in range(2)]
    np.testing.assert_allclose(out, expected)


def test_linear_shape_mismatch_names_shapes():
    with pytest.raises(DimensionError, match=r"\(1, 3\).*\(2, 4\)"):
        ad.linear(Tensor(np.ones((1, 3))), Tensor(np.ones((2, 4))),
                  Tensor(np.zeros(4)))


# ---------------------------------------------------------------------------
# layer norm
# ---------------------------------------------------------------------------

def test_layer_norm_constant_vector_zeroes():
    x = Tensor([5.0, 5.0, 5.0])
    out = ad.layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, [0.0, 0.0, 0.0], atol=1e-12)


def test_layer_norm_already_normalized():
    x = Tensor([-1.0, 1.0])
    out = ad.layer_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-4)


def test_layer_norm_statistics():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(4, 16)) * 3 + 1)
    out = ad.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    assert np.all(np.abs(out.mean(axis=-1)) < 1e-9)
    assert np.all(np.abs(out.var(axis=-1) - 1.0) < 1e-4)


def test_layer_norm_empty_axis_rejected():
    with pytest.raises(DimensionError):
        ad.layer_norm(Tensor(np.zeros((2, 0))), Tensor(np.ones(0)),
                      Tensor(np.zeros(0)))


# ---------------------------------------------------------------------------
# masked softmax
# ---------------------------------------------------------------------------

def test_masked_softmax_uniform():
    scores = Tensor(np.zeros((2, 2)))
    out = ad.masked_softmax(scores, np.ones((2, 2)))
    np.testing.assert_allclose(out.data, np.full((2, 2), 0.5))


def test_masked_softmax_single_support():
    mask = np.zeros((3, 3))
    mask[0, 2] = 1
    mask[1, :] = 1
    mask[2, 0] = 1
    out = ad.masked_softmax(Tensor(np.random.default_rng(1).normal(size=(3, 3))), mask)
    assert out.data[0, 2] == pytest.approx(1.0)
    assert out.data[2, 0] == pytest.approx(1.0)


def test_masked_softmax_known_values():
    scores = Tensor(np.array([[1.0, 2.0, 3.0]] * 3))
    out = ad.masked_softmax(scores, np.ones((3, 3)))
    np.testing.assert_allclose(out.data[0], [0.0900, 0.2447, 0.6652], atol=1e-4)


def test_masked_softmax_rows_sum_to_one_and_masked_exact_zero():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = rng.integers(2, 7)
        mask = (rng.random((n, n)) > 0.4).astype(float)
        out = ad.masked_softmax(Tensor(rng.normal(size=(n, n))), mask).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0)
        assert np.all(out[(mask == 0) & ~np.eye(n, dtype=bool)] == 0.0)


def test_masked_softmax_fully_masked_row_self_fallback():
    mask = np.zeros((2, 2))
    mask[1, 0] = 1
    out = ad.masked_softmax(Tensor(np.zeros((2, 2))), mask).data
    np.testing.assert_allclose(out[0], [1.0, 0.0])  # row 0 empty -> self only
    np.testing.assert_allclose(out[1], [1.0, 0.0])


# ---------------------------------------------------------------------------
# attention mix
# ---------------------------------------------------------------------------

def test_attention_identity_mask_diagonal_weights():
    rng = np.random.default_rng(5)
    n, d, h = 4, 8, 2
    x = Tensor(rng.normal(size=(n, d)))
    weights = []
    out = ad.multi_head_mix(x, x, x, np.eye(n), h, weights)
    np.testing.assert_allclose(weights[0], np.eye(n))
    np.testing.assert_allclose(out.data, x.data)  # self-only rows return v


def test_attention_masked_positions_do_not_leak():
    rng = np.random.default_rng(6)
    n, d, h = 5, 8, 4
    mask = np.ones((n, n))
    mask[1, 3] = 0  # row 1 cannot see position 3
    q = rng.normal(size=(n, d))
    k = rng.normal(size=(n, d))
    v = rng.normal(size=(n, d))
    out1 = ad.multi_head_mix(Tensor(q), Tensor(k), Tensor(v), mask, h).data
    k2, v2 = k.copy(), v.copy()
    k2[3] += 11.0
    v2[3] -= 7.0
    out2 = ad.multi_head_mix(Tensor(q), Tensor(k2), Tensor(v2), mask, h).data
    np.testing.assert_array_equal(out1[1], out2[1])


def test_attention_single_head_matches_scalar_oracle():
    rng = np.random.default_rng(8)
    n, d = 2, 3
    q, k, v = (rng.normal(size=(n, d)) for _ in range(3))
    out = ad.multi_head_mix(Tensor(q), Tensor(k), Tensor(v), np.ones((n, n)), 1).data
    for i in range(n):
        scores = [sum(q[i][a] * k[j][a] for a in range(d)) / math.sqrt(d)
                  for j in range(n)]
        mx = max(scores)
        ex = [math.exp(s - mx) for s in scores]
        w = [e / sum(ex) for e in ex]
        expected = [sum(w[j] * v[j][a] for j in range(n)) for a in range(d)]
        np.testing.assert_allclose(out[i], expected, rtol=1e-12)


def test_attention_head_divisibility_check():
    x = Tensor(np.ones((2, 6)))
    with pytest.raises(DimensionError):
        ad.multi_head_mix(x, x, x, np.ones((2, 2)), 4)


def test_attention_stacked_masks_match_individual_runs():
    rng = np.random.default_rng(9)
    n, d, h, c = 4, 8, 2, 3
    q, k, v = (Tensor(rng.normal(size=(n, d))) for _ in range(3))
    masks = (rng.random((c, n, n)) > 0.3).astype(float)
    batched = ad.multi_head_mix(q, k, v, masks, h).data
    for i in range(c):
        single = ad.multi_head_mix(q, k, v, masks[i], h).data
        np.testing.assert_allclose(batched[i], single, rtol=1e-12)


# ---------------------------------------------------------------------------
# backward: contracts and finite differences
# ---------------------------------------------------------------------------

def test_backward_linear_derivative_is_input():
    x = np.array([1.0, 2.0, 3.0])
    w = Tensor(np.zeros((3, 2)), requires_grad=True)
    with GradTape() as tape:
        out = ad.sum_all(ad.linear(Tensor(x), w, Tensor(np.zeros(2))))
    tape.backward(out)
    np.testing.assert_allclose(w.grad, np.stack([x, x], axis=1))


def test_backward_constant_loss_zero_grads():
    w = Tensor(np.ones(3), requires_grad=True)
    with GradTape() as tape:
        loss = ad.sum_all(ad.mul(Tensor(np.zeros(3)), w))
    tape.backward(loss)
    np.testing.assert_array_equal(w.grad, np.zeros(3))


def test_backward_requires_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with GradTape() as tape:
        y = ad.mul(w, w)
    with pytest.raises(DimensionError):
        tape.backward(y)


def test_unused_parameter_gets_no_gradient():
    used = Tensor(np.ones(2), requires_grad=True)
    unused = Tensor(np.ones(2), requires_grad=True)
    with GradTape() as tape:
        loss = ad.sum_all(ad.mul(used, used))
    tape.backward(loss)
    assert unused.grad is None  # treated as zero downstream


def test_shared_input_accumulates_once_per_use():
    x = Tensor(np.array([3.0]), requires_grad=True)
    with GradTape() as tape:
        loss = ad.sum_all(ad.add(ad.mul(x, x), x))  # x^2 + x
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [7.0])


@pytest.mark.parametrize("seed", range(5))
def test_composed_graph_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rand_tensor(rng, (3, 4))
    w1 = rand_tensor(rng, (4, 5))
    b1 = rand_tensor(rng, (5,), scale=0.1)
    g = Tensor(np.ones(5), requires_grad=True)
    b = Tensor(np.zeros(5), requires_grad=True)

    def f():
        h = ad.gelu(ad.linear(x, w1, b1))
        h = ad.layer_norm(h, g, b)
        return ad.sum_all(ad.mul(h, h))

    check_gradients(f, [x, w1, b1, g, b])


def test_gelu_gradcheck():
    rng = np.random.default_rng(11)
    x = rand_tensor(rng, (4, 3))
    check_gradients(lambda: ad.sum_all(ad.gelu(x)), [x])


def test_masked_softmax_gradcheck():
    rng = np.random.default_rng(12)
    scores = rand_tensor(rng, (4, 4))
    mask = (rng.random((4, 4)) > 0.3).astype(float)
    coef = rng.normal(size=(4, 4))
    check_gradients(
        lambda: ad.sum_all(ad.mul(ad.masked_softmax(scores, mask), Tensor(coef))),
        [scores])


def test_attention_gradcheck_with_stacked_mask():
    rng = np.random.default_rng(13)
    n, d, h, c = 3, 4, 2, 2
    q, k, v = (rand_tensor(rng, (n, d)) for _ in range(3))
    mask = (rng.random((c, n, n)) > 0.3).astype(float)
    coef = rng.normal(size=(c, n, d))
    check_gradients(
        lambda: ad.sum_all(ad.mul(ad.multi_head_mix(q, k, v, mask, h), Tensor(coef))),
        [q, k, v])


def test_span_products_values_and_gradcheck():
    p = Tensor(np.array([0.9, 0.8, 0.5]), requires_grad=True)
    starts, ends = np.array([0, 0, 1, 2]), np.array([0, 1, 2, 2])
    g = ad.span_products(p, starts, ends)
    np.testing.assert_allclose(g.data, [0.9, 0.72, 0.4, 0.5])
    coef = np.array([1.0, -2.0, 0.5, 3.0])
    check_gradients(lambda: ad.sum_all(ad.mul(
        ad.span_products(p, starts, ends), Tensor(coef))), [p])


def test_span_products_clamps_underflow():
    n = 40
    p = Tensor(np.full(n, 1e-3))
    g = ad.span_products(p, np.array([0]), np.array([n - 1]))
    assert g.data[0] == pytest.approx(math.exp(-50.0))


def test_cross_entropy_values_and_gradcheck():
    rng = np.random.default_rng(14)
    logits = rand_tensor(rng, (6, 3))
    labels = rng.integers(0, 3, size=6)
    loss = ad.cross_entropy_mean(logits, labels)
    # oracle: mean of -log softmax picked per row
    z = logits.data
    probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    expected = -np.log(probs[np.arange(6), labels]).mean()
    assert float(loss.data) == pytest.approx(expected, rel=1e-12)
    check_gradients(lambda: ad.cross_entropy_mean(logits, labels), [logits])


def test_binary_positive_matches_softmax_and_gradcheck():
    rng = np.random.default_rng(15)
    logits = rand_tensor(rng, (5, 2))
    p = ad.binary_positive(logits)
    np.testing.assert_allclose(p.data, ad.softmax_probs(logits)[:, 1], rtol=1e-12)
    coef = rng.normal(size=5)
    check_gradients(lambda: ad.sum_all(ad.mul(
        ad.binary_positive(logits), Tensor(coef))), [logits])


def test_span_bilinear_gradcheck():
    rng = np.random.default_rng(16)
    hs = rand_tensor(rng, (3, 2))
    he = rand_tensor(rng, (3, 2))
    u = rand_tensor(rng, (2, 2, 2))
    coef = rng.normal(size=(3, 3, 2))
    check_gradients(lambda: ad.sum_all(ad.mul(
        ad.span_bilinear(hs, he, u), Tensor(coef))), [hs, he, u])


def test_gather_and_take_gradcheck():
    rng = np.random.default_rng(17)
    x = rand_tensor(rng, (5, 3))
    idx = np.array([0, 2, 2, 4])
    coef = rng.normal(size=(4, 3))
    check_gradients(lambda: ad.sum_all(ad.mul(ad.gather_rows(x, idx), Tensor(coef))),
                    [x])
    y = rand_tensor(rng, (3, 4, 2))
    per = np.array([1, 0, 3])
    coef2 = rng.normal(size=(3, 2))
    check_gradients(lambda: ad.sum_all(ad.mul(ad.take_per_batch(y, per), Tensor(coef2))),
                    [y])


def test_concat_expand_reshape_gradcheck():
    rng = np.random.default_rng(18)
    a = rand_tensor(rng, (2, 3))
    b = rand_tensor(rng, (2, 2))
    coef = rng.normal(size=(4, 2, 5))
    check_gradients(lambda: ad.sum_all(ad.mul(
        ad.expand0(ad.concat([a, b], axis=-1), 4), Tensor(coef))), [a, b])
    c = rand_tensor(rng, (6,))
    check_gradients(lambda: ad.sum_all(ad.mul(
        ad.reshape(c, (2, 3)), Tensor(rng.normal(size=(2, 3))))), [c])


# ---------------------------------------------------------------------------
# tape mechanics
# ---------------------------------------------------------------------------

def test_pause_recording_blocks_gradients():
    x = Tensor(np.ones(3), requires_grad=True)
    with GradTape() as tape:
        with pause_recording():
            hidden = ad.mul(x, x)
        loss = ad.sum_all(ad.mul(Tensor(hidden.data), Tensor(np.ones(3))))
    tape.backward(loss)
    assert x.grad is None


def test_determinism_same_seed_bit_identical():
    def run():
        rng = np.random.default_rng(42)
        x = Tensor(rng.normal(size=(4, 8)))
        q = Tensor(rng.normal(size=(8, 8)))
        out = ad.multi_head_mix(ad.matmul(x, q), x, x, np.ones((4, 4)), 2)
        return out.data.copy()

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_forward_checked_mode_rejects_nonfinite():
    ad.set_checked(True)
    try:
        with pytest.raises(NumericalError):
            ad.mul(Tensor([1e308]), Tensor([1e308]))
    finally:
        ad.set_checked(False)


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------

def test_adamw_zero_grad_no_decay_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.0)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adamw_zero_grad_decay_scales_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.5)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) * (1 - 0.1 * 0.5))


def test_adamw_single_step_matches_hand_computation():
    p = Tensor(np.array([1.0]), requires_grad=True)
    lr, b1, b2, eps, wd = 1e-3, 0.9, 0.999, 1e-8, 0.01
    opt = AdamW({"p": p}, lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)
    p.grad = np.array([1.0])
    opt.step()
    m = (1 - b1) * 1.0
    v = (1 - b2) * 1.0
    mhat = m / (1 - b1)
    vhat = v / (1 - b2)
    expected = 1.0 * (1 - lr * wd) - lr * mhat / (math.sqrt(vhat) + eps)
    assert p.data[0] == pytest.approx(expected, rel=1e-12)


def test_adamw_nan_grad_aborts():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW({"p": p})
    p.grad = np.array([np.nan])
    with pytest.raises(NumericalError, match="p"):
        opt.step()


def test_adamw_subset_step_leaves_other_params():
    a = Tensor(np.array([1.0]), requires_grad=True)
    b = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW({"a": a, "b": b}, lr=0.1)
    a.grad = np.array([1.0])
    b.grad = np.array([1.0])
    opt.step(names=["a"])
    assert a.data[0] != 1.0
    assert b.data[0] == 1.0
    assert opt.state["a"].t == 1
    assert opt.state["b"].t == 0
