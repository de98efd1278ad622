"""Numerical-core tests: init bounds, gradient oracle, Adam behavior, checkpoints."""

import numpy as np
import pytest

from glab import nnlite
from glab.errors import InvalidArgumentError, NumericError


def test_init_zero_biases():
    params = nnlite.mlp_init([2, 1], seed=123)
    assert params.biases[0].tolist() == [0.0]


def test_init_deterministic():
    a = nnlite.mlp_init([5, 7, 3], seed=42)
    b = nnlite.mlp_init([5, 7, 3], seed=42)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_init_xavier_bound():
    params = nnlite.mlp_init([4, 8, 4], seed=0)
    bound = np.sqrt(6.0 / (4 + 8))  # ~0.7071 on the first layer
    assert np.all(np.abs(params.weights[0]) <= bound)
    assert np.all(np.abs(params.weights[1]) <= np.sqrt(6.0 / (8 + 4)))


def test_init_rejects_bad_sizes():
    with pytest.raises(InvalidArgumentError):
        nnlite.mlp_init([3], seed=0)
    with pytest.raises(InvalidArgumentError):
        nnlite.mlp_init([3, 0, 2], seed=0)


def test_forward_zero_params_gives_zero():
    params = nnlite.mlp_init([3, 5, 2], seed=0)
    for w in params.weights:
        w[:] = 0.0
    out, _ = nnlite.mlp_forward(params, np.array([1.0, -2.0, 3.0]))
    assert np.array_equal(out, np.zeros(2))


def test_forward_single_linear_layer_hand_arith():
    params = nnlite.MlpParams([1, 1], [np.array([[2.0]])], [np.array([1.0])])
    out, _ = nnlite.mlp_forward(params, np.array([3.0]))
    assert out.tolist() == [7.0]


def test_forward_pure():
    params = nnlite.mlp_init([4, 6, 2], seed=7)
    x = np.random.default_rng(1).standard_normal(4)
    a, _ = nnlite.mlp_forward(params, x)
    b, _ = nnlite.mlp_forward(params, x)
    assert np.array_equal(a, b)


def test_forward_dim_mismatch():
    params = nnlite.mlp_init([4, 2], seed=0)
    with pytest.raises(InvalidArgumentError):
        nnlite.mlp_forward(params, np.zeros(5))


def test_backward_zero_grad_gives_zero():
    params = nnlite.mlp_init([3, 4, 2], seed=0)
    _, cache = nnlite.mlp_forward(params, np.ones(3))
    grads = nnlite.mlp_backward(params, cache, np.zeros(2))
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads.weights + grads.biases)


def test_backward_single_linear_mse_hand_derivation():
    # loss = (y - t)^2 with y = w*x + b: dL/dw = 2(y-t)*x, dL/db = 2(y-t)
    params = nnlite.MlpParams([1, 1], [np.array([[2.0]])], [np.array([0.5])])
    x, target = np.array([3.0]), np.array([4.0])
    y, cache = nnlite.mlp_forward(params, x)
    grads = nnlite.mlp_backward(params, cache, 2.0 * (y - target))
    expected = 2.0 * (6.5 - 4.0)
    assert grads.weights[0][0, 0] == pytest.approx(expected * 3.0)
    assert grads.biases[0][0] == pytest.approx(expected)


def _mse_loss_and_grads(params, x, target):
    y, cache = nnlite.mlp_forward(params, x)
    resid = y - target
    return float(np.sum(resid**2)), nnlite.mlp_backward(params, cache, 2.0 * resid)


def _finite_diff_check(params, x, target, h=1e-5):
    """Max relative error of analytic grads vs central differences."""
    _, grads = _mse_loss_and_grads(params, x, target)
    worst = 0.0
    for arrs, garrs in ((params.weights, grads.weights), (params.biases, grads.biases)):
        for arr, garr in zip(arrs, garrs):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                lp, _ = _mse_loss_and_grads(params, x, target)
                arr[idx] = orig - h
                lm, _ = _mse_loss_and_grads(params, x, target)
                arr[idx] = orig
                fd = (lp - lm) / (2 * h)
                rel = abs(fd - garr[idx]) / max(abs(fd), abs(garr[idx]), 1e-4)
                worst = max(worst, rel)
    return worst


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(2024)
    for trial in range(5):
        sizes = [int(rng.integers(2, 8)) for _ in range(int(rng.integers(2, 4)))] + [3]
        params = nnlite.mlp_init(sizes, seed=trial)
        x = rng.standard_normal(sizes[0])
        target = rng.standard_normal(sizes[-1])
        assert _finite_diff_check(params, x, target) < 1e-4


def test_adam_zero_grad_is_identity():
    params = nnlite.mlp_init([3, 5, 2], seed=9)
    state = nnlite.adam_init(params, learning_rate=0.1)
    zeros = nnlite.MlpParams(
        list(params.layer_sizes),
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )
    current = params
    for _ in range(5):
        current, state = nnlite.adam_step(current, zeros, state)
    for a, b in zip(current.weights, params.weights):
        assert np.array_equal(a, b)
    assert state.step_count == 5


def test_adam_scalar_hand_evaluation():
    # param 1.0, grad 1.0, lr 0.1, defaults: first update is ~ lr * sign(grad)
    params = nnlite.MlpParams([1, 1], [np.array([[1.0]])], [np.array([0.0])])
    grads = nnlite.MlpParams([1, 1], [np.array([[1.0]])], [np.array([0.0])])
    state = nnlite.adam_init(params, learning_rate=0.1)
    new_params, new_state = nnlite.adam_step(params, grads, state)
    assert new_params.weights[0][0, 0] == pytest.approx(0.9000000009999999)
    assert new_state.step_count == 1


def test_adam_rejects_nonfinite_grads():
    params = nnlite.mlp_init([2, 2], seed=0)
    grads = params.copy()
    grads.weights[0][0, 0] = np.nan
    with pytest.raises(NumericError):
        nnlite.adam_step(params, grads, nnlite.adam_init(params))


def test_adam_deterministic_trajectory():
    def run():
        rng = np.random.default_rng(5)
        params = nnlite.mlp_init([4, 6, 2], seed=1)
        state = nnlite.adam_init(params, learning_rate=0.01)
        for _ in range(10):
            x = rng.standard_normal(4)
            target = rng.standard_normal(2)
            y, cache = nnlite.mlp_forward(params, x)
            grads = nnlite.mlp_backward(params, cache, 2.0 * (y - target))
            params, state = nnlite.adam_step(params, grads, state)
        return params

    a, b = run(), run()
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_checkpoint_bit_exact_roundtrip(tmp_path):
    params = nnlite.mlp_init([6, 11, 4], seed=77)
    path = tmp_path / "net.glnn"
    nnlite.save_params(params, path)
    loaded = nnlite.load_params(path)
    assert loaded.layer_sizes == params.layer_sizes
    for a, b in zip(loaded.weights + loaded.biases, params.weights + params.biases):
        assert a.tobytes() == b.tobytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.glnn"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(Exception):
        nnlite.load_params(path)
