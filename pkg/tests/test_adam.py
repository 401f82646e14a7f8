import numpy as np
import pytest

from deblurkit.rrdbnet.adam import AdamState, NonFiniteGradientError, adam_init, adam_step


def _params():
    return {
        "a.weight": np.array([1.0, -2.0, 3.0], dtype=np.float32),
        "a.bias": np.zeros(2, dtype=np.float32),
    }


def test_adam_init_zero_moments():
    state = adam_init(_params())
    assert state.t == 0
    for name, p in _params().items():
        assert state.m[name].shape == p.shape
        assert not state.m[name].any()
        assert not state.v[name].any()


def test_adam_step_zero_gradient_is_noop():
    params = _params()
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    new, state = adam_step(params, grads, adam_init(params), lr=1e-3)
    for k in params:
        np.testing.assert_array_equal(new[k], params[k])
    assert state.t == 1


def test_adam_step_zero_lr_is_bit_identical():
    params = _params()
    grads = {k: np.full_like(v, 0.5) for k, v in params.items()}
    new, _ = adam_step(params, grads, adam_init(params), lr=0.0)
    for k in params:
        np.testing.assert_array_equal(new[k], params[k])


def test_adam_first_step_magnitude():
    # with bias correction the first update is exactly lr * sign(g)
    # (up to the eps in the denominator)
    params = {"w": np.zeros(4, dtype=np.float64)}
    grads = {"w": np.array([0.3, -0.7, 1.5, -2.0])}
    lr = 1e-2
    new, _ = adam_step(params, grads, adam_init(params), lr=lr)
    np.testing.assert_allclose(new["w"], -lr * np.sign(grads["w"]), rtol=1e-6)


def test_adam_matches_reference_formula():
    rng = np.random.default_rng(0)
    params = {"w": rng.standard_normal(6)}
    state = adam_init(params)
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 1e-3
    m = np.zeros(6)
    v = np.zeros(6)
    cur = dict(params)
    for t in range(1, 6):
        g = rng.standard_normal(6)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        expected = cur["w"] - lr * mh / (np.sqrt(vh) + eps)
        cur, state = adam_step(cur, {"w": g}, state, lr=lr, betas=(b1, b2), eps=eps)
        np.testing.assert_allclose(cur["w"], expected, atol=1e-12)
    assert state.t == 5


def test_adam_does_not_mutate_inputs():
    params = _params()
    snapshot = {k: v.copy() for k, v in params.items()}
    grads = {k: np.ones_like(v) for k, v in params.items()}
    state0 = adam_init(params)
    adam_step(params, grads, state0, lr=1e-2)
    for k in params:
        np.testing.assert_array_equal(params[k], snapshot[k])
        assert not state0.m[k].any()


def test_adam_rejects_non_finite_gradient():
    params = _params()
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["a.bias"][0] = np.nan
    with pytest.raises(NonFiniteGradientError, match="a.bias"):
        adam_step(params, grads, adam_init(params))


def test_adam_determinism():
    results = []
    for _ in range(2):
        params = _params()
        state = adam_init(params)
        for step in range(3):
            grads = {k: np.full_like(v, 0.1 * (step + 1)) for k, v in params.items()}
            params, state = adam_step(params, grads, state, lr=1e-3)
        results.append(params)
    for k in results[0]:
        np.testing.assert_array_equal(results[0][k], results[1][k])
