import numpy as np
import pytest

from deblurkit.rrdbnet.net import (
    NetConfig,
    init_params,
    net_backward,
    net_forward,
    param_specs,
    rdb_backward,
    rdb_forward,
    rrdb_backward,
    rrdb_forward,
)
from deblurkit.rrdbnet.ops import mse_loss, mse_loss_backward

SMALL = NetConfig(num_rrdb=1, base_channels=8)


def _zero_params(config):
    return {name: np.zeros(shape, dtype=np.float32) for name, shape in param_specs(config)}


def test_net_config_validation_and_roundtrip():
    cfg = NetConfig(num_rrdb=2, base_channels=16, residual_scale=0.5)
    assert NetConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        NetConfig(num_rrdb=0)
    with pytest.raises(ValueError):
        NetConfig(base_channels=-1)
    with pytest.raises(ValueError):
        NetConfig(rdb_per_rrdb=0)


def test_param_specs_canonical_order_and_shapes():
    cfg = NetConfig(num_rrdb=2, base_channels=8)
    specs = param_specs(cfg)
    names = [n for n, _ in specs]
    assert names[0] == "first_conv.weight"
    assert names[1] == "first_conv.bias"
    assert "rrdb0.rdb0.conv1.weight" in names
    assert "rrdb1.rdb2.conv5.weight" in names
    assert names[-2] == "last_conv.weight"
    shapes = dict(specs)
    assert shapes["first_conv.weight"] == (8, 1, 3, 3)
    # dense growth: conv l sees C + (l-1)*C input channels
    assert shapes["rrdb0.rdb0.conv1.weight"] == (8, 8, 3, 3)
    assert shapes["rrdb0.rdb0.conv3.weight"] == (8, 24, 3, 3)
    assert shapes["rrdb0.rdb0.conv5.weight"] == (8, 40, 3, 3)
    assert shapes["last_conv.weight"] == (1, 8, 3, 3)
    assert shapes["last_conv.bias"] == (1,)


def test_init_params_deterministic_and_scaled():
    cfg = SMALL
    p1 = init_params(cfg, seed=0)
    p2 = init_params(cfg, seed=0)
    p3 = init_params(cfg, seed=1)
    for name in p1:
        np.testing.assert_array_equal(p1[name], p2[name])
        assert p1[name].dtype == np.float32
    assert any(np.abs(p1[n] - p3[n]).max() > 0 for n in p1 if n.endswith("weight"))
    for name in p1:
        if name.endswith("bias"):
            assert not p1[name].any()
    # He-uniform bound, with the 0.1 gain on fusion + output convs
    w = p1["first_conv.weight"]
    bound = np.sqrt(6.0 / (1 * 9))
    assert np.abs(w).max() <= bound
    fusion = p1["rrdb0.rdb0.conv5.weight"]
    assert np.abs(fusion).max() <= 0.1 * np.sqrt(6.0 / (5 * 8 * 9))
    last = p1["last_conv.weight"]
    assert np.abs(last).max() <= 0.1 * np.sqrt(6.0 / (8 * 9))


def test_rdb_zero_params_is_identity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 8, 6, 6)).astype(np.float32)
    out, _ = rdb_forward(x, _zero_params(SMALL), "rrdb0.rdb0", SMALL)
    assert np.abs(out - x).max() <= 1e-12


def test_rrdb_zero_params_is_double_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 8, 6, 6)).astype(np.float32)
    out, _ = rrdb_forward(x, _zero_params(SMALL), "rrdb0", SMALL)
    assert np.abs(out - 2.0 * x).max() <= 1e-12


def test_residual_scale_scales_fusion():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 8, 6, 6)).astype(np.float32)
    params = init_params(SMALL, seed=3)
    half_cfg = NetConfig(num_rrdb=1, base_channels=8, residual_scale=0.5)
    full, _ = rdb_forward(x, params, "rrdb0.rdb0", SMALL)
    half, _ = rdb_forward(x, params, "rrdb0.rdb0", half_cfg)
    np.testing.assert_allclose(half - x, 0.5 * (full - x), rtol=1e-5, atol=1e-6)


def test_rrdb_equals_three_rdb_chain_plus_residual():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 8, 6, 6)).astype(np.float32)
    params = init_params(SMALL, seed=4)
    out, _ = rrdb_forward(x, params, "rrdb0", SMALL)
    y = x
    for j in range(3):
        y, _ = rdb_forward(y, params, f"rrdb0.rdb{j}", SMALL)
    # block residual adds the scaled chain output onto the input
    np.testing.assert_allclose(out, x + SMALL.residual_scale * y, atol=1e-5)


def test_net_forward_shapes():
    params = init_params(SMALL, seed=5)
    for h, w in ((8, 8), (16, 24), (64, 64)):
        x = np.zeros((2, 1, h, w), dtype=np.float32)
        out, _ = net_forward(x, params, SMALL)
        assert out.shape == (2, 1, h, w)


def test_net_forward_rejects_bad_input():
    params = init_params(SMALL, seed=6)
    with pytest.raises(ValueError):
        net_forward(np.zeros((1, 2, 8, 8), dtype=np.float32), params, SMALL)
    with pytest.raises(ValueError):
        net_forward(np.zeros((1, 1, 7, 8), dtype=np.float32), params, SMALL)


def test_net_forward_preserves_batch_order():
    params = init_params(SMALL, seed=7)
    rng = np.random.default_rng(8)
    a = rng.random((1, 1, 8, 8)).astype(np.float32)
    b = rng.random((1, 1, 8, 8)).astype(np.float32)
    both, _ = net_forward(np.concatenate([a, b]), params, SMALL)
    out_a, _ = net_forward(a, params, SMALL)
    out_b, _ = net_forward(b, params, SMALL)
    np.testing.assert_allclose(both[0], out_a[0], atol=1e-6)
    np.testing.assert_allclose(both[1], out_b[0], atol=1e-6)


def _net_gradcheck(name, params, x, target, config, h=1e-4):
    """Central finite differences on a few entries of one parameter group."""
    out, cache = net_forward(x, params, config)
    grads = net_backward(mse_loss_backward(out, target), cache)
    g = grads[name]
    arr = params[name]
    flat = arr.ravel()
    idx = np.linspace(0, flat.size - 1, min(8, flat.size)).astype(int)
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        hi = mse_loss(net_forward(x, params, config)[0], target)
        flat[i] = orig - h
        lo = mse_loss(net_forward(x, params, config)[0], target)
        flat[i] = orig
        fd = (hi - lo) / (2 * h)
        denom = max(abs(fd), abs(g.ravel()[i]), 1e-8)
        worst = max(worst, abs(fd - g.ravel()[i]) / denom)
    return worst


def test_gradients_match_finite_differences():
    cfg = SMALL
    params = {k: v.astype(np.float64) for k, v in init_params(cfg, seed=0).items()}
    rng = np.random.default_rng(100)
    x = rng.random((1, 1, 8, 8))
    target = rng.random((1, 1, 8, 8))
    for name in ("first_conv.weight", "rrdb0.rdb0.conv1.weight", "rrdb0.rdb1.conv5.weight",
                 "trunk_conv.weight", "post_upsample_conv.weight", "last_conv.weight",
                 "last_conv.bias"):
        worst = _net_gradcheck(name, params, x, target, cfg)
        assert worst < 1e-3, f"{name}: rel err {worst:.3e}"


def test_net_backward_returns_all_param_grads():
    cfg = SMALL
    params = init_params(cfg, seed=9)
    rng = np.random.default_rng(10)
    x = rng.random((2, 1, 8, 8)).astype(np.float32)
    out, cache = net_forward(x, params, cfg)
    grads = net_backward(np.ones_like(out), cache)
    assert set(grads) == set(params)
    for name, g in grads.items():
        assert g.shape == params[name].shape
        assert np.all(np.isfinite(g))
