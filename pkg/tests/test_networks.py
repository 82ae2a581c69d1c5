"""Network tests: construction, forward contracts, exact gradients, checkpoints."""

import dataclasses

import numpy as np
import pytest

from diffsolve.networks import (
    NetworkSpec,
    backward,
    forward,
    init_params,
    load_checkpoint,
    param_count,
    save_checkpoint,
)


def f32(x):
    return np.asarray(x, dtype=np.float32)


def mlp_spec(inp=4, out=4, width=8, layers=1):
    return NetworkSpec(kind="mlp", input_size=inp, output_size=out, hidden_width=width, hidden_layers=layers)


def resnet_spec(dim=1, blocks=2, hidden=4, padding="circular", in_ch=1, out_ch=1, k=3):
    return NetworkSpec(
        kind="conv_resnet",
        spatial_dim=dim,
        blocks=blocks,
        hidden_channels=hidden,
        kernel_size=k,
        padding=padding,
        in_channels=in_ch,
        out_channels=out_ch,
    )


ARCHITECTURES = {
    "mlp": (mlp_spec(), (4,)),
    "mlp_deep": (mlp_spec(inp=6, out=3, width=5, layers=3), (6,)),
    "resnet1d": (resnet_spec(dim=1, blocks=2, hidden=4), (8,)),
    "resnet2d": (resnet_spec(dim=2, blocks=1, hidden=3, padding="zero", in_ch=3, out_ch=3), (3, 6, 6)),
    "resnet3d": (resnet_spec(dim=3, blocks=1, hidden=2, padding="zero"), (5, 5, 5)),
}


# ---------------------------------------------------------------------------
# spec validation and parameter layout


def test_spec_rejects_bad_fields():
    with pytest.raises(ValueError):
        NetworkSpec(kind="mlp", input_size=0, output_size=3)
    with pytest.raises(ValueError):
        NetworkSpec(kind="conv_resnet", spatial_dim=4, blocks=1, hidden_channels=2)
    with pytest.raises(ValueError):
        NetworkSpec(kind="conv_resnet", spatial_dim=1, blocks=1, hidden_channels=2, kernel_size=4)
    with pytest.raises(ValueError):
        NetworkSpec(kind="conv_resnet", spatial_dim=1, blocks=1, hidden_channels=2, padding="reflect")
    with pytest.raises(ValueError):
        NetworkSpec(kind="fourier")


def test_mlp_parameter_count_arithmetic():
    spec = mlp_spec(inp=30, out=30, width=64, layers=3)
    expected = 30 * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 30 + 30
    assert param_count(spec) == expected
    assert init_params(spec, 0).flat.size == expected


def test_linear_mlp_parameter_count():
    assert param_count(mlp_spec(inp=7, out=3, width=0, layers=0)) == 7 * 3 + 3


def test_resnet_parameter_count_arithmetic():
    spec = resnet_spec(dim=1, blocks=2, hidden=4, in_ch=1, out_ch=1, k=3)
    lift = 4 * 1 * 3 + 4
    block = 2 * (4 * 4 * 3 + 4)
    proj = 1 * 4 * 3 + 1
    assert param_count(spec) == lift + 2 * block + proj


def test_init_deterministic():
    spec = ARCHITECTURES["resnet1d"][0]
    a = init_params(spec, 42)
    b = init_params(spec, 42)
    np.testing.assert_array_equal(a.flat, b.flat)
    assert np.any(a.flat != init_params(spec, 43).flat)


def test_init_biases_zero_weights_fan_in_scaled():
    spec = mlp_spec(inp=20, out=10, width=30, layers=2)
    stds = []
    for seed in range(10):
        p = init_params(spec, seed)
        assert np.all(p.view("b0") == 0)
        assert np.all(p.view("b2") == 0)
        stds.append(p.view("w1").std())
    # normal with variance 1/fan_in
    target = np.sqrt(1.0 / 30)
    assert abs(np.mean(stds) - target) <= 0.2 * target


def test_params_dtype_and_view_roundtrip():
    p = init_params(mlp_spec(), 0)
    assert p.flat.dtype == np.float32
    w0 = p.view("w0")
    assert w0.shape == (4, 8)
    assert w0.base is p.flat
    with pytest.raises(KeyError):
        p.view("nonexistent")


# ---------------------------------------------------------------------------
# forward contracts


@pytest.mark.parametrize("name", sorted(ARCHITECTURES))
def test_zero_params_zero_output(name):
    spec, shape = ARCHITECTURES[name]
    p = init_params(spec, 0)
    p = dataclasses.replace(p, flat=np.zeros_like(p.flat))
    x = f32(np.random.default_rng(0).standard_normal(shape))
    assert np.all(forward(p, x) == 0)


def test_linear_mlp_is_matrix_multiply():
    spec = mlp_spec(inp=5, out=3, width=0, layers=0)
    p = init_params(spec, 7)
    x = f32(np.random.default_rng(1).standard_normal((6, 5)))
    np.testing.assert_array_equal(forward(p, x), x @ p.view("w0"))


def test_forward_batched_matches_loop():
    spec, shape = ARCHITECTURES["resnet1d"]
    p = init_params(spec, 3)
    xs = f32(np.random.default_rng(2).standard_normal((4,) + shape))
    batched = forward(p, xs)
    single = np.stack([forward(p, x) for x in xs])
    # BLAS kernels tile differently per shape, so agreement is to f32 round-off
    np.testing.assert_allclose(batched, single, rtol=2e-6, atol=2e-6)


def test_mlp_rejects_wrong_input_size():
    p = init_params(mlp_spec(inp=4, out=4), 0)
    with pytest.raises(ValueError):
        forward(p, f32(np.zeros(5)))


def test_resnet_rejects_missing_channels():
    p = init_params(resnet_spec(dim=2, in_ch=3, out_ch=3), 0)
    with pytest.raises(ValueError):
        forward(p, f32(np.zeros((6, 6))))


def test_circular_resnet_translation_equivariance():
    spec, shape = ARCHITECTURES["resnet1d"]
    p = init_params(spec, 5)
    x = f32(np.random.default_rng(4).standard_normal(shape))
    for s in (1, 3):
        np.testing.assert_array_equal(forward(p, np.roll(x, s)), np.roll(forward(p, x), s))


def test_circular_constant_field_stays_constant_zero_pad_does_not():
    x = f32(np.ones(10))
    wrap = init_params(resnet_spec(dim=1, blocks=1, hidden=3, padding="circular"), 8)
    y = forward(wrap, x)
    assert np.ptp(y) == 0
    clamp = init_params(resnet_spec(dim=1, blocks=1, hidden=3, padding="zero"), 8)
    z = forward(clamp, x)
    assert np.ptp(z) > 0


# ---------------------------------------------------------------------------
# backward contracts


@pytest.mark.parametrize("name", sorted(ARCHITECTURES))
def test_zero_cotangent_zero_gradients(name):
    spec, shape = ARCHITECTURES[name]
    p = init_params(spec, 0)
    x = f32(np.random.default_rng(5).standard_normal(shape))
    y = forward(p, x)
    gbar, xbar = backward(p, x, np.zeros_like(y))
    assert np.all(gbar.flat == 0)
    assert np.all(xbar == 0)


def test_linear_network_input_cotangent_exact():
    spec = mlp_spec(inp=5, out=3, width=0, layers=0)
    p = init_params(spec, 9)
    x = f32(np.random.default_rng(6).standard_normal(5))
    ybar = f32(np.random.default_rng(7).standard_normal(3))
    _, xbar = backward(p, x, ybar)
    np.testing.assert_array_equal(xbar, p.view("w0") @ ybar)


def test_backward_rejects_mismatched_cotangent():
    p = init_params(mlp_spec(inp=4, out=4), 0)
    with pytest.raises(ValueError):
        backward(p, f32(np.zeros(4)), f32(np.zeros(5)))


def test_pullback_linearity():
    spec, shape = ARCHITECTURES["resnet1d"]
    p = init_params(spec, 11)
    rng = np.random.default_rng(8)
    x = f32(rng.standard_normal(shape))
    v = f32(rng.standard_normal(shape))
    w = f32(rng.standard_normal(shape))
    ga, xa = backward(p, x, v)
    gb, xb = backward(p, x, w)
    gc, xc = backward(p, x, f32(2.0) * v + w)
    np.testing.assert_allclose(gc.flat, 2 * ga.flat + gb.flat, rtol=1e-4, atol=1e-5)
    np.testing.assert_allclose(xc, 2 * xa + xb, rtol=1e-4, atol=1e-5)


def test_batched_param_gradient_sums_samples():
    spec, shape = ARCHITECTURES["mlp"]
    p = init_params(spec, 12)
    rng = np.random.default_rng(9)
    xs = f32(rng.standard_normal((5,) + shape))
    ybars = f32(rng.standard_normal((5, spec.output_size)))
    gbatch, xbatch = backward(p, xs, ybars)
    gsum = sum(backward(p, x, yb)[0].flat for x, yb in zip(xs, ybars))
    np.testing.assert_allclose(gbatch.flat, gsum, rtol=1e-5, atol=1e-7)
    singles = np.stack([backward(p, x, yb)[1] for x, yb in zip(xs, ybars)])
    np.testing.assert_allclose(xbatch, singles, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("name", ["resnet1d", "resnet2d", "resnet3d"])
def test_batched_conv_gradient_sums_samples(name):
    spec, shape = ARCHITECTURES[name]
    p = init_params(spec, 13)
    rng = np.random.default_rng(17)
    xs = f32(rng.standard_normal((4,) + shape))
    ys = forward(p, xs)
    ybars = f32(rng.standard_normal(ys.shape))
    gbatch, xbatch = backward(p, xs, ybars)
    gsum = sum(backward(p, x, yb)[0].flat for x, yb in zip(xs, ybars))
    np.testing.assert_allclose(gbatch.flat, gsum, rtol=1e-4, atol=1e-6)
    singles = np.stack([backward(p, x, yb)[1] for x, yb in zip(xs, ybars)])
    np.testing.assert_allclose(xbatch, singles, rtol=1e-4, atol=1e-6)


def _shadow(params):
    return dataclasses.replace(params, flat=params.flat.astype(np.float64))


def _directional_check(spec, shape, seed, h, dtype):
    """Relative FD errors plus the shadow agreement for kink arbitration.

    Central differences are invalid when the stencil straddles a ReLU
    kink, so each probe also reports how far the single-precision
    directional derivative sits from a float64 replay of the same
    backward pass; a probe counts as correct when either the FD or the
    shadow agrees.
    """
    rng = np.random.default_rng(seed)
    p = init_params(spec, seed)
    if dtype == np.float64:
        p = _shadow(p)
    x = rng.standard_normal(shape).astype(dtype)
    y = forward(p, x)
    c = rng.standard_normal(y.shape).astype(dtype)
    gbar, xbar = backward(p, x, c)

    vp = rng.standard_normal(p.flat.shape).astype(dtype)
    vp /= np.linalg.norm(vp)
    vx = rng.standard_normal(shape).astype(dtype)
    vx /= np.linalg.norm(vx)

    def loss_p(t):
        q = dataclasses.replace(p, flat=(p.flat + dtype(t) * vp))
        return float(np.sum(forward(q, x).astype(np.float64) * c))

    def loss_x(t):
        return float(np.sum(forward(p, x + dtype(t) * vx).astype(np.float64) * c))

    got_p = float(gbar.flat.astype(np.float64) @ vp.astype(np.float64))
    got_x = float(np.sum(xbar.astype(np.float64) * vx))
    fd_p = (loss_p(h) - loss_p(-h)) / (2 * h)
    fd_x = (loss_x(h) - loss_x(-h)) / (2 * h)
    err_p = abs(got_p - fd_p) / max(abs(fd_p), 1e-4)
    err_x = abs(got_x - fd_x) / max(abs(fd_x), 1e-4)
    if dtype == np.float64:
        return err_p, err_x, 0.0, 0.0
    q = _shadow(p)
    g64, x64 = backward(q, x.astype(np.float64), c.astype(np.float64))
    ref_p = float(g64.flat @ vp.astype(np.float64))
    ref_x = float(np.sum(x64 * vx))
    shadow_p = abs(got_p - ref_p) / max(abs(ref_p), 1e-4)
    shadow_x = abs(got_x - ref_x) / max(abs(ref_x), 1e-4)
    return err_p, err_x, shadow_p, shadow_x


@pytest.mark.parametrize("name", sorted(ARCHITECTURES))
def test_gradients_match_finite_differences_single_precision(name):
    spec, shape = ARCHITECTURES[name]
    probes = 50 if spec.kind == "mlp" else 12
    for seed in range(probes):
        ep, ex, sp, sx = _directional_check(spec, shape, seed, h=4e-3, dtype=np.float32)
        assert min(ep, sp) <= 1e-2, f"param gradient probe {seed}: fd {ep}, shadow {sp}"
        assert min(ex, sx) <= 1e-2, f"input gradient probe {seed}: fd {ex}, shadow {sx}"


@pytest.mark.parametrize("name", ["mlp", "resnet1d", "resnet3d"])
def test_gradients_match_finite_differences_double_shadow(name):
    spec, shape = ARCHITECTURES[name]
    for seed in range(10):
        ep, ex, _, _ = _directional_check(spec, shape, seed + 100, h=1e-6, dtype=np.float64)
        assert ep <= 1e-5, f"param gradient probe {seed}: {ep}"
        assert ex <= 1e-5, f"input gradient probe {seed}: {ex}"


def test_backward_deterministic():
    spec, shape = ARCHITECTURES["resnet2d"]
    p = init_params(spec, 13)
    rng = np.random.default_rng(10)
    x = f32(rng.standard_normal(shape))
    ybar = f32(rng.standard_normal(shape))
    g1, x1 = backward(p, x, ybar)
    g2, x2 = backward(p, x, ybar)
    np.testing.assert_array_equal(g1.flat, g2.flat)
    np.testing.assert_array_equal(x1, x2)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path):
    spec, _ = ARCHITECTURES["resnet2d"]
    p = init_params(spec, 21)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, p)
    q = load_checkpoint(path)
    np.testing.assert_array_equal(q.flat, p.flat)
    assert q.spec == p.spec
    assert q.layout == p.layout


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "bogus.ckpt"
    path.write_bytes(b"PNG\x89 definitely not weights")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_future_version(tmp_path):
    spec, _ = ARCHITECTURES["mlp"]
    p = init_params(spec, 0)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, p)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncated_payload(tmp_path):
    spec, _ = ARCHITECTURES["mlp"]
    p = init_params(spec, 0)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, p)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 40])
    with pytest.raises(ValueError):
        load_checkpoint(path)
