"""Model configuration, blocks and the full forward pass."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import pu_transformer.tensor as T
from oracles import layer_norm_rows, positional_fusion_loops, shifted_msa
from pu_transformer.geometry import knn
from pu_transformer.metrics import chamfer_loss
from pu_transformer.model import (
    TINY_GRADCHECK,
    ConfigError,
    ModelConfig,
    PUTransformer,
    SCMSAConfig,
    forward,
    init_params,
    param_count,
    param_shapes,
    positional_fusion,
    sc_msa,
    transformer_encoder,
)
from pu_transformer.tensor import Tape, Tensor


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64), dtype="float64")


def _randomize(params, rng, scale=0.3):
    for t in params.trainable():
        t.data[...] += scale * rng.standard_normal(t.shape)
    for name, buf in params.buffers.items():
        buf[...] = rng.uniform(0.5, 1.5, buf.shape) if name.endswith("var") else rng.normal(0, 0.2, buf.shape)
    return params


# config ----------------------------------------------------------------------

def test_default_config():
    cfg = ModelConfig()
    assert cfg.channels == (32, 64, 128, 256, 256)
    assert (cfg.L, cfg.head_channels, cfg.k, cfg.psi, cfg.r) == (5, 16, 20, 4, 4)
    assert (cfg.head_norm, cfg.encoder_norm, cfg.attn_scale) == ("batch", "layer", False)
    assert (cfg.bn_momentum, cfg.bn_eps, cfg.ln_eps) == (0.9, 1e-5, 1e-6)


@pytest.mark.parametrize("kw", [
    dict(channels=(64, 32)),            # decreasing
    dict(channels=(36,)),               # not divisible by 2*psi
    dict(channels=(32,), r=3),          # r does not divide last width
    dict(psi=1, channels=(32,)),
    dict(k=0),
    dict(dtype="float16"),
    dict(encoder_norm="group"),
])
def test_config_rejects_invalid(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


def test_config_text_round_trip():
    cfg = ModelConfig(channels=(16, 32), k=7, attn_scale=True, dtype="float64", encoder_norm="batch")
    assert ModelConfig.from_text(cfg.to_text()) == cfg


def test_scmsa_config_invariants():
    with pytest.raises(ConfigError):
        SCMSAConfig(c_prime=32, w=8, d=9, m_heads=3)
    with pytest.raises(ConfigError):
        SCMSAConfig(c_prime=32, w=8, d=4, m_heads=6)
    sc = SCMSAConfig.disjoint(32, 8)
    assert (sc.d, sc.m_heads, sc.shifted) == (8, 4, False)
    assert SCMSAConfig.from_psi(32, 4).shifted


@given(st.integers(2, 8), st.integers(1, 8))
def test_scmsa_tiling_property(psi, mult):
    c = 2 * psi * mult
    sc = SCMSAConfig.from_psi(c, psi)
    assert (sc.m_heads - 1) * sc.d + sc.w == c
    assert sc.overlap == sc.w - sc.d and sc.d < sc.w


# parameters ------------------------------------------------------------------

def test_tiny_hand_count():
    cfg = ModelConfig(channels=(8,), head_channels=4, psi=2, r=2)
    head = 3 * 4 + 4 + 2 * 4
    posfus = (6 * 4 + 4 + 2 * 4) + (2 * 4 * 4 + 4 + 2 * 4)
    norms = 2 * (2 * 8)
    attn = 3 * (8 * 8 + 8) + (3 * 4) * 8 + 8   # three windows of width 4 feed the output linear
    mlp = 8 * 8 + 8
    tail = 4 * 3 + 3
    assert param_count(cfg) == head + posfus + norms + attn + mlp + tail == 543


def test_count_increases_with_depth():
    totals = [param_count(ModelConfig.with_encoders(L)) for L in range(1, 9)]
    assert all(a < b for a, b in zip(totals, totals[1:]))


def test_count_by_block_sums_to_total():
    total, blocks = param_count(ModelConfig(), by_block=True)
    assert sum(blocks.values()) == total == init_params(ModelConfig()).count()


def test_init_params_determinism_and_bounds():
    cfg = ModelConfig()
    a, b = init_params(cfg, 3), init_params(cfg, 3)
    for name in a:
        assert np.array_equal(a[name].data, b[name].data)
    assert not np.array_equal(a["enc1.attn.Wq"].data, init_params(cfg, 4)["enc1.attn.Wq"].data)
    W = a["enc1.attn.Wq"].data.astype(np.float64)
    assert W.size >= 1000
    s = np.sqrt(6.0 / sum(W.shape))
    assert np.abs(W).max() < s
    assert abs(W.mean()) < 3 * (s / np.sqrt(3)) / np.sqrt(W.size)
    assert set(param_shapes(cfg)) == set(a.tensors)


# blocks ----------------------------------------------------------------------

def test_positional_fusion_self_neighbour_only(rng):
    cfg = ModelConfig(channels=(8,), head_channels=4, psi=2, r=2, dtype="float64")
    params = _randomize(init_params(cfg, 0), rng)
    P, F = rng.normal(size=(6, 3)), rng.normal(size=(6, 4))
    nbr = knn(P, 1)
    p = params.view("enc1.posfus")
    out = positional_fusion(t64(P), t64(F), nbr, p, cfg).data
    raw = {k.split("posfus.")[1]: v.data for k, v in params.tensors.items() if ".posfus." in k}
    raw.update({k.split("posfus.")[1]: v for k, v in params.buffers.items() if ".posfus." in k})
    # with k=1 the context is [P; 0] and [F; 0]
    Wphi = raw["W_phi"][:3]
    assert np.allclose(out, positional_fusion_loops(P, F, nbr, raw), atol=1e-12)
    geo = P @ Wphi + raw["b_phi"]
    geo = np.maximum((geo - raw["bn_phi.running_mean"]) / np.sqrt(raw["bn_phi.running_var"] + cfg.bn_eps)
                     * raw["bn_phi.gamma"] + raw["bn_phi.beta"], 0)
    assert np.allclose(out[:, :4], geo, atol=1e-12)


def test_sc_msa_single_point(rng):
    cfg = ModelConfig(channels=(8,), head_channels=4, psi=2, r=2, dtype="float64")
    params = _randomize(init_params(cfg, 0), rng)
    p = params.view("enc1.attn")
    sc = cfg.scmsa(0)
    I = rng.normal(size=(1, 8))
    V = I @ p["Wv"].data + p["bv"].data
    heads = np.concatenate([V[:, s:s + sc.w] for s in sc.window_starts()], axis=1)
    expected = heads @ p["Wo"].data + p["bo"].data
    assert np.allclose(sc_msa(t64(I), p, sc).data, expected, atol=1e-12)


def test_sc_msa_scale_flag_changes_output(rng):
    cfg = ModelConfig(channels=(8,), head_channels=4, psi=2, r=2, dtype="float64")
    params = _randomize(init_params(cfg, 0), rng)
    I = t64(rng.normal(size=(5, 8)))
    a = sc_msa(I, params.view("enc1.attn"), cfg.scmsa(0)).data
    b = sc_msa(I, params.view("enc1.attn"), cfg.scmsa(0), scale=True).data
    assert not np.allclose(a, b)


def test_encoder_zero_branches_is_pure_residual(rng):
    cfg = ModelConfig(channels=(8,), head_channels=4, psi=2, r=2, dtype="float64")
    params = _randomize(init_params(cfg, 0), rng)
    for name in ("enc1.attn.Wo", "enc1.attn.bo", "enc1.mlp.W", "enc1.mlp.b"):
        params[name].data[...] = 0
    P, F = rng.normal(size=(7, 3)), rng.normal(size=(7, 4))
    nbr = knn(P, 3)
    out = transformer_encoder(t64(P), t64(F), nbr, params.view("enc1"), cfg, 0).data
    G = positional_fusion(t64(P), t64(F), nbr, params.view("enc1.posfus"), cfg).data
    assert np.array_equal(out, G)


def test_encoder_matches_scripted_oracle(rng):
    cfg = ModelConfig(channels=(8,), head_channels=4, psi=2, r=2, dtype="float64")
    params = _randomize(init_params(cfg, 1), rng)
    P, F = rng.normal(size=(8, 3)), rng.normal(size=(8, 4))
    nbr = knn(P, 3)
    got = transformer_encoder(t64(P), t64(F), nbr, params.view("enc1"), cfg, 0).data

    def raw(prefix):
        out = {k[len(prefix):]: v.data for k, v in params.tensors.items() if k.startswith(prefix)}
        out.update({k[len(prefix):]: v for k, v in params.buffers.items() if k.startswith(prefix)})
        return out

    sc = cfg.scmsa(0)
    e = raw("enc1.")
    G = positional_fusion_loops(P, F, nbr, raw("enc1.posfus."), eps=cfg.bn_eps)
    Gp = shifted_msa(layer_norm_rows(G, e["norm1.gamma"], e["norm1.beta"], cfg.ln_eps),
                     raw("enc1.attn."), sc.w, sc.d, sc.m_heads) + G
    h = np.maximum(layer_norm_rows(Gp, e["norm2.gamma"], e["norm2.beta"], cfg.ln_eps) @ e["mlp.W"] + e["mlp.b"], 0)
    assert np.abs(got - (h + Gp)).max() < 1e-6


# forward ---------------------------------------------------------------------

def test_forward_default_shape():
    cfg = ModelConfig()
    P = np.random.default_rng(0).uniform(-1, 1, (256, 3))
    out = forward(P, cfg, init_params(cfg, 0))
    assert out.shape == (1024, 3) and out.dtype == np.float32
    batched = forward(np.stack([P, P[::-1]]), cfg, init_params(cfg, 0))
    assert batched.shape == (2, 1024, 3)


def test_forward_rejects_too_few_points():
    cfg = ModelConfig()
    with pytest.raises(ValueError):
        forward(np.zeros((19, 3)), cfg, init_params(cfg, 0))


def test_forward_float32_equivariance_relative(rng):
    """Single precision: deviation under relabelling stays at rounding level."""
    cfg = ModelConfig()
    params = init_params(cfg, 5)
    P = rng.uniform(-1, 1, (64, 3)).astype(np.float32)
    perm = rng.permutation(64)
    a = forward(P, cfg, params).data
    b = forward(P[perm], cfg, params).data.reshape(64, cfg.r, 3)[np.argsort(perm)].reshape(-1, 3)
    assert np.abs(a - b).max() < 1e-5 * np.abs(a).max()


def test_forward_depends_on_every_input_point(rng):
    cfg = ModelConfig(**TINY_GRADCHECK)
    params = _randomize(init_params(cfg, 0), rng)
    P = rng.uniform(-1, 1, (8, 3))
    base = forward(P, cfg, params).data
    for i in range(8):
        Q = P.copy()
        Q[i] += 0.05
        assert not np.allclose(forward(Q, cfg, params).data, base)


def test_one_gradient_step_reduces_loss(rng):
    cfg = ModelConfig(**TINY_GRADCHECK)
    params = init_params(cfg, 0)
    P = rng.uniform(-1, 1, (8, 3))
    target = rng.uniform(-1, 1, (16, 3))

    def loss(train=False):
        return chamfer_loss(forward(P, cfg, params, train=train), target)

    before = loss().item()
    with Tape() as tape:
        value = loss()
    tape.backward(value)
    for t in params.trainable():
        t.data -= 1e-3 * t.grad
    assert loss().item() < before


def test_batch_encoder_norm_option_runs(rng):
    cfg = ModelConfig(**dict(TINY_GRADCHECK, encoder_norm="batch"))
    params = init_params(cfg, 0)
    assert "enc1.norm1.running_mean" in params.buffers
    out = forward(rng.uniform(-1, 1, (2, 8, 3)), cfg, params, train=True)
    assert out.shape == (2, 16, 3)


def test_wrapper_class(rng):
    model = PUTransformer(ModelConfig(**TINY_GRADCHECK), seed=2)
    out = model.upsample(rng.uniform(-1, 1, (8, 3)))
    assert out.shape == (16, 3) and out.dtype == np.float64


def test_train_mode_updates_only_running_buffers(rng):
    cfg = ModelConfig(**TINY_GRADCHECK)
    params = init_params(cfg, 0)
    before = {k: v.copy() for k, v in params.buffers.items()}
    forward(rng.uniform(-1, 1, (8, 3)), cfg, params, train=False)
    assert all(np.array_equal(before[k], v) for k, v in params.buffers.items())
    forward(rng.uniform(-1, 1, (8, 3)), cfg, params, train=True)
    assert not np.array_equal(before["head.bn.running_mean"], params.buffers["head.bn.running_mean"])


def test_forward_is_recorded_only_when_needed(rng):
    cfg = ModelConfig(**TINY_GRADCHECK)
    with Tape() as tape:
        forward(rng.uniform(-1, 1, (8, 3)), cfg, init_params(cfg, 0))
    # parameters require grad, so the pass is recorded
    assert len(tape) > 0
    with Tape() as tape:
        T.add(t64([1.0]), t64([2.0]))
    assert len(tape) == 0
