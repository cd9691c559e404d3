import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from latentcolor.diffusion import (
    Denoiser,
    DenoiserConfig,
    TextEncoder,
    Vocabulary,
    cfg_combine,
    ddim_sample,
    ddim_timesteps,
    ldm_loss,
    make_schedule,
    q_sample,
    sdedit_sample,
)
from latentcolor.diffusion.schedule import q_sample_batch
from latentcolor.errors import NonFiniteLossError


def test_schedule_single_step():
    sched = make_schedule(1, 0.1, 0.1)
    assert sched.T == 1
    assert np.allclose(sched.alpha_bar, [0.9])


def test_schedule_default_tail():
    sched = make_schedule(1000, 1e-4, 2e-2)
    # Direct product evaluation.
    direct = np.prod(1.0 - np.linspace(1e-4, 2e-2, 1000))
    assert abs(sched.alpha_bar[-1] - direct) < 1e-12
    assert sched.alpha_bar[-1] < 1e-4


@given(
    T=st.integers(1, 500),
    bmin=st.floats(1e-5, 0.05),
    spread=st.floats(0.0, 0.5),
)
@settings(max_examples=30, deadline=None)
def test_schedule_monotone_property(T, bmin, spread):
    bmax = min(bmin * (1.0 + spread) + 1e-6, 0.999)
    sched = make_schedule(T, bmin, max(bmin, bmax))
    assert np.all(sched.beta > 0) and np.all(sched.beta < 1)
    assert np.all(np.diff(sched.beta) >= 0)
    assert np.all(np.diff(sched.alpha_bar) < 0) or T == 1
    assert np.all(sched.alpha_bar > 0) and np.all(sched.alpha_bar < 1)


def test_schedule_rejects_bad_params():
    with pytest.raises(ValueError):
        make_schedule(0)
    with pytest.raises(ValueError):
        make_schedule(10, 0.0, 0.1)
    with pytest.raises(ValueError):
        make_schedule(10, 0.2, 0.1)


def test_q_sample_linearity_and_shape():
    sched = make_schedule(100)
    z0 = torch.randn(2, 3, 4, 4, dtype=torch.float64)
    eps = torch.randn(2, 3, 4, 4, dtype=torch.float64)
    # eps = 0 and z0 = 0 degenerate branches.
    z_t = q_sample(z0, 50, torch.zeros_like(eps), sched)
    assert torch.allclose(z_t, sched.sqrt_alpha_bar(50) * z0)
    z_t = q_sample(torch.zeros_like(z0), 50, eps, sched)
    assert torch.allclose(z_t, sched.sqrt_one_minus_alpha_bar(50) * eps)
    # exact linearity
    a = q_sample(z0, 7, eps, sched)
    b = sched.sqrt_alpha_bar(7) * z0 + sched.sqrt_one_minus_alpha_bar(7) * eps
    assert torch.equal(a, b)
    with pytest.raises(ValueError):
        q_sample(z0, 0, eps, sched)
    with pytest.raises(ValueError):
        q_sample(z0, 101, eps, sched)


def test_q_sample_empirical_variance():
    sched = make_schedule(1000)
    t = 500
    gen = torch.Generator().manual_seed(0)
    z0 = torch.zeros(10_000, 4, dtype=torch.float64)
    eps = torch.randn(10_000, 4, generator=gen, dtype=torch.float64)
    z_t = q_sample(z0, t, eps, sched)
    var = z_t.var(dim=0, unbiased=True).mean().item()
    expected = 1.0 - sched.alpha_bar[t - 1]
    assert abs(var - expected) / expected < 0.02


def test_ldm_loss_oracle_and_zero_predictor():
    sched = make_schedule(100)
    z0 = torch.randn(8, 3, 4, 4, dtype=torch.float64)
    captured = {}

    def oracle(z_t, t):
        # Recover eps from the captured draw: impossible without state, so use
        # a wrapper that memorizes it instead.
        return captured["eps"]

    # ldm_loss draws t then eps from the generator; replicate to capture eps.
    gen = torch.Generator().manual_seed(9)
    t = torch.randint(1, sched.T + 1, (8,), generator=gen)
    eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
    captured["eps"] = eps
    loss = ldm_loss(oracle, z0, sched, torch.Generator().manual_seed(9))
    assert loss.item() == 0.0

    loss_zero = ldm_loss(lambda z, t: torch.zeros_like(z), z0, sched,
                         torch.Generator().manual_seed(1))
    # predictor 0 -> loss = mean(eps^2) ~ 1 for unit-normal draws
    assert 0.8 < loss_zero.item() < 1.2
    assert loss_zero.item() >= 0.0


def test_ldm_loss_surfaces_non_finite():
    sched = make_schedule(10)
    z0 = torch.randn(2, 1, 2, 2)
    with pytest.raises(NonFiniteLossError):
        ldm_loss(lambda z, t: torch.full_like(z, float("nan")), z0, sched)


def test_ddim_timesteps_and_bounds():
    assert ddim_timesteps(1000, 50) == [1 + 20 * i for i in range(50)]
    assert ddim_timesteps(100, 100) == list(range(1, 101))
    with pytest.raises(ValueError):
        ddim_timesteps(100, 101)


def test_ddim_exact_noise_oracle():
    sched = make_schedule(1000)
    gen = torch.Generator().manual_seed(4)
    z0 = torch.randn(1, 3, 8, 8, generator=gen, dtype=torch.float64)
    eps = torch.randn(1, 3, 8, 8, generator=gen, dtype=torch.float64)
    times = ddim_timesteps(1000, 50)
    t_start = times[-1]
    z_start = q_sample(z0, t_start, eps, sched)
    out = ddim_sample(lambda z, t: eps, z0.shape, 50, sched, eta=0.0, x_t=z_start)
    assert (out - z0).abs().max().item() <= 1e-5


def test_ddim_single_step_base_case():
    sched = make_schedule(100)
    eps = torch.randn(1, 2, 4, 4, dtype=torch.float64)
    z1 = torch.randn(1, 2, 4, 4, dtype=torch.float64)
    out = ddim_sample(lambda z, t: eps, z1.shape, 1, sched, x_t=z1)
    abar = sched.alpha_bar_at(1)
    z0_hat = (z1 - (1 - abar) ** 0.5 * eps) / abar**0.5
    assert torch.allclose(out, z0_hat)


def test_ddim_seed_determinism():
    sched = make_schedule(100)
    fn = lambda z, t: 0.1 * z
    a = ddim_sample(fn, (1, 2, 4, 4), 10, sched, seed=77)
    b = ddim_sample(fn, (1, 2, 4, 4), 10, sched, seed=77)
    c = ddim_sample(fn, (1, 2, 4, 4), 10, sched, seed=78)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_cfg_combine_contract():
    u = torch.randn(2, 3, 4, 4)
    c = torch.randn(2, 3, 4, 4)
    assert torch.equal(cfg_combine(u, c, 1.0), c)
    assert torch.equal(cfg_combine(u, c, 0.0), u)
    same = cfg_combine(c, c, 7.5)
    assert torch.allclose(same, c)
    with pytest.raises(ValueError):
        cfg_combine(u, torch.randn(2, 3, 4, 5), 1.0)


def test_sdedit_strength_limits():
    sched = make_schedule(1000)
    z = torch.randn(1, 2, 4, 4)
    fn = lambda zz, t: torch.zeros_like(zz)
    # strength so small that no denoise step remains -> identity
    out = sdedit_sample(z, 0.0004, fn, 50, sched, seed=0)
    assert torch.equal(out, z)
    with pytest.raises(ValueError):
        sdedit_sample(z, 0.0, fn, 50, sched)
    with pytest.raises(ValueError):
        sdedit_sample(z, 1.1, fn, 50, sched)


def test_sdedit_full_strength_matches_pure_noise_sampling():
    sched = make_schedule(100)
    fn = lambda z, t: 0.05 * z
    z = torch.randn(1, 2, 4, 4)
    full = sdedit_sample(z, 1.0, fn, 10, sched, seed=5)
    pure = ddim_sample(fn, z.shape, 10, sched, seed=5)
    assert torch.equal(full, pure)


def test_sdedit_starts_at_rounded_step():
    sched = make_schedule(1000)
    seen = []

    def recorder(z, t):
        seen.append(t)
        return torch.zeros_like(z)

    z = torch.randn(1, 2, 4, 4)
    sdedit_sample(z, 0.45, recorder, 50, sched, seed=0)
    assert seen[0] == 450  # round(0.45 * 1000)
    assert max(seen) == 450


def test_text_encoder_contracts():
    vocab = Vocabulary.build(["a red circle", "a blue square"])
    enc = TextEncoder(vocab, dim=32, max_len=6, n_layers=1, n_heads=2).eval()
    empty = enc.embed([""])
    again = enc.embed([""])
    assert torch.equal(empty.vectors, again.vectors)
    assert empty.mask[0].tolist() == [True] + [False] * 5
    a = enc.embed(["a red circle"])
    b = enc.embed(["a blue square"])
    assert not torch.allclose(a.vectors, b.vectors)
    with pytest.warns(UserWarning):
        enc.embed(["word " * 10])


def test_denoiser_taps_stable_and_shaped():
    cfg = DenoiserConfig(base_channels=16, channel_mults=(1, 2), text_dim=32, time_dim=32)
    net = Denoiser(cfg)
    vocab = Vocabulary.build(["x"])
    text = TextEncoder(vocab, dim=32, max_len=4, n_layers=1, n_heads=2).eval().embed(["x", "x"])
    z = torch.randn(2, 3, 8, 8)
    collect = {}
    out = net(z, torch.tensor([1, 2]), text, collect=collect)
    assert out.shape == z.shape
    assert set(collect) == set(net.tap_names) == {"down.0", "up.0", "out"}
    for name, feat in collect.items():
        assert feat.shape[1] == net.tap_channels[name]
    # stable across calls
    collect2 = {}
    net(z, torch.tensor([1, 2]), text, collect=collect2)
    assert list(collect2) == list(collect)


def test_sampler_options_json_roundtrip():
    from latentcolor.diffusion import SamplerOptions

    opts = SamplerOptions(steps=50, eta=0.0, guidance=7.5, seed=3)
    back = SamplerOptions.from_json(opts.to_json())
    assert back == opts
    assert "strength" not in opts.to_json()
    with_strength = SamplerOptions.from_json('{"steps": 20, "strength": 0.45}')
    assert with_strength.strength == 0.45 and with_strength.steps == 20
    with pytest.raises(ValueError):
        SamplerOptions.from_json('{"stepz": 2}')
