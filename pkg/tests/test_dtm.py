import numpy as np
import pytest
import torch

from spidermesh.dtm import (bottleneck_width, channel_attention, channel_denoise, demand_guided_fuse, demand_map,
                            dtm_decl, dtm_forward, spatial_attention)
from spidermesh.errors import ShapeMismatchError
from spidermesh.gradcheck import case_dtm_forward, check_gradients

from conftest import rand_t


def params(c, reduction=4, seed=0, scale=1.0, zero=False):
    r = np.random.default_rng(seed)
    return {k: torch.zeros(shape, dtype=torch.float64) if zero else
            torch.from_numpy(scale * r.normal(size=shape)) for k, (shape, _) in dtm_decl("d", c, reduction).items()}


def test_bottleneck_width():
    assert bottleneck_width(64, 16) == 4
    assert bottleneck_width(8, 16) == 1


def test_shapes(rng):
    f = rand_t(rng, 2, 8, 5, 3)
    p = params(8)
    assert channel_attention(f, p, "d.rgb.ca").shape == (2, 8, 1, 1)
    assert spatial_attention(f, p, "d.rgb.sa").shape == (2, 1, 5, 3)
    outs = dtm_forward(f, rand_t(rng, 2, 8, 5, 3), p, "d")
    assert [o.shape for o in outs] == [f.shape] * 3


def test_zero_params_give_half(rng):
    f = rand_t(rng, 1, 8, 4, 4)
    p = params(8, zero=True)
    assert torch.equal(channel_attention(f, p, "d.rgb.ca"), torch.full((1, 8, 1, 1), 0.5, dtype=torch.float64))
    assert torch.equal(demand_map(f, p, "d.rgb"), torch.full((1, 1, 4, 4), 0.5, dtype=torch.float64))


@pytest.mark.parametrize("dtype", [torch.float32, torch.float64])
def test_saturated_attention_stays_open(rng, dtype):
    f = rand_t(rng, 1, 8, 4, 4, dtype=dtype) * 1e3
    p = {k: v.to(dtype) for k, v in params(8, scale=1e3).items()}
    for v in (channel_attention(f, p, "d.rgb.ca"), demand_map(f, p, "d.rgb")):
        assert bool(((v > 0) & (v < 1)).all())


def test_zero_other_returns_self(rng):
    f = rand_t(rng, 2, 8, 4, 4)
    p = params(8)
    fc = channel_denoise(f, p, "d.rgb")
    assert torch.equal(demand_guided_fuse(fc, torch.zeros_like(fc), p, "d.rgb"), fc)


def test_fuse_shape_mismatch(rng):
    p = params(8)
    with pytest.raises(ShapeMismatchError):
        demand_guided_fuse(rand_t(rng, 1, 8, 4, 4), rand_t(rng, 1, 8, 4, 3), p, "d.rgb")
    with pytest.raises(ShapeMismatchError):
        dtm_forward(rand_t(rng, 1, 8, 4, 4), rand_t(rng, 1, 4, 4, 4), p, "d")


def test_fuse_formula(rng):
    fs, fo = rand_t(rng, 1, 8, 3, 3), rand_t(rng, 1, 8, 3, 3)
    p = params(8)
    m = demand_map(fs, p, "d.rgb")
    assert torch.equal(demand_guided_fuse(fs, fo, p, "d.rgb"), fs + m * fo)


def test_swap_symmetry(rng):
    # swapping the modalities together with their weights swaps the outputs
    a, b = rand_t(rng, 1, 8, 4, 4), rand_t(rng, 1, 8, 4, 4)
    p = params(8)
    swapped = {k.replace("d.rgb", "d.TMP").replace("d.thermal", "d.rgb").replace("d.TMP", "d.thermal"): v
               for k, v in p.items()}
    r1, t1, m1 = dtm_forward(a, b, p, "d")
    r2, t2, m2 = dtm_forward(b, a, swapped, "d")
    assert torch.equal(r1, t2) and torch.equal(t1, r2)
    assert torch.allclose(m1, m2)


def test_multimodal_is_raw_sum(rng):
    a, b = rand_t(rng, 1, 8, 4, 4), rand_t(rng, 1, 8, 4, 4)
    assert torch.equal(dtm_forward(a, b, params(8), "d")[2], a + b)


def test_demand_maps_recorded(rng):
    maps = {}
    dtm_forward(rand_t(rng, 1, 8, 4, 4), rand_t(rng, 1, 8, 4, 4), params(8), "d", maps)
    assert set(maps) == {"rgb", "thermal"} and maps["rgb"].shape == (1, 1, 4, 4)


def test_channel_attention_gradient(rng):
    p = {k: v for k, v in params(8, seed=2).items() if ".rgb.ca." in k}
    t = {**p, "x": rand_t(rng, 1, 8, 4, 4)}
    w = rand_t(rng, 1, 8, 1, 1)
    r = check_gradients(lambda t: (channel_attention(t["x"], t, "d.rgb.ca") * w).sum(), t)
    assert r.max_error <= 1e-5


def test_dtm_forward_gradient():
    assert case_dtm_forward(seed=7).max_error <= 1e-5
