import numpy as np
import pytest
import torch

from spidermesh.datamodel import ModelConfig
from spidermesh.errors import ScaleMismatchError
from spidermesh.gradcheck import case_aspp, case_refine_step, case_srm_decode
from spidermesh.srm import AsppSpec, aspp, aspp_decl, refine_decl, refine_step, srm_decl, srm_decode

from conftest import rand_t


def rand_params(decl, seed=0):
    r = np.random.default_rng(seed)
    return {k: torch.from_numpy(0.3 * r.normal(size=shape)) for k, (shape, _) in decl.items()}


def test_aspp_shape(rng):
    spec = AsppSpec((2, 4, 8), 256)
    out = aspp(rand_t(rng, 1, 64, 2, 2), spec, rand_params(aspp_decl("a", 64, spec)), "a")
    assert out.shape == (1, 256, 2, 2)


def test_aspp_from_config():
    spec = AsppSpec.from_config(ModelConfig(aspp_channels=32, aspp_dilations=(1, 3)))
    assert spec == AsppSpec((1, 3), 32)


def test_refine_step_shape(rng):
    p = rand_params(refine_decl("r", 6, 5, 3))
    out = refine_step(rand_t(rng, 1, 6, 3, 5), rand_t(rng, 1, 5, 6, 9), p, "r")
    assert out.shape == (1, 6, 6, 9)


def test_refine_step_scale_mismatch(rng):
    p = rand_params(refine_decl("r", 6, 5, 3))
    with pytest.raises(ScaleMismatchError):
        refine_step(rand_t(rng, 1, 6, 4, 4), rand_t(rng, 1, 5, 4, 4), p, "r")
    with pytest.raises(ScaleMismatchError):
        refine_step(rand_t(rng, 1, 6, 2, 2), rand_t(rng, 1, 5, 8, 8), p, "r")


def test_refine_constant_preserved_without_skip(rng):
    # zero skip weights and an identity fuse on the upsampled half: a constant field passes through
    c = 4
    p = rand_params(refine_decl("r", c, 3, 2))
    p["r.reduce.weight"].zero_()
    p["r.reduce.bias"].zero_()
    w = torch.zeros(c, c + 2, 3, 3, dtype=torch.float64)
    for i in range(c):
        w[i, i, 1, 1] = 1.0
    p["r.fuse.weight"], p["r.fuse.bias"] = w, torch.zeros(c, dtype=torch.float64)
    f_u = torch.full((1, c, 2, 2), 0.8, dtype=torch.float64)
    out = refine_step(f_u, rand_t(rng, 1, 3, 4, 4), p, "r")
    assert torch.allclose(out, torch.full((1, c, 4, 4), 0.8, dtype=torch.float64), atol=1e-12)


def test_srm_decode_output_size(rng):
    cfg = ModelConfig(num_classes=3, stage_channels=(4, 4, 6, 6, 8), aspp_channels=8)
    p = rand_params(srm_decl("s", cfg))
    f_m = [rand_t(rng, 1, 4, 8, 8), rand_t(rng, 1, 6, 4, 4), rand_t(rng, 1, 6, 2, 2)]
    spec = AsppSpec.from_config(cfg)
    assert srm_decode(rand_t(rng, 1, 8, 1, 1), f_m, p, "s", spec).shape == (1, 8, 32, 32)
    assert srm_decode(rand_t(rng, 1, 8, 1, 1), f_m, p, "s", spec, (30, 31)).shape == (1, 8, 30, 31)
    masks = []
    srm_decode(rand_t(rng, 1, 8, 1, 1), f_m, p, "s", spec, masks=masks)
    assert [m.shape[-1] for m in masks] == [2, 4, 8]


def test_srm_decode_needs_three_skips(rng):
    cfg = ModelConfig(num_classes=3, stage_channels=(4, 4, 6, 6, 8), aspp_channels=8)
    with pytest.raises(ScaleMismatchError):
        srm_decode(rand_t(rng, 1, 8, 1, 1), [rand_t(rng, 1, 4, 8, 8)], rand_params(srm_decl("s", cfg)), "s",
                   AsppSpec.from_config(cfg))


@pytest.mark.parametrize("case", [case_aspp, case_refine_step, case_srm_decode])
def test_gradients(case):
    r = case(seed=5)
    assert r.max_error <= 1e-5, r.errors
