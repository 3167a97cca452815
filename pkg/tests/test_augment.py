import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spidermesh.augment import (AugmentConfig, augment_pipeline, cutout, hflip, m_cutout, nearest_index,
                                random_crop_resize, sample_rect)
from spidermesh.datamodel import RgbtSample
from spidermesh.errors import CropLargerThanImageError, InvalidRangeError


def coded_sample(h=12, w=10):
    """Every plane stores the flat pixel index, so any remap can be read back from each plane."""
    idx = np.arange(h * w, dtype=np.float64).reshape(h, w)
    rgb = np.stack([idx, idx + 0.25, idx + 0.5], axis=-1) / (h * w)
    return RgbtSample(rgb, (idx / (h * w))[..., None], idx.astype(np.int64), "coded")


def decode(s, n):
    return (np.round(s.rgb[..., 0] * n).astype(int), np.round(s.thermal[..., 0] * n).astype(int), s.label)


def test_flip_is_involution():
    s = coded_sample()
    t = hflip(hflip(s))
    assert np.array_equal(t.rgb, s.rgb) and np.array_equal(t.thermal, s.thermal) and np.array_equal(t.label, s.label)


def test_flip_moves_label_with_pixels():
    s = coded_sample()
    assert np.array_equal(hflip(s).label, s.label[:, ::-1])


def test_geometric_transforms_share_one_permutation(rng):
    s = coded_sample()
    n = 12 * 10
    for _ in range(200):
        t = random_crop_resize(s, rng, (int(rng.integers(1, 13)), int(rng.integers(1, 11))))
        if rng.random() < 0.5:
            t = hflip(t)
        a, b, c = decode(t, n)
        assert np.array_equal(a, b) and np.array_equal(a, c)


def test_crop_too_large(rng):
    with pytest.raises(CropLargerThanImageError):
        random_crop_resize(coded_sample(), rng, (13, 4))
    with pytest.raises(CropLargerThanImageError):
        augment_pipeline(coded_sample(), rng, AugmentConfig(crop_size=(4, 11), crop_prob=1.0))


def test_nearest_index_identity_and_range():
    assert np.array_equal(nearest_index(7, 0, 7), np.arange(7))
    idx = nearest_index(10, 3, 4)
    assert idx.min() >= 3 and idx.max() <= 6 and np.all(np.diff(idx) >= 0)


@settings(max_examples=200, deadline=None)
@given(h=st.integers(1, 40), w=st.integers(1, 40), lo=st.floats(0, 0.5), span=st.floats(0, 0.49),
       seed=st.integers(0, 10_000))
def test_rect_area_in_range(h, w, lo, span, seed):
    r = np.random.default_rng(seed)
    hi = lo + span
    try:
        m = sample_rect(r, h, w, lo, hi)
    except InvalidRangeError:
        # only allowed when no integer rectangle has an area in range
        assert not any(lo * h * w <= a * b <= hi * h * w for a in range(1, h + 1) for b in range(1, w + 1))
        return
    if m.area:
        assert lo * h * w - 1e-9 <= m.area <= hi * h * w + 1e-9
        assert 0 <= m.top and m.top + m.height <= h and 0 <= m.left and m.left + m.width <= w


@pytest.mark.parametrize("lo, hi", [(-0.1, 0.2), (0.3, 0.2), (0.1, 1.0)])
def test_rect_bad_range(rng, lo, hi):
    with pytest.raises(InvalidRangeError):
        sample_rect(rng, 8, 8, lo, hi)


def test_m_cutout_touches_rgb_only(rng, synth_samples):
    for i in range(1000):
        s = synth_samples[i % len(synth_samples)]
        t, mask = m_cutout(s, rng, 0.1, 0.4)
        assert np.array_equal(t.thermal, s.thermal) and np.array_equal(t.label, s.label)
        outside = np.ones(s.size, dtype=bool)
        outside[mask.slices()] = False
        assert np.array_equal(t.rgb[outside], s.rgb[outside])
        assert np.all(t.rgb[mask.slices()] == 0.0)


def test_cutout_masks_both(rng, synth_samples):
    s = synth_samples[0]
    t = cutout(s, rng, 0.2, 0.3)
    assert np.array_equal(t.rgb == 0, np.repeat(t.thermal == 0, 3, axis=-1) | (s.rgb == 0))
    assert np.array_equal(t.label, s.label)


def test_pipeline_probabilities(rng, synth_samples):
    s = synth_samples[0]
    off = AugmentConfig(flip_prob=0.0, mcutout_prob=0.0)
    t = augment_pipeline(s, rng, off)
    assert np.array_equal(t.rgb, s.rgb)
    flips = sum(np.array_equal(augment_pipeline(s, rng, AugmentConfig(mcutout_prob=0.0)).label, s.label[:, ::-1])
                for _ in range(400))
    assert 150 < flips < 250
