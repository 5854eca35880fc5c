import numpy as np
import pytest

from lsdip import PhantomSpec, make_coils, make_phantom
from lsdip.volume import to_casorati


def test_range_and_dtype():
    v = make_phantom(PhantomSpec())
    assert v.dims == (64, 64, 8)
    mags = np.abs(v.data)
    assert mags.min() >= 0.0 and mags.max() <= 1.0
    assert np.all(v.data.imag == 0.0)


def test_deterministic_per_seed():
    a = make_phantom(PhantomSpec(seed=7))
    b = make_phantom(PhantomSpec(seed=7))
    c = make_phantom(PhantomSpec(seed=8))
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_frames_actually_move():
    v = make_phantom(PhantomSpec())
    diffs = np.abs(np.diff(v.data, axis=2)).sum(axis=(0, 1))
    assert np.all(diffs > 0)


def test_static_when_no_moving_ellipses():
    v = make_phantom(PhantomSpec(moving_ellipses=0, dims=(32, 32, 4),
                                 motion_amplitude=2.0, seed=1))
    assert np.allclose(v.data, v.data[:, :, :1])


def test_casorati_is_low_rank_plus_sparse_friendly():
    """The static part dominates: best rank-1 fit captures most energy."""
    v = make_phantom(PhantomSpec())
    x = to_casorati(v)
    s = np.linalg.svd(x, compute_uv=False)
    assert s[0] ** 2 / (s**2).sum() > 0.9
    assert s[1] > 0  # but not exactly rank one, motion adds innovations


def test_motion_amplitude_validated():
    with pytest.raises(ValueError):
        PhantomSpec(dims=(16, 16, 4), motion_amplitude=8.0)
    with pytest.raises(ValueError):
        PhantomSpec(background_ellipses=-1)


def test_coils_sos_normalized():
    coils = make_coils(32, 32, 4, seed=0)
    sos = np.sum(np.abs(coils.maps) ** 2, axis=0)
    assert np.allclose(sos, 1.0, atol=1e-12)
    assert coils.n_coils == 4


def test_coils_deterministic_and_distinct():
    a = make_coils(16, 16, 3, seed=5)
    b = make_coils(16, 16, 3, seed=5)
    c = make_coils(16, 16, 3, seed=6)
    assert np.array_equal(a.maps, b.maps)
    assert not np.array_equal(a.maps, c.maps)
    # coils are spatially distinct, not copies of each other
    assert not np.allclose(np.abs(a.maps[0]), np.abs(a.maps[1]), atol=1e-3)


def test_coils_have_phase():
    coils = make_coils(16, 16, 2, seed=1)
    assert np.abs(coils.maps.imag).max() > 0


def test_coils_validate_count():
    with pytest.raises(ValueError):
        make_coils(16, 16, 0, seed=0)
