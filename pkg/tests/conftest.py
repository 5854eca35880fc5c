import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_volume(rng, h=16, w=16, t=4):
    from lsdip import CineVolume
    return CineVolume(rng.standard_normal((h, w, t))
                      + 1j * rng.standard_normal((h, w, t)))


def random_coils(rng, c=4, h=16, w=16):
    from lsdip import CoilSensitivities
    maps = (rng.standard_normal((c, h, w))
            + 1j * rng.standard_normal((c, h, w)))
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return CoilSensitivities(maps / sos)
