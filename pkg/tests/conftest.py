import numpy as np
import pytest

from nodulekit.phantom import PhantomSpec, SphereInsert


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def single_sphere_spec(
    diameter_mm=10.0,
    peak_hu=-50.0,
    dims=(64, 64, 64),
    noise=0.0,
    softness=1.0,
    seed=1,
    center=None,
):
    center = center or tuple((d - 1) / 2.0 for d in dims)
    return PhantomSpec(
        series_id="scan-0",
        dims=dims,
        noise_sigma_hu=noise,
        seed=seed,
        nodules=(SphereInsert(center, diameter_mm, peak_hu, softness),),
    )
