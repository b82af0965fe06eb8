import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from drive_curate.geometry import CameraModel, RigidTransform


def random_rotation(rng) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def random_camera(rng, width=640, height=480) -> CameraModel:
    f = rng.uniform(200.0, 900.0)
    return CameraModel(f * rng.uniform(0.9, 1.1), f, rng.uniform(0.3, 0.7) * width,
                       rng.uniform(0.3, 0.7) * height, width, height)


def random_transform(rng, scale=10.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """Two cuboids, six poses each, a sphere occluder in every third frame."""
    from drive_curate.synthfix import default_variants, make_toy_dataset, occluder_in_front, pose_grid

    front = occluder_in_front(0.55, 0.6)

    def occ(vi, pi, box, cam):
        return front(vi, pi, box, cam) if pi % 3 == 0 else ()

    out = tmp_path_factory.mktemp("synth")
    manifest = make_toy_dataset(out, default_variants(2, density=900.0), pose_grid(6), seed=3,
                                occluder_fn=occ)
    return out, manifest


@pytest.fixture(scope="session")
def tiny_curated(tiny_synth):
    from drive_curate.config import RunConfig
    from drive_curate.curation import curate_manifest

    _, manifest = tiny_synth
    samples, skips = curate_manifest(manifest, RunConfig())
    return samples, skips


@pytest.fixture(scope="session")
def orbit_samples(tmp_path_factory):
    """Five face-coloured cuboids at 24 azimuths, curated to 256 px crops.

    Returns the samples and the seconds spent building them.
    """
    import time

    from drive_curate.config import RunConfig
    from drive_curate.curation import curate_manifest
    from drive_curate.synthfix import default_variants, make_toy_dataset, pose_grid

    t0 = time.perf_counter()
    out = tmp_path_factory.mktemp("orbit")
    m = make_toy_dataset(out, default_variants(5), pose_grid(24), seed=9)
    samples, skips = curate_manifest(m, RunConfig(), jobs=1)
    assert len(samples) == 120 and not skips
    return samples, time.perf_counter() - t0
