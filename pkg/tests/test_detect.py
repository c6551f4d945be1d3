import dataclasses

import numpy as np
import pytest

from nodulekit.detect import (
    ShapeIndexParams,
    ball_structure,
    detect_large,
    detect_shape_index,
    detect_subsolid,
    resample_isotropic,
)
from nodulekit.clustering import merge_point_groups
from nodulekit.errors import ValidationError
from nodulekit.phantom import PhantomSpec, SphereInsert, generate_phantom
from nodulekit.volume import Volume
from conftest import single_sphere_spec
from oracles import equivalent_diameter_mm, sphere_volume_mm3, trilinear


class TestResample:
    def test_identity_when_already_isotropic(self):
        rng = np.random.default_rng(0)
        v = Volume(rng.normal(size=(6, 7, 8)).astype(np.float32), spacing=(1, 1, 1))
        r = resample_isotropic(v, 1.0)
        assert r.dims == v.dims
        assert np.allclose(r.data, v.data, atol=1e-6)

    def test_constant_volume_stays_constant(self):
        v = Volume(np.full((6, 8, 10), 7.0, dtype=np.float32), spacing=(0.7, 0.7, 2.5))
        r = resample_isotropic(v, 1.0)
        assert np.allclose(r.data, 7.0)
        assert r.spacing == (1.0, 1.0, 1.0)
        assert r.origin == v.origin

    def test_linear_ramp_matches_analytic_values(self):
        # ramp in world x over a small grid; float32 storage stays below 1e-6
        nx, ny, nz = 9, 6, 5
        xs = np.arange(nx, dtype=np.float64) * 0.8
        data = np.broadcast_to(xs, (nz, ny, nx)).astype(np.float32)
        v = Volume(data.copy(), spacing=(0.8, 1.0, 1.3))
        r = resample_isotropic(v, 0.5)
        for i in range(r.dims[0]):
            world_x = r.origin[0] + i * 0.5
            assert abs(r.data[0, 0, i] - world_x) < 1e-6

    def test_matches_hand_rolled_trilinear_oracle(self):
        rng = np.random.default_rng(3)
        v = Volume(rng.normal(size=(5, 6, 7)).astype(np.float32), spacing=(1.1, 0.9, 1.7))
        r = resample_isotropic(v, 1.0)
        data = v.data.astype(np.float64)
        for k in range(0, r.dims[2], 2):
            for j in range(0, r.dims[1], 2):
                for i in range(0, r.dims[0], 3):
                    world = np.array(r.origin) + np.array([i, j, k]) * 1.0
                    voxel = v.world_to_voxel(world)  # (x, y, z)
                    expected = trilinear(data, voxel[::-1])
                    assert abs(r.data[k, j, i] - expected) < 1e-6

    def test_rejects_degenerate(self):
        v = Volume(np.zeros((1, 4, 4), dtype=np.float32), spacing=(1, 1, 1))
        with pytest.raises(ValidationError):
            resample_isotropic(v, 1.0)
        v = Volume(np.zeros((4, 4, 4), dtype=np.float32), spacing=(1, 1, 1))
        with pytest.raises(ValidationError):
            resample_isotropic(v, 0.0)


class TestShapeIndexDetector:
    def test_constant_volume_yields_nothing(self):
        v = Volume(np.full((24, 24, 24), -850, dtype=np.int16), spacing=(1, 1, 1))
        assert detect_shape_index(v, seriesuid="s") == []

    def test_single_sphere_single_candidate(self):
        result = generate_phantom(single_sphere_spec(diameter_mm=10.0, dims=(64, 64, 64)))
        (candidate,) = detect_shape_index(result.volume, seriesuid="s")
        center = np.array(result.annotations[0].center)
        assert np.linalg.norm(np.array(candidate.center) - center) < 2.0
        assert candidate.detector == "shape_index"
        assert candidate.cluster_size > 0

    def test_noisy_sphere_still_found(self):
        result = generate_phantom(
            single_sphere_spec(diameter_mm=10.0, dims=(64, 64, 64), noise=15.0, seed=5)
        )
        candidates = detect_shape_index(result.volume, seriesuid="s")
        center = np.array(result.annotations[0].center)
        distances = [np.linalg.norm(np.array(c.center) - center) for c in candidates]
        assert min(distances) < 2.0

    def test_merge_radius_controls_cluster_fusion(self):
        # two spheres whose detector clusters sit 4 voxels apart: separate at
        # the default merge radius 3, fused once the radius exceeds 4
        spec = PhantomSpec(
            series_id="s", dims=(64, 48, 48),
            nodules=(
                SphereInsert((24.0, 24.0, 24.0), 8.0, -50.0, 1.0),
                SphereInsert((34.0, 24.0, 24.0), 8.0, -50.0, 1.0),
            ),
        )
        v = generate_phantom(spec).volume
        near = detect_shape_index(v, ShapeIndexParams(merge_radius_voxels=3.0), "s")
        assert len(near) == 2
        fused = detect_shape_index(v, ShapeIndexParams(merge_radius_voxels=4.5), "s")
        assert len(fused) == 1

    def test_cluster_merge_rule_on_synthetic_groups(self):
        base = np.argwhere(ball_structure(2.0)).astype(np.float64)
        for offset, expected in [(4.0 + 4.0, 2), (4.0 + 2.0, 1)]:
            shifted = base + np.array([offset, 0.0, 0.0])
            labels = merge_point_groups([base, shifted], radius=3.0)
            assert labels.max() + 1 == expected

    def test_requires_isotropic_grid(self):
        v = Volume(np.zeros((8, 8, 8), dtype=np.int16), spacing=(0.7, 0.7, 2.5))
        with pytest.raises(ValidationError, match="isotropic"):
            detect_shape_index(v, seriesuid="s")

    def test_translation_equivariance(self):
        base = single_sphere_spec(diameter_mm=10.0, dims=(64, 64, 64), center=(28.0, 30.0, 26.0))
        shifted = dataclasses.replace(
            base, nodules=(dataclasses.replace(base.nodules[0], center=(31.0, 34.0, 31.0)),)
        )
        (a,) = detect_shape_index(generate_phantom(base).volume, seriesuid="s")
        (b,) = detect_shape_index(generate_phantom(shifted).volume, seriesuid="s")
        delta = np.array(b.center) - np.array(a.center)
        assert np.abs(delta - np.array([3.0, 4.0, 5.0])).max() <= 1.0


def study_phantom(nodules, dims=(96, 96, 96), noise=12.0, seed=2):
    return generate_phantom(
        PhantomSpec(series_id="s", dims=dims, noise_sigma_hu=noise, seed=seed, nodules=nodules)
    )


class TestSubsolidDetector:
    def test_detects_8mm_subsolid_sphere(self):
        result = study_phantom((SphereInsert((48.0, 48.0, 48.0), 8.0, -500.0, 0.5),))
        (candidate,) = detect_subsolid(result.volume, result.mask, "s")
        assert np.linalg.norm(np.array(candidate.center) - 48.0) < 2.0
        assert sphere_volume_mm3(8.0) >= 34.0  # the gate this relies on

    def test_rejects_3mm_sphere_by_volume_gate(self):
        assert sphere_volume_mm3(3.0) < 34.0
        result = study_phantom((SphereInsert((48.0, 48.0, 48.0), 3.0, -500.0, 0.5),))
        assert detect_subsolid(result.volume, result.mask, "s") == []

    def test_solid_sphere_outside_band_not_detected(self):
        result = study_phantom((SphereInsert((48.0, 48.0, 48.0), 10.0, -100.0, 0.5),))
        assert detect_subsolid(result.volume, result.mask, "s") == []

    def test_grid_mismatch_rejected(self):
        result = study_phantom((SphereInsert((48.0, 48.0, 48.0), 8.0, -500.0, 0.5),))
        bad_mask = Volume(result.mask.data, result.mask.spacing, origin=(0.0, 0.0, 1.0))
        with pytest.raises(ValidationError, match="grid mismatch"):
            detect_subsolid(result.volume, bad_mask, "s")

    def test_candidates_inside_mask(self):
        result = study_phantom(
            (
                SphereInsert((30.0, 30.0, 30.0), 9.0, -500.0, 0.5),
                SphereInsert((64.0, 64.0, 60.0), 7.0, -500.0, 0.5),
            )
        )
        for c in detect_subsolid(result.volume, result.mask, "s"):
            voxel = np.round(result.mask.world_to_voxel(c.center)).astype(int)
            assert result.mask.data[voxel[2], voxel[1], voxel[0]] == 1


class TestLargeDetector:
    def test_detects_20mm_solid_sphere(self):
        result = study_phantom((SphereInsert((48.0, 48.0, 48.0), 20.0, -50.0, 1.0),))
        candidates = detect_large(result.volume, result.mask, "s")
        assert len(candidates) == 1
        assert np.linalg.norm(np.array(candidates[0].center) - 48.0) < 2.0

    def test_rejects_small_sphere_by_equivalent_diameter(self):
        assert equivalent_diameter_mm(sphere_volume_mm3(5.0)) < 8.0
        result = study_phantom((SphereInsert((48.0, 48.0, 48.0), 5.0, -50.0, 0.5),))
        assert detect_large(result.volume, result.mask, "s") == []

    def test_rejects_huge_blob_by_equivalent_diameter(self):
        assert equivalent_diameter_mm(sphere_volume_mm3(50.0)) > 40.0
        result = study_phantom(
            (SphereInsert((48.0, 48.0, 48.0), 50.0, -50.0, 1.0),), dims=(112, 112, 112)
        )
        assert detect_large(result.volume, result.mask, "s") == []

    def test_translation_equivariance_whole_voxels(self):
        base = study_phantom((SphereInsert((40.0, 40.0, 40.0), 14.0, -50.0, 1.0),), noise=0.0)
        moved = study_phantom((SphereInsert((43.0, 45.0, 47.0), 14.0, -50.0, 1.0),), noise=0.0)
        (a,) = detect_large(base.volume, base.mask, "s")
        (b,) = detect_large(moved.volume, moved.mask, "s")
        delta = np.array(b.center) - np.array(a.center)
        assert np.abs(delta - np.array([3.0, 5.0, 7.0])).max() <= 1.0


def test_ball_structure_radius_one_is_six_cross():
    ball = ball_structure(1.0)
    assert ball.shape == (3, 3, 3)
    assert ball.sum() == 7
