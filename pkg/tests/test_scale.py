import numpy as np
import pytest

from fusetrack.camera import CameraCalibration, PersonModel, initial_bbox
from fusetrack.tracker.scale import (SIGMA2D_FLOOR, ScaleFilter, fuse_scale, scale_factors,
                                     scale_from_3d, weighted_scale_spread)
from fusetrack.sim.render import draw_person, person_texture


def test_fuse_scale_fixed_point():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = rng.uniform(0.2, 5)
        a, b = rng.uniform(1e-3, 2, size=2)
        assert abs(fuse_scale(s, a, s, b) - s) <= 1e-12


def test_fuse_scale_equal_sigma_midpoint():
    rng = np.random.default_rng(1)
    for _ in range(200):
        s2, s3 = rng.uniform(0.2, 5, size=2)
        sig = rng.uniform(1e-3, 2)
        assert abs(fuse_scale(s2, sig, s3, sig) - (s2 + s3) / 2) <= 1e-12


def test_fuse_scale_worked_example():
    # (1.0/0.1 + 1.2/0.3) * (0.1*0.3)/(0.1+0.3) = 14 * 0.075
    assert abs(fuse_scale(1.0, 0.1, 1.2, 0.3) - 1.05) <= 1e-12


def test_fuse_scale_rejects_non_positive_sigma():
    with pytest.raises(ValueError):
        fuse_scale(1.0, 0.0, 1.0, 0.1)


@pytest.fixture
def cal():
    return CameraCalibration.forward_looking(400.0, 400.0, 320.0, 240.0, (640, 480))


def test_scale_from_3d_at_initial_position(cal):
    person = PersonModel(1.75)
    x0 = np.array([3.0, 0.2, -0.1])
    v_init = initial_bbox(x0, person, cal).height
    s3d, sig = scale_from_3d(x0, np.diag([0.1, 0.1, 0.1]), person, cal, v_init)
    assert s3d == pytest.approx(1.0, abs=1e-12)
    assert sig == pytest.approx(np.sqrt(0.1))


def test_scale_from_3d_depth_doubling(cal):
    person = PersonModel()
    v_init = initial_bbox([2.0, 0.0, 0.0], person, cal).height
    s3d, _ = scale_from_3d([4.0, 0.0, 0.0], np.eye(3), person, cal, v_init)
    assert abs(s3d - 0.5) < 1e-6


def test_scale_from_3d_sigma_is_sqrt_of_z_variance(cal):
    _, sig = scale_from_3d([3.0, 0, 0], np.diag([0.01, 0.01, 0.04]), PersonModel(), cal, 100.0)
    assert sig == pytest.approx(0.2, abs=1e-15)


def test_uniform_scores_give_unweighted_spread():
    s = 1.3 * scale_factors(17, 1.03)
    assert weighted_scale_spread(s, np.full(17, 0.7)) == pytest.approx(np.std(s), rel=1e-12)
    assert weighted_scale_spread(s, np.zeros(17)) == pytest.approx(np.std(s), rel=1e-12)


def _scene(scale=1.0, size=(640, 480)):
    rng = np.random.default_rng(0)
    img = rng.uniform(60, 200, size=(size[1] // 8, size[0] // 8, 3))
    import cv2
    img = cv2.resize(img, size, interpolation=cv2.INTER_LINEAR)
    from fusetrack.camera import BoundingBox
    box = BoundingBox((320.0, 240.0), 50.0 * scale, 180.0 * scale)
    draw_person(img, box, person_texture())
    return img, BoundingBox((320.0, 240.0), 50.0, 180.0)


def test_static_frame_keeps_unit_scale():
    img, box = _scene()
    sf = ScaleFilter((box.width, box.height))
    sf.train(img, box.center, 1.0)
    s2d, sig = sf.estimate(img, box.center, 1.0)
    assert s2d == 1.0
    assert sig >= SIGMA2D_FLOOR


def test_enlarged_target_scale_within_one_step():
    img0, box = _scene()
    sf = ScaleFilter((box.width, box.height))
    sf.train(img0, box.center, 1.0)
    img1, _ = _scene(1.1)
    s2d, _ = sf.estimate(img1, box.center, 1.0)
    assert abs(s2d - 1.1) <= 1.1 * (1.03 - 1) + 1e-9


def test_scales_outside_image_score_zero():
    img, box = _scene()
    sf = ScaleFilter((box.width, box.height))
    sf.train(img, box.center, 1.0)
    sc = sf.scores(img, (5000.0, 5000.0), 1.0)
    assert np.all(sc == 0)
