import json
from dataclasses import replace

import numpy as np
import pytest

from fusetrack.camera import PersonModel, initial_bbox
from fusetrack.config import ConfigError
from fusetrack.sim import (Occlusion, Pose, follow_controller, load_scenario, render_frame,
                           run_scenario, save_scenario, simulate_sonar)
from fusetrack.sim.presets import EMITTER_Z, default_calibration, occlusion
from fusetrack.sim.render import background
from fusetrack.sim.scenario import ImageParams, RobotParams, Scenario, SonarParams
from fusetrack.ultrasonic import sonar_posterior, train_receiver_models
from fusetrack.sim.world import gpr_training_data


def static(x=3.0, y=0.0, duration=10.0, noise=0.0, sonar_noise=0.0, seed=0, occlusions=()):
    wp = np.array([[0.0, x, y, EMITTER_Z], [duration, x, y, EMITTER_Z]])
    return Scenario(seed=seed, duration=duration, camera_rate=25.0, sonar_rate=5.0, waypoints=wp,
                    calibration=default_calibration(), occlusions=occlusions,
                    image=ImageParams(noise_std=noise), sonar=SonarParams(noise_std=sonar_noise),
                    robot=RobotParams(follow=False))


def person_mask(scn, t, pose=Pose()):
    img, truth = render_frame(scn, t, pose)
    bg = background(scn.calibration, pose.heading, scn.image.background_seed)
    diff = np.abs(img.astype(float) - np.clip(np.rint(bg), 0, 255)).max(axis=2)
    return diff > 0, truth


# -- render_frame ------------------------------------------------------------------

def test_occluder_covering_the_target():
    band = (150.0, 0.0, 330.0, 360.0)
    scn = static(occlusions=(Occlusion(2.0, 4.0, band),))
    img, truth = render_frame(scn, 3.0, Pose())
    assert truth.occluded and truth.in_view
    assert truth.coverage == pytest.approx(1.0)
    u0, v0, u1, v1 = truth.bbox.corners()
    assert u0 >= band[0] and u1 <= band[2]
    # no person pixel survives: the box region equals the bare board
    mask, _ = person_mask(replace(scn, occlusions=()), 3.0)
    board = np.clip(np.rint(np.array([120.0, 105.0, 90.0])), 0, 255)
    patch = img[mask]
    assert np.all(np.abs(patch.astype(float) - board) <= 7)
    _, free = render_frame(scn, 1.0, Pose())
    assert not free.occluded and free.coverage == 0.0


def test_static_zero_noise_frames_identical():
    scn = static()
    a, _ = render_frame(scn, 1.0, Pose())
    b, _ = render_frame(scn, 1.04, Pose())
    assert np.array_equal(a, b)


def test_depth_doubling_halves_box_height():
    m2, t2 = person_mask(static(x=2.0), 0.0)
    m4, t4 = person_mask(static(x=4.0), 0.0)
    rows2 = np.flatnonzero(m2.any(axis=1))
    rows4 = np.flatnonzero(m4.any(axis=1))
    h2, h4 = rows2[-1] - rows2[0] + 1, rows4[-1] - rows4[0] + 1
    assert abs(h2 - 2 * h4) <= 1
    assert t2.bbox.height / t4.bbox.height == pytest.approx(2.0, rel=1e-3)


def test_rendered_extent_matches_projected_box():
    scn = static(x=3.0, y=0.4)
    mask, truth = person_mask(scn, 0.0)
    box = initial_bbox(np.array([3.0, 0.4, EMITTER_Z]), scn.person, scn.calibration)
    assert truth.bbox.center == pytest.approx(box.center, abs=0.5)
    assert truth.bbox.height == pytest.approx(box.height, abs=0.5)
    rows, cols = np.flatnonzero(mask.any(axis=1)), np.flatnonzero(mask.any(axis=0))
    u0, v0, u1, v1 = box.corners()
    # painted pixels are those whose unit square overlaps the box
    assert abs(cols[0] - (u0 + 0.5)) <= 1 and abs(cols[-1] - (u1 - 0.5)) <= 1
    assert abs(rows[0] - (v0 + 0.5)) <= 1 and abs(rows[-1] - (v1 - 0.5)) <= 1


def test_off_screen_target():
    scn = static(x=3.0, y=6.0)
    _, truth = render_frame(scn, 0.0, Pose())
    assert not truth.in_view
    _, truth = render_frame(scn, 0.0, Pose(heading=np.pi))
    assert truth.bbox is None and not truth.in_view


def test_render_rejects_out_of_range_time():
    with pytest.raises(ValueError):
        render_frame(static(duration=2.0), 3.0, Pose())


# -- simulate_sonar -----------------------------------------------------------------

def test_dead_ahead_readings_mirror():
    scn = static()
    U = simulate_sonar(scn, np.array([3.0, 0.0, EMITTER_Z]), 0)
    assert U[0] == U[3] and U[1] == U[2]


def test_noise_free_readings_localise_within_a_cell():
    scn = static()
    inputs, readings = gpr_training_data(scn)
    models = train_receiver_models(inputs, readings, scn.gpr.hyper(0.0))
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = np.append(rng.uniform([1.0, -1.5], [4.5, 1.5]), 0.0)
        est = sonar_posterior(models, simulate_sonar(scn, p, 0), scn.gpr.grid())
        assert abs(est.x_u - p[0]) <= 0.05 and abs(est.y_u - p[1]) <= 0.05


def test_outside_region_is_no_detection():
    scn = static()
    assert simulate_sonar(scn, np.array([6.0, 0.0, 0.0]), 0) is None
    assert simulate_sonar(scn, np.array([2.0, 2.5, 0.0]), 0) is None
    assert simulate_sonar(scn, np.array([-1.0, 0.0, 0.0]), 0) is None


def test_sonar_noise_statistics():
    scn = static(sonar_noise=0.03)
    p = np.array([2.5, 0.3, EMITTER_Z])
    clean = simulate_sonar(static(), p, 0)
    resid = np.array([simulate_sonar(scn, p, i) - clean for i in range(500)]).ravel()
    assert len(resid) >= 1000
    assert abs(resid.std() - 0.03) <= 0.003


# -- follow_controller ------------------------------------------------------------------

def test_follow_controller_examples():
    assert follow_controller((3.0, 0.0, 0.0), 3.0) == (0.0, 0.0)
    v, w = follow_controller((4.0, 0.0, 0.0), 3.0, RobotParams(k_v=0.5))
    assert v == pytest.approx(0.5) and w == 0.0
    _, w = follow_controller((3.0, 0.5, 0.0), 3.0)
    assert w > 0
    _, w = follow_controller((3.0, -0.5, 0.0), 3.0)
    assert w < 0
    v, w = follow_controller((30.0, 300.0, 0.0), 3.0)
    assert v == RobotParams().v_max and w == RobotParams().w_max


def test_following_closes_the_gap():
    wp = np.array([[0.0, 5.0, 1.0, EMITTER_Z], [10.0, 5.0, 1.0, EMITTER_Z]])
    scn = Scenario(seed=0, duration=10.0, camera_rate=25.0, sonar_rate=5.0, waypoints=wp,
                   calibration=default_calibration(), image=ImageParams(noise_std=0.0))
    sim = run_scenario(scn)
    x, y, z = sim.truth.positions[-1]
    assert abs(np.hypot(x, z) - 3.0) < 0.05 and abs(y) < 0.05


# -- run_scenario ----------------------------------------------------------------------

def test_event_counts():
    sim = run_scenario(static(duration=10.0))
    assert len(sim.camera) == 250 and len(sim.sonar) == 50
    assert np.all(np.diff(sim.truth.stamps) > 0)


def test_same_seed_is_bit_identical():
    scn = static(noise=3.0, sonar_noise=0.02, seed=4, duration=2.0)
    a, b = run_scenario(scn), run_scenario(scn)
    for ea, eb in zip(a.sonar, b.sonar):
        assert np.array_equal(ea.readings, eb.readings)
    for ea, eb in zip(a.camera[::10], b.camera[::10]):
        assert np.array_equal(a.frame(ea), b.frame(eb))
    assert np.array_equal(a.truth.positions, b.truth.positions)


def test_seed_changes_noise_not_trajectory():
    scn = static(noise=3.0, sonar_noise=0.02, seed=4, duration=2.0)
    a, b = run_scenario(scn), run_scenario(scn.with_seed(5))
    assert np.array_equal(a.truth.positions, b.truth.positions)
    assert not np.array_equal(a.sonar[0].readings, b.sonar[0].readings)
    assert not np.array_equal(a.frame(a.camera[0]), b.frame(b.camera[0]))


def test_ground_truth_box_matches_geometry():
    sim = run_scenario(occlusion())
    for k in range(0, len(sim.stamps), 20):
        box = initial_bbox(sim.truth.positions[k], sim.scenario.person, sim.scenario.calibration)
        u, v, w, h = sim.truth.boxes[k]
        assert abs(u - box.u) <= 0.5 and abs(v - box.v) <= 0.5 and abs(h - box.height) <= 0.5


def test_occlusion_flags_in_log():
    sim = run_scenario(occlusion())
    t = sim.truth.stamps
    inside = (t >= 4.0) & (t < 6.0)
    assert np.array_equal(sim.truth.occluded, inside)
    assert np.all(sim.truth.coverage[inside] == 1.0)


def test_sensor_logs(tmp_path):
    sim = run_scenario(static(duration=1.0, sonar_noise=0.02))
    sim.write_sensor_logs(tmp_path / "c.csv", tmp_path / "s.csv")
    sim.truth.write_csv(tmp_path / "g.csv")
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 26
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 6
    assert len((tmp_path / "g.csv").read_text().splitlines()) == 26


# -- scenario files --------------------------------------------------------------------

def test_scenario_round_trip(tmp_path):
    scn = occlusion()
    save_scenario(scn, tmp_path / "s.json")
    back = load_scenario(tmp_path / "s.json")
    assert back.to_dict() == scn.to_dict()


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(bogus=1),
    lambda d: d.pop("seed"),
    lambda d: d.update(duration=-1.0),
    lambda d: d["image"].update(texture="plaid"),
    lambda d: d["sonar"].update(colour=1),
    lambda d: d["occlusions"][0].update(end=99.0),
    lambda d: d["trajectory"].update(waypoints=[[0, 1, 0, 0]]),
])
def test_scenario_validation(tmp_path, mutate):
    d = occlusion().to_dict()
    mutate(d)
    (tmp_path / "s.json").write_text(json.dumps(d))
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "s.json")


def test_scenario_invalid_json(tmp_path):
    (tmp_path / "s.json").write_text("{nope")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "s.json")
