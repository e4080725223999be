import math

import numpy as np
import pytest

from amp2d.character import (CharacterModel, Joint, Link, SitePoint,
                             builtin_names, get_character, make_pointmass,
                             make_walker5)


def test_builtin_names():
    assert builtin_names() == ["pointmass", "walker5"]


def test_pointmass_rest_geometry(pointmass):
    q = pointmass.rest_pose
    heights = pointmass.contact_positions(q)[:, 1]
    assert heights.min() == pytest.approx(0.0, abs=1e-12)
    tip = pointmass.end_effector_positions(q)[0]
    np.testing.assert_allclose(tip, [0.0, 0.1 + 0.35], atol=1e-12)


def test_walker_rest_geometry(walker):
    q = walker.rest_pose
    feet = walker.contact_positions(q)[:2, 1]
    np.testing.assert_allclose(feet, 0.0, atol=1e-12)
    head = walker.contact_positions(q)[-1]
    np.testing.assert_allclose(head, [0.0, 1.0], atol=1e-12)


def test_validation_rejects_bad_models():
    with pytest.raises(ValueError):
        Link("l", mass=-1.0, inertia=0.1, length=0.1, com_offset=0.0).validate()
    with pytest.raises(ValueError):
        CharacterModel("bad", [Link("a", 1, 1, 1, 0)],
                       [Joint("j", parent=0, attach=(0, 0))], [], [])
    # joint parent referencing a later link breaks tree order
    with pytest.raises(ValueError):
        CharacterModel(
            "bad",
            [Link("a", 1, 1, 1, 0), Link("b", 1, 1, 1, 0)],
            [Joint("j", parent=1, attach=(0, 0))], [], [])


def test_json_round_trip(tmp_path, walker):
    path = tmp_path / "walker.json"
    walker.save(path)
    loaded = get_character(str(path))
    assert loaded.name == walker.name
    assert loaded.joint_names == walker.joint_names
    np.testing.assert_array_equal(loaded.rest_pose, walker.rest_pose)
    for a, b in zip(loaded.links, walker.links):
        assert a == b
    for a, b in zip(loaded.joints, walker.joints):
        assert a == b
    q = np.array([0.3, 0.7, 0.4, 0.1, -0.2, 0.05, -0.6])
    np.testing.assert_allclose(loaded.contact_positions(q),
                               walker.contact_positions(q), atol=1e-15)


def test_mount_angles_fold_legs_down(walker):
    _, angles = walker.link_frames(walker.rest_pose)
    assert angles[0] == pytest.approx(math.pi / 2)
    assert angles[1] == pytest.approx(-math.pi / 2)  # thigh points down


def test_com_combines_links(pointmass):
    q = pointmass.rest_pose
    com = pointmass.com(q)
    base = 2.0 * np.array([0.0, 0.1])
    rotor = 0.5 * np.array([0.0, 0.1 + 0.175])
    np.testing.assert_allclose(com, (base + rotor) / 2.5, atol=1e-12)


def test_get_character_unknown_path():
    with pytest.raises(FileNotFoundError):
        get_character("not-a-builtin-or-file.json")
