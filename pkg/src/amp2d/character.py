"""Planar articulated character description, kinematics, and built-in models.

A character is a tree of rigid links joined by revolute joints. Link i's local
frame has its origin at the link's parent joint (the root reference point for
link 0) with the link axis along local +x; geometry (centers of mass, joint
attachment points, contact points, end effectors) is expressed in that frame.
Joint j connects its parent link to link j+1 and contributes generalized
coordinate q[3 + j]; the root contributes the three unactuated coordinates
(root_x, root_y, root_rot).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

CHARACTER_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Link:
    name: str
    mass: float            # kg
    inertia: float         # kg m^2 about the center of mass
    length: float          # m, along local +x
    com_offset: float      # m, center of mass at (com_offset, 0) in link frame

    def validate(self):
        if self.mass <= 0.0 or self.inertia <= 0.0:
            raise ValueError(f"link '{self.name}': mass and inertia must be > 0")
        if self.length < 0.0:
            raise ValueError(f"link '{self.name}': length must be >= 0")


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int                      # parent link index; child link is joint index + 1
    attach: tuple[float, float]      # attachment point in the parent link frame
    mount: float = 0.0               # fixed frame offset: phi_child = phi_parent + mount + q
    limits: tuple[float, float] = (-math.inf, math.inf)
    kp: float = 50.0
    kd: float = 2.0
    torque_limit: float = 50.0
    continuous: bool = False         # unlimited rotor; PD position error wrapped

    def validate(self, n_links: int, index: int):
        if not (0 <= self.parent <= index):
            raise ValueError(f"joint '{self.name}': parent {self.parent} breaks tree order")
        if self.kp < 0.0 or self.kd < 0.0:
            raise ValueError(f"joint '{self.name}': kp and kd must be >= 0")
        if self.torque_limit <= 0.0:
            raise ValueError(f"joint '{self.name}': torque limit must be > 0")
        if not self.continuous and self.limits[0] > self.limits[1]:
            raise ValueError(f"joint '{self.name}': empty limit interval")


@dataclass(frozen=True)
class SitePoint:
    """A material point on a link (contact point or end effector)."""
    link: int
    offset: tuple[float, float]
    is_foot: bool = False


@dataclass
class CharacterModel:
    name: str
    links: list[Link]
    joints: list[Joint]
    contact_points: list[SitePoint]
    end_effectors: list[SitePoint]
    rest_pose: np.ndarray = field(default=None)  # generalized coordinates, standing
    fixed_root: bool = False                     # pinned base (test fixtures only)

    def __post_init__(self):
        if len(self.joints) != len(self.links) - 1:
            raise ValueError("need exactly one joint per non-root link")
        for link in self.links:
            link.validate()
        for j, joint in enumerate(self.joints):
            joint.validate(len(self.links), j)
        for pt in self.contact_points + self.end_effectors:
            if not (0 <= pt.link < len(self.links)):
                raise ValueError(f"site references missing link {pt.link}")
        if self.rest_pose is None:
            self.rest_pose = np.zeros(self.n_dof)
        self.rest_pose = np.asarray(self.rest_pose, dtype=float)
        if self.rest_pose.shape != (self.n_dof,):
            raise ValueError("rest pose dimension does not match DoF count")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_dof(self) -> int:
        return 3 + self.n_joints

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def total_mass(self) -> float:
        return sum(l.mass for l in self.links)

    # -- kinematics ---------------------------------------------------------

    def link_frames(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World origins (L, 2) and angles (L,) of every link frame."""
        q = np.asarray(q, dtype=float)
        L = self.n_links
        origins = np.empty((L, 2))
        angles = np.empty(L)
        origins[0] = q[0:2]
        angles[0] = q[2]
        for j, joint in enumerate(self.joints):
            p = joint.parent
            c, s = math.cos(angles[p]), math.sin(angles[p])
            ax, ay = joint.attach
            origins[j + 1, 0] = origins[p, 0] + c * ax - s * ay
            origins[j + 1, 1] = origins[p, 1] + s * ax + c * ay
            angles[j + 1] = angles[p] + joint.mount + q[3 + j]
        return origins, angles

    def _site_world(self, q, sites: list[SitePoint]) -> np.ndarray:
        origins, angles = self.link_frames(q)
        out = np.empty((len(sites), 2))
        for k, pt in enumerate(sites):
            c, s = math.cos(angles[pt.link]), math.sin(angles[pt.link])
            out[k, 0] = origins[pt.link, 0] + c * pt.offset[0] - s * pt.offset[1]
            out[k, 1] = origins[pt.link, 1] + s * pt.offset[0] + c * pt.offset[1]
        return out

    def contact_positions(self, q) -> np.ndarray:
        return self._site_world(q, self.contact_points)

    def end_effector_positions(self, q) -> np.ndarray:
        return self._site_world(q, self.end_effectors)

    def joint_pivot_positions(self, q) -> np.ndarray:
        """World positions of every joint pivot (= non-root link origins)."""
        origins, _ = self.link_frames(q)
        return origins[1:].copy()

    def com_positions(self, q) -> np.ndarray:
        origins, angles = self.link_frames(q)
        out = np.empty((self.n_links, 2))
        for i, link in enumerate(self.links):
            c, s = math.cos(angles[i]), math.sin(angles[i])
            out[i, 0] = origins[i, 0] + c * link.com_offset
            out[i, 1] = origins[i, 1] + s * link.com_offset
        return out

    def com(self, q) -> np.ndarray:
        """Whole-body center of mass."""
        coms = self.com_positions(q)
        masses = np.array([l.mass for l in self.links])
        return masses @ coms / masses.sum()

    def packed(self) -> "PackedModel":
        return PackedModel.from_model(self)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": CHARACTER_FORMAT_VERSION,
            "name": self.name,
            "fixed_root": self.fixed_root,
            "links": [
                {"name": l.name, "mass": l.mass, "inertia": l.inertia,
                 "length": l.length, "com_offset": l.com_offset}
                for l in self.links
            ],
            "joints": [
                {"name": j.name, "parent": j.parent, "attach": list(j.attach),
                 "mount": j.mount,
                 "limits": [None if not math.isfinite(v) else v for v in j.limits],
                 "kp": j.kp, "kd": j.kd, "torque_limit": j.torque_limit,
                 "continuous": j.continuous}
                for j in self.joints
            ],
            "contact_points": [
                {"link": p.link, "offset": list(p.offset), "is_foot": p.is_foot}
                for p in self.contact_points
            ],
            "end_effectors": [
                {"link": p.link, "offset": list(p.offset)}
                for p in self.end_effectors
            ],
            "rest_pose": list(self.rest_pose),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CharacterModel":
        def lim(v, default):
            return default if v is None else float(v)
        links = [Link(l["name"], float(l["mass"]), float(l["inertia"]),
                      float(l["length"]), float(l["com_offset"])) for l in d["links"]]
        joints = [Joint(j["name"], int(j["parent"]), tuple(j["attach"]),
                        mount=float(j.get("mount", 0.0)),
                        limits=(lim(j["limits"][0], -math.inf), lim(j["limits"][1], math.inf)),
                        kp=float(j["kp"]), kd=float(j["kd"]),
                        torque_limit=float(j["torque_limit"]),
                        continuous=bool(j.get("continuous", False))) for j in d["joints"]]
        contacts = [SitePoint(int(p["link"]), tuple(p["offset"]), bool(p.get("is_foot", False)))
                    for p in d["contact_points"]]
        ees = [SitePoint(int(p["link"]), tuple(p["offset"])) for p in d["end_effectors"]]
        return cls(name=d["name"], links=links, joints=joints, contact_points=contacts,
                   end_effectors=ees, rest_pose=np.asarray(d["rest_pose"], dtype=float),
                   fixed_root=bool(d.get("fixed_root", False)))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path) -> "CharacterModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class PackedModel:
    """CharacterModel flattened into arrays for the simulation core."""
    parent: np.ndarray        # int64 (L,), parent[0] = -1
    attach: np.ndarray        # (L, 2); row 0 unused
    mount: np.ndarray         # (L,); row 0 = 0
    com: np.ndarray           # (L, 2)
    mass: np.ndarray          # (L,)
    inertia: np.ndarray       # (L,)
    anc: np.ndarray           # bool (L, J): joint j on the path to link i
    kp: np.ndarray
    kd: np.ndarray
    tau_lim: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray
    wrap_pd: np.ndarray       # bool (J,)
    cp_link: np.ndarray
    cp_off: np.ndarray
    cp_foot: np.ndarray       # bool (C,)
    ee_link: np.ndarray
    ee_off: np.ndarray
    fixed_root: bool

    @classmethod
    def from_model(cls, m: CharacterModel) -> "PackedModel":
        L, J = m.n_links, m.n_joints
        parent = np.full(L, -1, dtype=np.int64)
        attach = np.zeros((L, 2))
        mount = np.zeros(L)
        for j, joint in enumerate(m.joints):
            parent[j + 1] = joint.parent
            attach[j + 1] = joint.attach
            mount[j + 1] = joint.mount
        anc = np.zeros((L, J), dtype=np.bool_)
        for i in range(1, L):
            k = i
            while k > 0:
                anc[i, k - 1] = True
                k = parent[k]
        big = 1e30  # stands in for +/- inf inside the jit core
        q_lo = np.array([j.limits[0] if math.isfinite(j.limits[0]) and not j.continuous
                         else -big for j in m.joints])
        q_hi = np.array([j.limits[1] if math.isfinite(j.limits[1]) and not j.continuous
                         else big for j in m.joints])
        return cls(
            parent=parent,
            attach=attach,
            mount=mount,
            com=np.array([[l.com_offset, 0.0] for l in m.links]),
            mass=np.array([l.mass for l in m.links]),
            inertia=np.array([l.inertia for l in m.links]),
            anc=anc,
            kp=np.array([j.kp for j in m.joints]),
            kd=np.array([j.kd for j in m.joints]),
            tau_lim=np.array([j.torque_limit for j in m.joints]),
            q_lo=q_lo,
            q_hi=q_hi,
            wrap_pd=np.array([j.continuous for j in m.joints], dtype=np.bool_),
            cp_link=np.array([p.link for p in m.contact_points], dtype=np.int64),
            cp_off=np.array([list(p.offset) for p in m.contact_points]).reshape(-1, 2),
            cp_foot=np.array([p.is_foot for p in m.contact_points], dtype=np.bool_),
            ee_link=np.array([p.link for p in m.end_effectors], dtype=np.int64),
            ee_off=np.array([list(p.offset) for p in m.end_effectors]).reshape(-1, 2),
            fixed_root=m.fixed_root,
        )


# -- built-ins --------------------------------------------------------------

def make_pointmass() -> CharacterModel:
    """A grounded base box with one continuous rotor arm.

    The simplest character that gives the motion prior something to watch:
    the rotor can swing, wave, paddle the ground, or spin like a paddle
    wheel to push the base along. All contacts are feet (no early
    termination surface).
    """
    base_w, base_h = 0.4, 0.2
    base_mass = 2.0
    rotor_len = 0.35
    rotor_mass = 0.5
    links = [
        Link("base", base_mass, base_mass * (base_w**2 + base_h**2) / 12.0, base_w, 0.0),
        Link("rotor", rotor_mass, rotor_mass * rotor_len**2 / 12.0, rotor_len, rotor_len / 2.0),
    ]
    joints = [
        Joint("rotor_hinge", parent=0, attach=(0.0, 0.0),
              kp=30.0, kd=1.5, torque_limit=25.0, continuous=True),
    ]
    hw, hh = base_w / 2.0, base_h / 2.0
    contacts = [
        SitePoint(0, (-hw, -hh), is_foot=True),
        SitePoint(0, (hw, -hh), is_foot=True),
        SitePoint(0, (-hw, hh), is_foot=True),
        SitePoint(0, (hw, hh), is_foot=True),
        SitePoint(1, (rotor_len, 0.0), is_foot=True),
    ]
    ees = [SitePoint(1, (rotor_len, 0.0))]
    rest = np.array([0.0, hh, 0.0, math.pi / 2.0])  # rotor pointing straight up
    return CharacterModel("pointmass", links, joints, contacts, ees, rest_pose=rest)


def make_walker5() -> CharacterModel:
    """Five-link planar biped: torso plus two thigh/shin legs, four joints.

    Standing pose is all-zero joint coordinates with root_rot = pi/2 (torso
    axis up); hip mounts fold the legs back down. Kept light so the penalty
    ground sinks less than 2 mm at rest.
    """
    torso_l, thigh_l, shin_l = 0.5, 0.25, 0.25
    torso_m, thigh_m, shin_m = 3.0, 0.8, 0.5
    links = [
        Link("torso", torso_m, torso_m * torso_l**2 / 12.0, torso_l, torso_l / 2.0),
        Link("thigh_l", thigh_m, thigh_m * thigh_l**2 / 12.0, thigh_l, thigh_l / 2.0),
        Link("shin_l", shin_m, shin_m * shin_l**2 / 12.0, shin_l, shin_l / 2.0),
        Link("thigh_r", thigh_m, thigh_m * thigh_l**2 / 12.0, thigh_l, thigh_l / 2.0),
        Link("shin_r", shin_m, shin_m * shin_l**2 / 12.0, shin_l, shin_l / 2.0),
    ]
    hip = dict(attach=(0.0, 0.0), mount=-math.pi, limits=(-1.2, 1.2),
               kp=60.0, kd=3.0, torque_limit=60.0)
    knee = dict(mount=0.0, limits=(-2.3, 0.0), kp=40.0, kd=2.0, torque_limit=40.0)
    joints = [
        Joint("hip_l", parent=0, **hip),
        Joint("knee_l", parent=1, attach=(thigh_l, 0.0), **knee),
        Joint("hip_r", parent=0, **hip),
        Joint("knee_r", parent=3, attach=(thigh_l, 0.0), **knee),
    ]
    contacts = [
        SitePoint(2, (shin_l, 0.0), is_foot=True),   # left foot
        SitePoint(4, (shin_l, 0.0), is_foot=True),   # right foot
        SitePoint(2, (0.0, 0.0)),                    # left knee
        SitePoint(4, (0.0, 0.0)),                    # right knee
        SitePoint(0, (0.0, 0.0)),                    # hip
        SitePoint(0, (torso_l, 0.0)),                # head
    ]
    ees = [SitePoint(2, (shin_l, 0.0)), SitePoint(4, (shin_l, 0.0))]
    rest = np.array([0.0, thigh_l + shin_l, math.pi / 2.0, 0.0, 0.0, 0.0, 0.0])
    return CharacterModel("walker5", links, joints, contacts, ees, rest_pose=rest)


_BUILTINS = {"pointmass": make_pointmass, "walker5": make_walker5}


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)


def get_character(name_or_path: str) -> CharacterModel:
    """Resolve a built-in character name or a character JSON file path."""
    if name_or_path in _BUILTINS:
        return _BUILTINS[name_or_path]()
    return CharacterModel.load(name_or_path)
