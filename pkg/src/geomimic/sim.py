"""Deterministic synthetic world: hammer families, pinhole projection, demos.

The scene is a hammer-and-nail workspace watched by a fixed eye-to-hand
camera. A hammer category is a perturbed instance of a shared template whose
functional features (strike point, head edge endpoints) carry descriptors near
role prototypes shared across categories; distractor descriptors are uniform.
The nail contributes a top point and a body line whose top marker is offset
from the body axis, as on a real shaft, so no two target features are
interchangeable. Demonstrations interpolate the tool from a random start pose
to a solved goal pose along a smoothstep screw path; tracking is perfect
modulo seeded jitter and dropout, and noise tapers to zero as the
demonstration settles onto the goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import BehindCamera, InfeasibleGoal, PlantFault
from .geometry import ConstraintType, PixelPoint
from .graphs import FeaturePoint, canonical_key_for, spec_for
from .training import DemoVideo

ROLE_STRIKE = "task-relevant-point"
ROLE_EDGE = "task-relevant-line-endpoint"
ROLE_DISTRACTOR = "distractor"
ROLE_NAIL_TOP = "target-point"
ROLE_NAIL_BODY = "target-line-endpoint"


# -- rigid transforms --------------------------------------------------------


def se3_exp(xi: np.ndarray) -> np.ndarray:
    """Exponential of a twist (vx, vy, vz, wx, wy, wz) to a 4x4 transform."""
    xi = np.asarray(xi, dtype=float)
    v, w = xi[:3], xi[3:]
    rot = Rotation.from_rotvec(w)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        V = np.eye(3)
    else:
        K = _hat(w / theta)
        V = (
            np.eye(3)
            + (1.0 - math.cos(theta)) / theta * K
            + (theta - math.sin(theta)) / theta * (K @ K)
        )
    T = np.eye(4)
    T[:3, :3] = rot.as_matrix()
    T[:3, 3] = V @ v
    return T


def se3_log(T: np.ndarray) -> np.ndarray:
    """Twist coordinates of a 4x4 transform; inverse of ``se3_exp``."""
    R = T[:3, :3]
    w = Rotation.from_matrix(R).as_rotvec()
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        Vinv = np.eye(3)
    else:
        K = _hat(w / theta)
        Vinv = (
            np.eye(3)
            - 0.5 * theta * K
            + (1.0 - theta / (2.0 * math.tan(theta / 2.0))) * (K @ K)
        )
    return np.concatenate([Vinv @ T[:3, 3], w])


def _hat(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation matrix taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, dtype=float) / np.linalg.norm(a)
    b = np.asarray(b, dtype=float) / np.linalg.norm(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # pick any axis orthogonal to a
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        axis /= np.linalg.norm(axis)
        return Rotation.from_rotvec(axis * math.pi).as_matrix()
    axis = np.cross(a, b)
    angle = math.atan2(np.linalg.norm(axis), c)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()


def transform_points(T: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points @ T[:3, :3].T + T[:3, 3]


def smoothstep(u: float) -> float:
    return u * u * (3.0 - 2.0 * u)


# -- camera -------------------------------------------------------------------


@dataclass
class Camera:
    """Pinhole camera: x right, y down, z forward in the camera frame."""

    focal: float = 520.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))  # world -> cam
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    near: float = 0.05

    @classmethod
    def look_at(cls, position, target, up=(0.0, 0.0, 1.0), **kwargs) -> "Camera":
        position = np.asarray(position, dtype=float)
        forward = np.asarray(target, dtype=float) - position
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=float))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])  # rows: camera axes in world coords
        return cls(rotation=R, translation=-R @ position, **kwargs)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Perspective projection of (N, 3) world points to (N, 2) pixels."""
        cam = points @ self.rotation.T + self.translation
        if (cam[:, 2] <= self.near).any():
            raise BehindCamera(
                f"{int((cam[:, 2] <= self.near).sum())} point(s) at or behind the near plane"
            )
        return np.stack(
            [
                self.focal * cam[:, 0] / cam[:, 2] + self.cx,
                self.focal * cam[:, 1] / cam[:, 2] + self.cy,
            ],
            axis=1,
        )


# -- objects and scenes ---------------------------------------------------------


@dataclass
class HammerTemplate:
    """Shared shape ranges and descriptor prototypes for one hammer family."""

    descriptor_dim: int = 16
    prototype_seed: int = 7
    descriptor_noise: float = 0.06
    distractors: Optional[int] = None  # None: sample 5..15 per category
    handle_length: tuple = (0.10, 0.18)
    edge_offset: tuple = (0.012, 0.03)  # head face offset from the strike axis
    edge_span: tuple = (0.07, 0.10)

    def role_prototypes(self) -> dict:
        rng = np.random.default_rng(np.random.SeedSequence([self.prototype_seed, 1]))
        roles = [ROLE_STRIKE, ROLE_EDGE, ROLE_NAIL_TOP, ROLE_NAIL_BODY]
        protos = {}
        for role in roles:
            vec = rng.normal(size=self.descriptor_dim)
            protos[role] = vec / np.linalg.norm(vec)
        return protos

    def perturbed_descriptor(self, role: str, rng) -> np.ndarray:
        proto = self.role_prototypes()[role]
        vec = proto + self.descriptor_noise * rng.normal(size=self.descriptor_dim)
        return vec / np.linalg.norm(vec)


@dataclass
class RigidObjectModel:
    """A tool as body-frame points with descriptors and functional role tags."""

    category_id: str
    points: np.ndarray  # (n, 3) object frame
    descriptors: np.ndarray  # (n, D)
    roles: list

    def __post_init__(self):
        if sum(r == ROLE_EDGE for r in self.roles) < 2:
            raise ValueError("tool needs >= 2 task-relevant line endpoints")
        if sum(r == ROLE_STRIKE for r in self.roles) < 1:
            raise ValueError("tool needs >= 1 task-relevant point")

    def indices_of(self, role: str) -> list:
        return [i for i, r in enumerate(self.roles) if r == role]


def generate_category(seed: int, template: HammerTemplate, category_id: Optional[str] = None) -> RigidObjectModel:
    """Sample one hammer category from the template; same seed, same model."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    handle = rng.uniform(*template.handle_length)
    e_x = rng.uniform(*template.edge_offset)
    z0 = rng.uniform(0.004, 0.012)
    span = rng.uniform(*template.edge_span)

    points = [np.zeros(3)]  # strike point at the body origin
    roles = [ROLE_STRIKE]
    points += [np.array([e_x, 0.0, z0]), np.array([e_x, 0.0, z0 + span])]
    roles += [ROLE_EDGE, ROLE_EDGE]

    n_distract = (
        int(rng.integers(5, 16)) if template.distractors is None else template.distractors
    )
    for _ in range(n_distract):
        points.append(
            np.array(
                [
                    rng.uniform(0.0, handle),
                    rng.uniform(-0.02, 0.02),
                    rng.uniform(0.0, 0.10),
                ]
            )
        )
        roles.append(ROLE_DISTRACTOR)

    descriptors = []
    for role in roles:
        if role == ROLE_DISTRACTOR:
            vec = rng.normal(size=template.descriptor_dim)
            descriptors.append(vec / np.linalg.norm(vec))
        else:
            descriptors.append(template.perturbed_descriptor(role, rng))

    return RigidObjectModel(
        category_id=category_id if category_id is not None else f"cat{seed}",
        points=np.stack(points),
        descriptors=np.stack(descriptors),
        roles=roles,
    )


@dataclass
class GoalSpec:
    """Ground-truth bindings: ids that must coincide (PP) and be parallel (LL)."""

    pp_ids: tuple  # (tool strike id, nail top id)
    ll_ids: tuple  # ((edge end ids), (nail body end ids))

    def canonical_keys(self) -> dict:
        return {
            ConstraintType.POINT_TO_POINT: canonical_key_for(
                spec_for(ConstraintType.POINT_TO_POINT), self.pp_ids
            ),
            ConstraintType.LINE_TO_LINE: canonical_key_for(
                spec_for(ConstraintType.LINE_TO_LINE), self.ll_ids[0] + self.ll_ids[1]
            ),
        }


# the nail: a vertical shaft at the world origin; the top marker sits at the
# head centre, offset from the body-edge line so the three target features are
# never collinear
NAIL_TOP = np.array([0.0, 0.0, 0.122])
NAIL_BODY = np.array([[-0.008, 0.0, 0.105], [-0.008, 0.0, 0.018]])


@dataclass
class Scene:
    """Tool + static nail target + camera + noise model."""

    tool: RigidObjectModel
    template: HammerTemplate
    camera: Camera
    pixel_jitter: float = 0.5
    dropout: float = 0.02
    seed: int = 0

    target_points: np.ndarray = field(default_factory=lambda: np.vstack([NAIL_TOP, NAIL_BODY]))
    target_roles: tuple = (ROLE_NAIL_TOP, ROLE_NAIL_BODY, ROLE_NAIL_BODY)
    target_descriptors: np.ndarray = None

    def __post_init__(self):
        if self.target_descriptors is None:
            # the nail is the same physical object in every scene: descriptors
            # derive from the template prototypes with a template-seeded jitter
            rng = np.random.default_rng(
                np.random.SeedSequence([self.template.prototype_seed, 3])
            )
            self.target_descriptors = np.stack(
                [self.template.perturbed_descriptor(role, rng) for role in self.target_roles]
            )

    @property
    def n_tool(self) -> int:
        return len(self.tool.points)

    def goal_spec(self) -> GoalSpec:
        strike = self.tool.indices_of(ROLE_STRIKE)[0]
        edge = self.tool.indices_of(ROLE_EDGE)[:2]
        top = self.n_tool + self.target_roles.index(ROLE_NAIL_TOP)
        body = tuple(
            self.n_tool + i for i, r in enumerate(self.target_roles) if r == ROLE_NAIL_BODY
        )
        return GoalSpec(pp_ids=(strike, top), ll_ids=(tuple(edge), body))

    def goal_pose(self, yaw: float = 0.0) -> np.ndarray:
        """Pose putting the strike point on the nail top with the edge vertical."""
        strike = self.tool.points[self.tool.indices_of(ROLE_STRIKE)[0]]
        e1, e2 = (self.tool.points[i] for i in self.tool.indices_of(ROLE_EDGE)[:2])
        edge_dir = (e2 - e1) / np.linalg.norm(e2 - e1)
        R = Rotation.from_rotvec([0.0, 0.0, yaw]).as_matrix() @ rotation_between(
            edge_dir, np.array([0.0, 0.0, 1.0])
        )
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = NAIL_TOP - R @ strike
        return T


JITTER_PERIOD = 16  # frames between independent tracking-drift keyframes


def _tracking_jitter(scene: Scene, n_points: int, frame_key: int) -> np.ndarray:
    """Temporally smooth Gaussian tracking error, unit marginal deviation.

    Feature localization error drifts slowly (a tracker locks slightly off a
    corner and stays there) rather than jumping independently every frame:
    Gaussian keyframes every JITTER_PERIOD frames are interpolated, with the
    blend renormalized so the marginal stays exactly unit-variance Gaussian.
    A pure function of (scene seed, frame_key), so replaying a key replays
    the noise bitwise.
    """
    block, w = divmod(int(frame_key), JITTER_PERIOD)
    w = w / JITTER_PERIOD

    def keyframe(b):
        rng = np.random.default_rng(np.random.SeedSequence([scene.seed, 7001, b]))
        return rng.normal(size=(n_points, 2))

    blend = (1.0 - w) * keyframe(block) + w * keyframe(block + 1)
    return blend / math.sqrt((1.0 - w) ** 2 + w**2)


def render_frame(scene: Scene, pose: np.ndarray, frame_key: int, noise_scale: float = 1.0):
    """Project all visible features at a tool pose into FeaturePoints.

    Noise is a pure function of (scene seed, frame_key): rendering the same
    key at the same pose reproduces the frame bitwise. ``noise_scale`` scales
    jitter and dropout together.
    """
    world = np.vstack(
        [transform_points(pose, scene.tool.points), scene.target_points]
    )
    pixels = scene.camera.project(world)
    descriptors = np.vstack([scene.tool.descriptors, scene.target_descriptors])
    segments = ["tool"] * scene.n_tool + ["target"] * len(scene.target_points)

    jitter = scene.pixel_jitter * noise_scale * _tracking_jitter(scene, len(pixels), frame_key)
    drop_rng = np.random.default_rng(np.random.SeedSequence([scene.seed, 7003, int(frame_key)]))
    dropped = drop_rng.uniform(size=len(pixels)) < scene.dropout * noise_scale

    features = []
    for i in range(len(pixels)):
        if dropped[i]:
            continue
        u, v = pixels[i] + jitter[i]
        features.append(
            FeaturePoint(
                id=i,
                descriptor=descriptors[i].copy(),
                coords=PixelPoint(float(u), float(v)),
                segment=segments[i],
            )
        )
    return features


def sample_start_pose(scene: Scene, goal: np.ndarray, rng, require_clean_path: bool = True) -> np.ndarray:
    """A random grasp/start pose: translated and rotated off the goal.

    Keeps the tool in view. With ``require_clean_path`` (used for
    demonstrations) the start is also rejected unless the screw path toward
    the goal shrinks the ground-truth errors monotonically: a rotating
    direction's angle to the nail is a sinusoid segment and can overshoot for
    unlucky rotation axes, which no demonstrator would show. Servo trials
    sample with the filter off; the controller has to cope with any grasp.
    """
    for _ in range(256):
        t_off = rng.uniform(-1.0, 1.0, size=3) * np.array([0.12, 0.07, 0.10])
        t_off[2] = abs(t_off[2])  # approach from above the nail
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(math.radians(15.0), math.radians(40.0))
        T = np.eye(4)
        T[:3, :3] = Rotation.from_rotvec(axis * angle).as_matrix() @ goal[:3, :3]
        T[:3, 3] = goal[:3, 3] + t_off
        if require_clean_path:
            if _screw_path_is_clean(scene, T, goal):
                return T
            continue
        try:
            scene.camera.project(
                np.vstack([transform_points(T, scene.tool.points), scene.target_points])
            )
        except BehindCamera:
            continue
        return T
    raise InfeasibleGoal("could not sample a start pose with a clean path in view")


def _screw_path_is_clean(scene: Scene, start: np.ndarray, goal: np.ndarray,
                         samples: int = 48) -> bool:
    """True if the noise-free screw path stays in view with monotone errors."""
    truth = scene.goal_spec()
    s_ids = truth.pp_ids
    l_ids = truth.ll_ids[0] + truth.ll_ids[1]
    screw = se3_log(goal @ np.linalg.inv(start))
    pp, ll = [], []
    for s in np.linspace(0.0, 1.0, samples):
        pose = se3_exp(s * screw) @ start
        try:
            pixels = scene.camera.project(
                np.vstack([transform_points(pose, scene.tool.points), scene.target_points])
            )
        except BehindCamera:
            return False
        pp.append(np.linalg.norm(pixels[s_ids[1]] - pixels[s_ids[0]]))
        lines, ok = _batch_lines_of(pixels, l_ids)
        if not ok:
            return False
        ll.append(abs(lines[0][0] * lines[1][1] - lines[0][1] * lines[1][0]))
    return bool(
        (np.diff(pp) < 1e-9).all() and (np.diff(ll) < 1e-9).all()
    )


def _batch_lines_of(pixels: np.ndarray, ids):
    from .geometry import _batch_lines

    pts = pixels[list(ids)]
    lines, ok = _batch_lines(pts[[0, 2]], pts[[1, 3]])
    return lines, bool(ok.all())


def generate_demo(
    scene: Scene,
    n_frames: int,
    seed: int,
    video_id: str = "demo",
    pose_noise_pos: float = 0.002,
    pose_noise_rot: float = math.radians(0.5),
    max_attempts: int = 16,
) -> DemoVideo:
    """One demonstration video from a random start to the solved goal pose.

    The path is a smoothstep screw interpolation. Pose noise and tracking
    noise scale with path speed (a demonstrator holds steady at the grasp and
    at the goal), so the final frame meets the goal constraints exactly up to
    residual projection effects. Start poses whose smoothed ground-truth error
    series would not decrease monotonically are resampled, mirroring how a
    wobbly human take would be re-recorded.
    """
    if n_frames < 2:
        raise ValueError("a demo needs at least two frames")
    rng = np.random.default_rng(np.random.SeedSequence([scene.seed, 7002, int(seed)]))
    goal = scene.goal_pose(yaw=rng.uniform(-math.pi, math.pi))
    try:
        scene.camera.project(
            np.vstack([transform_points(goal, scene.tool.points), scene.target_points])
        )
    except BehindCamera as exc:
        raise InfeasibleGoal(f"goal pose leaves the camera view: {exc}") from exc

    truth = scene.goal_spec().canonical_keys()
    best = None
    wiggle_rho = 0.985  # hand wobble drifts over a couple of seconds
    for attempt in range(max_attempts):
        if attempt:
            goal = scene.goal_pose(yaw=rng.uniform(-math.pi, math.pi))
        start = sample_start_pose(scene, goal, rng)
        screw = se3_log(goal @ np.linalg.inv(start))
        frames = []
        wiggle_state = rng.normal(size=6)
        scale = np.concatenate([np.full(3, pose_noise_pos), np.full(3, pose_noise_rot)])
        for t in range(n_frames):
            u = t / (n_frames - 1)
            s = smoothstep(u)
            nominal = se3_exp(s * screw) @ start
            # noise envelope ~ speed^2: steady hands at both endpoints, and an
            # envelope whose slope also vanishes there so ramping noise can
            # never outrun the path's own progress
            taper = (4.0 * u * (1.0 - u)) ** 2
            wiggle_state = wiggle_rho * wiggle_state + math.sqrt(
                1.0 - wiggle_rho**2
            ) * rng.normal(size=6)
            pose = nominal @ se3_exp(wiggle_state * scale * taper)
            frames.append(
                render_frame(
                    scene,
                    pose,
                    frame_key=(32 * seed + attempt) * 10_000 + t,
                    noise_scale=taper,
                )
            )
        violations = _progress_violations(frames, truth)
        if best is None or violations < best[0]:
            best = (violations, frames)
        if violations == 0:
            break

    return DemoVideo(
        video_id=video_id,
        category_id=scene.tool.category_id,
        frames=best[1],
        frame_indices=list(range(n_frames)),
        ground_truth=truth,
    )


def _progress_violations(frames, truth, window: int = 5) -> int:
    """Count increases in the smoothed ground-truth error series of a take."""
    from .geometry import line_from_points, ll_error

    series = {ctype: [] for ctype in truth}
    for frame in frames:
        coords = {f.id: f.coords for f in frame}
        for ctype, key in truth.items():
            if any(i not in coords for i in key):
                continue
            if ctype is ConstraintType.POINT_TO_POINT:
                a, b = coords[key[0]], coords[key[1]]
                series[ctype].append(math.hypot(b.u - a.u, b.v - a.v))
            else:
                l1 = line_from_points(coords[key[0]], coords[key[1]])
                l2 = line_from_points(coords[key[2]], coords[key[3]])
                series[ctype].append(abs(ll_error(l1, l2)[0]))
    total = 0
    for values in series.values():
        arr = np.asarray(values)
        if len(arr) <= window:
            continue
        smoothed = np.convolve(arr, np.ones(window) / window, mode="valid")
        total += int(np.sum(np.diff(smoothed) >= 0))
    return total


# -- plants ----------------------------------------------------------------------


class TwistPlant:
    """Direct 6-DOF control of the tool pose; commands integrate as body twists."""

    def __init__(self, scene: Scene, start_pose: np.ndarray, max_step: float = 0.15,
                 workspace_halfwidth: float = 0.6):
        self.scene = scene
        self.pose = np.array(start_pose, dtype=float)
        self.n_joints = 6
        self.step_count = 0
        self.max_step = max_step
        self.workspace_halfwidth = workspace_halfwidth
        self.clamped = False

    def observe(self):
        return render_frame(self.scene, self.pose, frame_key=self.step_count)

    def act(self, dq):
        dq = np.asarray(dq, dtype=float)
        if dq.shape != (self.n_joints,) or not np.isfinite(dq).all():
            raise PlantFault(f"bad command {dq!r}")
        self.clamped = bool((np.abs(dq) > self.max_step).any())
        dq = np.clip(dq, -self.max_step, self.max_step)
        self.pose = self.pose @ se3_exp(dq)
        centre = self.pose[:3, 3]
        clipped = np.clip(centre, -self.workspace_halfwidth, self.workspace_halfwidth)
        if not np.array_equal(clipped, centre):
            self.clamped = True
            self.pose[:3, 3] = clipped
        self.step_count += 1

    def snapshot(self):
        return (self.pose.copy(), self.step_count, self.clamped)

    def restore(self, state):
        self.pose, self.step_count, self.clamped = state[0].copy(), state[1], state[2]


class SerialArmPlant:
    """A 4-DOF serial arm (base yaw + three pitch joints) holding the tool."""

    def __init__(self, scene: Scene, q0=None, base=(-0.32, 0.0, 0.20),
                 links=(0.16, 0.14, 0.10), max_step: float = 0.15):
        self.scene = scene
        self.base = np.asarray(base, dtype=float)
        self.links = tuple(links)
        self.n_joints = 4
        self.q = np.zeros(4) if q0 is None else np.array(q0, dtype=float)
        self.step_count = 0
        self.max_step = max_step
        self.clamped = False

    def forward_kinematics(self, q) -> np.ndarray:
        T = np.eye(4)
        T[:3, 3] = self.base
        T = T @ _rot_z(q[0])
        for angle, length in zip(q[1:], self.links):
            T = T @ _rot_y(angle)
            step = np.eye(4)
            step[0, 3] = length
            T = T @ step
        return T

    @property
    def pose(self) -> np.ndarray:
        return self.forward_kinematics(self.q)

    def observe(self):
        return render_frame(self.scene, self.pose, frame_key=self.step_count)

    def act(self, dq):
        dq = np.asarray(dq, dtype=float)
        if dq.shape != (self.n_joints,) or not np.isfinite(dq).all():
            raise PlantFault(f"bad command {dq!r}")
        self.clamped = bool((np.abs(dq) > self.max_step).any())
        self.q = self.q + np.clip(dq, -self.max_step, self.max_step)
        limit = math.pi
        clipped = np.clip(self.q, -limit, limit)
        if not np.array_equal(clipped, self.q):
            self.clamped = True
            self.q = clipped
        self.step_count += 1

    def snapshot(self):
        return (self.q.copy(), self.step_count, self.clamped)

    def restore(self, state):
        self.q, self.step_count, self.clamped = state[0].copy(), state[1], state[2]


def _rot_z(angle):
    T = np.eye(4)
    T[:3, :3] = Rotation.from_rotvec([0, 0, angle]).as_matrix()
    return T


def _rot_y(angle):
    T = np.eye(4)
    T[:3, :3] = Rotation.from_rotvec([0, angle, 0]).as_matrix()
    return T


def make_scene(
    category_seed: int,
    template: Optional[HammerTemplate] = None,
    scene_seed: int = 0,
    category_id: Optional[str] = None,
    pixel_jitter: float = 0.5,
    dropout: float = 0.02,
    camera: Optional[Camera] = None,
) -> Scene:
    """Assemble the standard hammer-and-nail scene for one category."""
    template = template if template is not None else HammerTemplate()
    tool = generate_category(category_seed, template, category_id=category_id)
    camera = camera if camera is not None else default_camera()
    return Scene(
        tool=tool,
        template=template,
        camera=camera,
        pixel_jitter=pixel_jitter,
        dropout=dropout,
        seed=scene_seed,
    )


def default_camera() -> Camera:
    return Camera.look_at(position=(0.0, -0.85, 0.25), target=(0.0, 0.0, 0.10), focal=1000.0)
