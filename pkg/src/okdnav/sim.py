"""Deterministic 2D navigation world with a 4-camera ray-cast sensor rig.

The world is a square arena with circular obstacles. Geometry (layout) and
appearance (skin) are split so the same scene can be rendered under different
color assignments: per-ray depth depends only on geometry, per-ray color
depends on geometry and skin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    PlacementInfeasibleError,
    PolicyFaultError,
    RangeError,
    RenderFromCollisionError,
)

# Number of distinct appearance ids layouts draw from; every generated skin
# covers all of them.
N_APPEARANCE_IDS = 8

DENSITY_MIN = 0.05
DENSITY_MAX = 0.20


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def rotate(vx: float, vy: float, psi: float) -> tuple[float, float]:
    """Rotate a 2D vector by psi (counterclockwise)."""
    c, s = math.cos(psi), math.sin(psi)
    return c * vx - s * vy, s * vx + c * vy


@dataclass(frozen=True)
class Pose:
    """Planar pose; heading psi is kept wrapped to (-pi, pi]."""

    x: float
    y: float
    psi: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.psi)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "psi", wrap_angle(self.psi))


@dataclass(frozen=True)
class Action:
    """Velocity command in the robot's local frame."""

    vx: float
    vy: float
    omega: float

    def clamped(self, v_max: float, omega_max: float) -> "Action":
        return Action(
            min(max(self.vx, -v_max), v_max),
            min(max(self.vy, -v_max), v_max),
            min(max(self.omega, -omega_max), omega_max),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.omega], dtype=np.float64)


@dataclass(frozen=True)
class ObstacleSpec:
    center: tuple[float, float]
    radius: float
    appearance_id: int


@dataclass(frozen=True)
class GoalSpec:
    """Static point goal or a target moving on a circle at constant angular speed."""

    kind: str = "static"  # "static" | "circular"
    point: tuple[float, float] = (0.0, 0.0)
    center: tuple[float, float] = (0.0, 0.0)
    orbit_radius: float = 1.0
    angular_speed: float = 0.5

    def position(self, t: float) -> tuple[float, float]:
        if self.kind == "static":
            return self.point
        a = self.angular_speed * t
        return (
            self.center[0] + self.orbit_radius * math.cos(a),
            self.center[1] + self.orbit_radius * math.sin(a),
        )


@dataclass(frozen=True)
class SceneLayout:
    arena_half_extent: float
    obstacles: tuple[ObstacleSpec, ...]
    start: Pose
    goal: GoalSpec
    density: float

    def obstacle_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(centers (K,2), radii (K,), appearance ids (K,)) as arrays."""
        if not self.obstacles:
            return (
                np.zeros((0, 2), dtype=np.float64),
                np.zeros((0,), dtype=np.float64),
                np.zeros((0,), dtype=np.int64),
            )
        centers = np.array([o.center for o in self.obstacles], dtype=np.float64)
        radii = np.array([o.radius for o in self.obstacles], dtype=np.float64)
        ids = np.array([o.appearance_id for o in self.obstacles], dtype=np.int64)
        return centers, radii, ids


@dataclass(frozen=True)
class AppearanceSkin:
    """Cosmetic color assignment over a layout: palette indexed by appearance id."""

    palette: np.ndarray  # (n_ids, 3) in [0, 1]
    wall_color: np.ndarray  # (3,)
    background_color: np.ndarray  # (3,)


@dataclass(frozen=True)
class CameraRig:
    camera_count: int = 4
    yaw_offsets: tuple[float, ...] = (0.0, math.pi / 2.0, math.pi, 3.0 * math.pi / 2.0)
    fov: float = math.radians(110.0)
    rays_per_camera: int = 64

    def ray_angles(self) -> np.ndarray:
        """Per-camera ray angles relative to the camera axis, evenly spaced over the fov."""
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, self.rays_per_camera)


@dataclass(frozen=True)
class Observation:
    """Per-camera ray arrays: depth (4, W) in meters, rgb (4, 3, W) shaded colors."""

    depth: np.ndarray
    rgb: np.ndarray


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 30.0
    horizon: int = 600
    robot_radius: float = 0.15
    v_max: float = 1.0
    omega_max: float = 2.0
    d_max: float = 6.0
    d_shade: float = 2.0
    r_clear: float = 0.3
    success_dist: float = 0.3
    depth_noise: float = 0.0


@dataclass(frozen=True)
class StepTuple:
    pose: Pose
    obs: Observation
    goal_local: tuple[float, float]
    expert_action: Action
    executed_action: Action
    t: int


@dataclass
class EpisodeRecord:
    tuples: list[StepTuple] = field(default_factory=list)
    outcome: str = "timeout"  # "success" | "collision" | "timeout"
    moving_distance: float = 0.0


def seeded_rng(*keys) -> np.random.Generator:
    """Deterministic generator derived from a tuple of ints/strings."""
    material = []
    for k in keys:
        if isinstance(k, str):
            material.append(int.from_bytes(k.encode("utf-8"), "little") % (2**63))
        else:
            material.append(int(k) % (2**63))
    return np.random.default_rng(np.random.SeedSequence(material))


def make_skin(seed: int, n_ids: int = N_APPEARANCE_IDS) -> AppearanceSkin:
    """Random appearance skin covering `n_ids` appearance ids."""
    rng = seeded_rng(seed, "skin")
    palette = rng.uniform(0.1, 0.95, size=(n_ids, 3))
    wall = rng.uniform(0.1, 0.95, size=3)
    background = rng.uniform(0.05, 0.5, size=3)
    return AppearanceSkin(palette=palette, wall_color=wall, background_color=background)


def _clearance(point: tuple[float, float], centers: np.ndarray, radii: np.ndarray) -> float:
    """Distance from a point to the nearest obstacle surface (inf when no obstacles)."""
    if centers.shape[0] == 0:
        return math.inf
    d = np.hypot(centers[:, 0] - point[0], centers[:, 1] - point[1]) - radii
    return float(d.min())


def sample_clear_point(
    rng: np.random.Generator,
    layout_half: float,
    centers: np.ndarray,
    radii: np.ndarray,
    clearance: float,
    attempts: int = 2000,
) -> tuple[float, float]:
    """Sample a point keeping `clearance` from every obstacle surface and from the walls."""
    lim = layout_half - clearance
    for _ in range(attempts):
        p = (float(rng.uniform(-lim, lim)), float(rng.uniform(-lim, lim)))
        if _clearance(p, centers, radii) >= clearance:
            return p
    raise PlacementInfeasibleError("could not sample a clear point within the attempt budget")


# Scene sampling constants: wall margin for obstacle placement, minimum surface
# gap between obstacles (comfortably above robot diameter so corridors stay
# passable), start/goal placement clearance and minimum start-goal separation.
_WALL_MARGIN = 0.05
_OBSTACLE_GAP = 0.55
_ENDPOINT_CLEARANCE = 0.5
_MIN_START_GOAL_DIST = 2.0


def generate_scene(
    seed: int,
    density_target: float,
    obstacle_count_range: tuple[int, int] = (5, 9),
    *,
    arena_half_extent: float = 2.0,
    goal_kind: str = "static",
    orbit_radius: float = 1.0,
    angular_speed: float = 0.5,
    r_clear: float = 0.3,
) -> SceneLayout:
    """Sample a random scene at an exact obstacle density.

    Radii are drawn around the mean radius implied by the density target and the
    obstacle count, then rescaled so the total obstacle area hits the target
    exactly. Placement is rejection-sampled with non-overlap and wall margins;
    start and goal keep a clearance of at least ``r_clear`` (sampling uses a
    wider margin so goals stay reachable by a finite-size robot).
    """
    if not (DENSITY_MIN <= density_target <= DENSITY_MAX):
        raise RangeError(
            f"density_target {density_target} outside [{DENSITY_MIN}, {DENSITY_MAX}]"
        )
    if obstacle_count_range[0] < 1 or obstacle_count_range[1] < obstacle_count_range[0]:
        raise RangeError(f"bad obstacle_count_range {obstacle_count_range}")
    if goal_kind not in ("static", "circular"):
        raise RangeError(f"unknown goal kind {goal_kind!r}")

    rng = seeded_rng(seed, "scene")
    half = arena_half_extent
    arena_area = (2.0 * half) ** 2
    target_area = density_target * arena_area
    endpoint_clear = max(r_clear, _ENDPOINT_CLEARANCE)

    for _restart in range(200):
        n = int(rng.integers(obstacle_count_range[0], obstacle_count_range[1] + 1))
        u = rng.uniform(0.75, 1.25, size=n)
        u *= math.sqrt(n / float(np.sum(u * u)))
        mean_r = math.sqrt(target_area / (n * math.pi))
        radii = mean_r * u
        if radii.min() < 0.08 or radii.max() > half * 0.45:
            continue

        centers: list[tuple[float, float]] = []
        ok = True
        for r in radii:
            lim = half - r - _WALL_MARGIN
            if lim <= 0:
                ok = False
                break
            placed = False
            for _ in range(300):
                c = (float(rng.uniform(-lim, lim)), float(rng.uniform(-lim, lim)))
                if all(
                    math.hypot(c[0] - pc[0], c[1] - pc[1]) >= r + pr + _OBSTACLE_GAP
                    for pc, pr in zip(centers, radii)
                ):
                    centers.append(c)
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if not ok:
            continue

        carr = np.array(centers, dtype=np.float64)
        rarr = radii
        try:
            start_xy = sample_clear_point(rng, half, carr, rarr, endpoint_clear, attempts=500)
            goal_xy = None
            for _ in range(500):
                cand = sample_clear_point(rng, half, carr, rarr, endpoint_clear, attempts=500)
                if math.hypot(cand[0] - start_xy[0], cand[1] - start_xy[1]) >= _MIN_START_GOAL_DIST:
                    if goal_kind == "circular" and not _orbit_clear(
                        cand, orbit_radius, carr, rarr, half, r_clear
                    ):
                        continue
                    goal_xy = cand
                    break
            if goal_xy is None:
                continue
        except PlacementInfeasibleError:
            continue

        psi0 = float(rng.uniform(-math.pi, math.pi))
        if goal_kind == "static":
            goal = GoalSpec(kind="static", point=goal_xy)
        else:
            goal = GoalSpec(
                kind="circular",
                center=goal_xy,
                orbit_radius=orbit_radius,
                angular_speed=angular_speed,
            )
        obstacles = tuple(
            ObstacleSpec(
                center=(float(c[0]), float(c[1])),
                radius=float(r),
                appearance_id=int(rng.integers(0, N_APPEARANCE_IDS)),
            )
            for c, r in zip(centers, radii)
        )
        density = float(np.sum(np.pi * rarr * rarr) / arena_area)
        return SceneLayout(
            arena_half_extent=half,
            obstacles=obstacles,
            start=Pose(start_xy[0], start_xy[1], psi0),
            goal=goal,
            density=density,
        )

    raise PlacementInfeasibleError(
        f"scene sampling failed after 200 restarts (seed={seed}, density={density_target})"
    )


def _orbit_clear(
    center: tuple[float, float],
    orbit_radius: float,
    centers: np.ndarray,
    radii: np.ndarray,
    half: float,
    r_clear: float,
) -> bool:
    """True when every point of a circular goal orbit keeps r_clear clearance."""
    if abs(center[0]) + orbit_radius > half - r_clear:
        return False
    if abs(center[1]) + orbit_radius > half - r_clear:
        return False
    if centers.shape[0] == 0:
        return True
    d = np.hypot(centers[:, 0] - center[0], centers[:, 1] - center[1])
    return bool(np.all(np.abs(d - orbit_radius) - radii >= r_clear))


def point_in_collision(
    x: float,
    y: float,
    layout: SceneLayout,
    inflation: float,
) -> bool:
    """Point-vs-world test: inside any obstacle inflated by `inflation`, or outside
    the arena deflated by `inflation`."""
    half = layout.arena_half_extent - inflation
    if abs(x) > half or abs(y) > half:
        return True
    centers, radii, _ = layout.obstacle_arrays()
    if centers.shape[0] == 0:
        return False
    d2 = (centers[:, 0] - x) ** 2 + (centers[:, 1] - y) ** 2
    return bool(np.any(d2 <= (radii + inflation) ** 2))


def raycast(
    layout: SceneLayout,
    skin: AppearanceSkin,
    pose: Pose,
    rig: CameraRig,
    cfg: SimConfig = SimConfig(),
    rng: np.random.Generator | None = None,
) -> Observation:
    """Render depth and shaded color rays from a pose.

    Depth along each ray is the analytic distance to the nearest circle or wall
    intersection, clamped to d_max. Color is the hit surface's palette entry
    scaled by 1 / (1 + depth / d_shade); depth never depends on the skin.
    When cfg.depth_noise > 0 and an rng is given, the returned depth (not the
    color shading) is perturbed multiplicatively.
    """
    if point_in_collision(pose.x, pose.y, layout, 0.0):
        raise RenderFromCollisionError(f"cannot render from ({pose.x:.3f}, {pose.y:.3f})")
    centers, radii, ids = layout.obstacle_arrays()

    base = rig.ray_angles()
    angles = (pose.psi + np.asarray(rig.yaw_offsets)[:, None] + base[None, :]).reshape(-1)
    n_rays = angles.shape[0]
    dirx = np.cos(angles)
    diry = np.sin(angles)

    # Walls of the square |x| = half, |y| = half: smallest positive ray parameter.
    half = layout.arena_half_extent
    t_wall = np.full(n_rays, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for comp, d, o in (("x", dirx, pose.x), ("y", diry, pose.y)):
            for wall in (half, -half):
                t = (wall - o) / d
                t = np.where((t > 0) & np.isfinite(t), t, np.inf)
                t_wall = np.minimum(t_wall, t)

    # Circles: solve |o + t d - c|^2 = r^2 for each (ray, obstacle) pair.
    if centers.shape[0] > 0:
        ox = centers[:, 0] - pose.x  # (K,)
        oy = centers[:, 1] - pose.y
        m = dirx[:, None] * ox[None, :] + diry[:, None] * oy[None, :]  # (R, K)
        c2 = (ox * ox + oy * oy)[None, :]
        disc = m * m - (c2 - (radii * radii)[None, :])
        hit = disc >= 0.0
        sqrt_disc = np.sqrt(np.where(hit, disc, 0.0))
        t_near = m - sqrt_disc
        t_near = np.where(hit & (t_near > 0.0), t_near, np.inf)
        k_best = np.argmin(t_near, axis=1)
        t_obs = t_near[np.arange(n_rays), k_best]
    else:
        k_best = np.zeros(n_rays, dtype=np.int64)
        t_obs = np.full(n_rays, np.inf)

    obstacle_hit = t_obs < t_wall
    depth = np.where(obstacle_hit, t_obs, t_wall)
    beyond = depth > cfg.d_max

    colors = np.where(
        obstacle_hit[:, None],
        skin.palette[ids[k_best]] if centers.shape[0] > 0 else skin.wall_color[None, :],
        skin.wall_color[None, :],
    )
    colors = np.where(beyond[:, None], skin.background_color[None, :], colors)
    depth = np.minimum(depth, cfg.d_max)

    shade = 1.0 / (1.0 + depth / cfg.d_shade)
    rgb = (colors * shade[:, None]).T.reshape(3, rig.camera_count, rig.rays_per_camera)
    rgb = np.ascontiguousarray(np.transpose(rgb, (1, 0, 2)))
    depth = depth.reshape(rig.camera_count, rig.rays_per_camera)

    if cfg.depth_noise > 0.0 and rng is not None:
        eta = rng.uniform(-1.0, 1.0, size=depth.shape)
        depth = np.clip(depth * (1.0 + cfg.depth_noise * eta), 1e-9, cfg.d_max)

    return Observation(depth=depth, rgb=rgb)


def step_dynamics(
    pose: Pose,
    action: Action,
    dt: float,
    layout: SceneLayout,
    robot_radius: float,
) -> tuple[Pose, bool]:
    """Euler-integrate a local-frame velocity command; report collision at the new pose."""
    if dt <= 0:
        raise RangeError(f"dt must be positive, got {dt}")
    wx, wy = rotate(action.vx, action.vy, pose.psi)
    nx = pose.x + wx * dt
    ny = pose.y + wy * dt
    npsi = wrap_angle(pose.psi + action.omega * dt)
    collided = point_in_collision(nx, ny, layout, robot_radius)
    return Pose(nx, ny, npsi), collided


def goal_local(pose: Pose, goal: GoalSpec, t: float) -> tuple[float, float]:
    """World goal position at time t expressed in the robot's local frame."""
    gx, gy = goal.position(t)
    lx, ly = rotate(gx - pose.x, gy - pose.y, -pose.psi)
    return lx, ly


def reward(
    distance_to_goal: float,
    hit_obstacle: bool,
    hit_boundary: bool,
    alpha: float = 1.0,
) -> float:
    """Per-step score: -alpha*|d| with a -10 penalty for each kind of hit."""
    if distance_to_goal < 0:
        raise RangeError("distance_to_goal must be >= 0")
    r = -alpha * abs(distance_to_goal)
    if hit_obstacle:
        r -= 10.0
    if hit_boundary:
        r -= 10.0
    return r


def _classify_hit(x: float, y: float, layout: SceneLayout, robot_radius: float) -> tuple[bool, bool]:
    """(hit_obstacle, hit_boundary) for a post-step position."""
    half = layout.arena_half_extent - robot_radius
    hit_boundary = abs(x) > half or abs(y) > half
    centers, radii, _ = layout.obstacle_arrays()
    hit_obstacle = False
    if centers.shape[0] > 0:
        d2 = (centers[:, 0] - x) ** 2 + (centers[:, 1] - y) ** 2
        hit_obstacle = bool(np.any(d2 <= (radii + robot_radius) ** 2))
    return hit_obstacle, hit_boundary


def episode_total_reward(
    record: EpisodeRecord,
    layout: SceneLayout,
    cfg: SimConfig,
    alpha: float = 1.0,
) -> float:
    """Sum of per-step rewards over an episode, re-derived from the stored tuples."""
    total = 0.0
    for tup in record.tuples:
        total += reward(math.hypot(*tup.goal_local), False, False, alpha)
    if record.outcome == "collision" and record.tuples:
        last = record.tuples[-1]
        post, _ = step_dynamics(last.pose, last.executed_action, cfg.dt, layout, cfg.robot_radius)
        hit_obs, hit_bound = _classify_hit(post.x, post.y, layout, cfg.robot_radius)
        total -= 10.0 * (1 if hit_obs else 0) + 10.0 * (1 if hit_bound else 0)
    return total


def rollout(
    policy,
    layout: SceneLayout,
    skin: AppearanceSkin,
    expert,
    cfg: SimConfig,
    rig: CameraRig,
    *,
    horizon: int | None = None,
    beta: float = 0.0,
    rng: np.random.Generator | None = None,
    start: Pose | None = None,
) -> EpisodeRecord:
    """Run one episode and record (pose, observation, goal, actions) tuples.

    `expert` labels every step; `policy` (when given) proposes the executed
    action. With mixing weight beta > 0, each step executes the expert's action
    with probability beta (DAgger-style), drawing from `rng`. ``policy=None``
    executes the expert throughout. Terminates on collision, on reaching the
    goal within cfg.success_dist, or at the horizon.
    """
    if horizon is None:
        horizon = cfg.horizon
    if horizon < 1:
        raise RangeError("horizon must be >= 1")
    if not (0.0 <= beta <= 1.0):
        raise RangeError("beta must lie in [0, 1]")
    if beta > 0.0 and policy is not None and rng is None:
        raise ValueError("mixed execution needs an rng")

    pose = start if start is not None else layout.start
    for obj in (policy, expert):
        if obj is not None and hasattr(obj, "reset"):
            obj.reset()

    record = EpisodeRecord()
    noise_rng = None
    if cfg.depth_noise > 0.0:
        noise_rng = rng if rng is not None else seeded_rng(0, "depth-noise")

    for t in range(horizon):
        now = t * cfg.dt
        g = goal_local(pose, layout.goal, now)
        obs = raycast(layout, skin, pose, rig, cfg, rng=noise_rng)

        label = expert(t, pose, obs, g).clamped(cfg.v_max, cfg.omega_max)
        if policy is None:
            executed = label
        else:
            proposed = policy(t, pose, obs, g)
            arr = proposed.as_array()
            if not np.all(np.isfinite(arr)):
                raise PolicyFaultError(f"policy produced non-finite action at step {t}")
            proposed = proposed.clamped(cfg.v_max, cfg.omega_max)
            if beta >= 1.0:
                executed = label
            elif beta > 0.0 and rng.uniform() < beta:
                executed = label
            else:
                executed = proposed

        record.tuples.append(StepTuple(pose, obs, g, label, executed, t))

        new_pose, collided = step_dynamics(pose, executed, cfg.dt, layout, cfg.robot_radius)
        record.moving_distance += math.hypot(new_pose.x - pose.x, new_pose.y - pose.y)
        pose = new_pose
        if collided:
            record.outcome = "collision"
            return record
        gx, gy = layout.goal.position((t + 1) * cfg.dt)
        if math.hypot(gx - pose.x, gy - pose.y) <= cfg.success_dist:
            record.outcome = "success"
            return record

    record.outcome = "timeout"
    return record
