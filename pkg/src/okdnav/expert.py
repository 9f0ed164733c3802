"""State-based potential-field expert producing action labels for imitation.

Attraction pulls toward the goal in the robot's local frame; each obstacle
within range pushes away with the classic (1/s - 1/range)/s^2 profile. A small
tangential bias kicks in when the field stalls in a local minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import Action, Pose, SceneLayout, SimConfig, rotate


@dataclass(frozen=True)
class ExpertConfig:
    k_att: float = 1.5
    k_rep: float = 0.08
    rep_range: float = 0.8
    k_psi: float = 2.0
    # Stall escape: if the best goal distance seen this episode has not improved
    # for `stall_steps` steps (and the goal is not yet reached), blend in a
    # tangential component of escape_speed_frac * v_max until the robot gets
    # `escape_margin` meters closer than it ever was. stall_speed_frac marks a
    # field speed low enough to count as fully stalled regardless of progress.
    stall_steps: int = 30
    stall_speed_frac: float = 0.05
    escape_speed_frac: float = 0.6
    escape_margin: float = 0.1


def _clamp_norm(vx: float, vy: float, v_max: float) -> tuple[float, float]:
    n = math.hypot(vx, vy)
    if n > v_max and n > 0.0:
        s = v_max / n
        return vx * s, vy * s
    return vx, vy


def potential_velocity(
    obstacles_rel: np.ndarray,
    radii: np.ndarray,
    goal_rel: tuple[float, float],
    cfg: ExpertConfig,
    v_max: float,
) -> tuple[float, float]:
    """Raw local-frame field velocity: attraction plus repulsion, norm-clamped."""
    vx = cfg.k_att * goal_rel[0]
    vy = cfg.k_att * goal_rel[1]
    for k in range(obstacles_rel.shape[0]):
        ox, oy = obstacles_rel[k]
        dist = math.hypot(ox, oy)
        s = dist - radii[k]
        if s <= 0.0:
            s = 1e-6
        if s < cfg.rep_range and dist > 0.0:
            mag = cfg.k_rep * (1.0 / s - 1.0 / cfg.rep_range) / (s * s)
            vx -= mag * ox / dist
            vy -= mag * oy / dist
    return _clamp_norm(vx, vy, v_max)


def expert_action(
    pose: Pose,
    obstacles_rel: np.ndarray,
    radii: np.ndarray,
    goal_rel: tuple[float, float],
    cfg: ExpertConfig,
    sim_cfg: SimConfig,
) -> Action:
    """Stateless expert command from relative obstacle positions and local goal."""
    vx, vy = potential_velocity(obstacles_rel, radii, goal_rel, cfg, sim_cfg.v_max)
    omega = cfg.k_psi * math.atan2(goal_rel[1], goal_rel[0])
    omega = min(max(omega, -sim_cfg.omega_max), sim_cfg.omega_max)
    return Action(vx, vy, omega)


class ExpertPolicy:
    """Per-episode expert: stateless field control plus stall-escape state.

    Call ``reset()`` at episode start (rollout does this). The policy observes
    every state along an episode, so stall detection reflects the executed
    trajectory even when labels are queried under another driver. A stall is
    declared when the episode's best goal distance stops improving (covers both
    dead zeros of the field and oscillating traps); escape steers tangentially
    around the blockage until the robot beats its previous best approach.
    """

    def __init__(self, layout: SceneLayout, cfg: ExpertConfig, sim_cfg: SimConfig):
        self.layout = layout
        self.cfg = cfg
        self.sim_cfg = sim_cfg
        centers, radii, _ = layout.obstacle_arrays()
        self._centers = centers
        self._radii = radii
        self.reset()

    def reset(self) -> None:
        self._best_dist = math.inf
        self._since_best = 0
        self._escaping = False
        self._escape_side = 1.0
        self._escape_anchor = math.inf

    def _relative_obstacles(self, pose: Pose) -> np.ndarray:
        if self._centers.shape[0] == 0:
            return np.zeros((0, 2))
        dx = self._centers[:, 0] - pose.x
        dy = self._centers[:, 1] - pose.y
        c, s = math.cos(-pose.psi), math.sin(-pose.psi)
        return np.stack([c * dx - s * dy, s * dx + c * dy], axis=1)

    def __call__(self, t: int, pose: Pose, obs, goal_rel: tuple[float, float]) -> Action:
        cfg = self.cfg
        v_max = self.sim_cfg.v_max
        rel = self._relative_obstacles(pose)

        ax, ay = cfg.k_att * goal_rel[0], cfg.k_att * goal_rel[1]
        rx, ry = 0.0, 0.0
        for k in range(rel.shape[0]):
            ox, oy = rel[k]
            dist = math.hypot(ox, oy)
            s = max(dist - self._radii[k], 1e-6)
            if s < cfg.rep_range and dist > 0.0:
                mag = cfg.k_rep * (1.0 / s - 1.0 / cfg.rep_range) / (s * s)
                rx -= mag * ox / dist
                ry -= mag * oy / dist
        vx, vy = _clamp_norm(ax + rx, ay + ry, v_max)
        speed = math.hypot(vx, vy)
        goal_dist = math.hypot(goal_rel[0], goal_rel[1])

        if goal_dist < self._best_dist - 1e-3:
            self._best_dist = goal_dist
            self._since_best = 0
        else:
            self._since_best += 1

        stalled = self._since_best >= cfg.stall_steps or (
            speed < cfg.stall_speed_frac * v_max and self._since_best > 0
        )
        if self._escaping and goal_dist < self._escape_anchor - cfg.escape_margin:
            self._escaping = False
            self._since_best = 0
        if not self._escaping and stalled and goal_dist > self.sim_cfg.success_dist:
            self._escaping = True
            self._escape_anchor = self._best_dist
            # Steer around whichever side the repulsion already pushes toward.
            cross = goal_rel[0] * ry - goal_rel[1] * rx
            self._escape_side = 1.0 if cross >= 0.0 else -1.0

        if self._escaping:
            gn = goal_dist
            if gn > 1e-9:
                tx, ty = rotate(
                    goal_rel[0] / gn, goal_rel[1] / gn, self._escape_side * math.pi / 2.0
                )
                # Damp attraction, keep full repulsion, add the tangential pull.
                vx = 0.4 * ax + rx + cfg.escape_speed_frac * v_max * tx
                vy = 0.4 * ay + ry + cfg.escape_speed_frac * v_max * ty
            vx, vy = _clamp_norm(vx, vy, v_max)

        omega = cfg.k_psi * math.atan2(goal_rel[1], goal_rel[0])
        omega = min(max(omega, -self.sim_cfg.omega_max), self.sim_cfg.omega_max)
        return Action(vx, vy, omega)
