"""Flat key=value experiment configuration with validation and echoing.

Every knob of the simulator, expert, networks, training, and evaluation lives
here; a config file (or --set overrides) assigns `key = value` per line, with
'#' comments. The effective config is echoed into the output directory so any
run can be reproduced from its artifacts.
"""

from __future__ import annotations

import difflib
import math
import typing
from dataclasses import dataclass, fields

from .distill import NetConfig, TrainConfig
from .errors import ConfigError
from .expert import ExpertConfig
from .sim import DENSITY_MAX, DENSITY_MIN, CameraRig, SimConfig


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"

    # world
    arena_half_extent: float = 2.0
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

    # camera rig
    rays_per_camera: int = 64
    fov_degrees: float = 110.0

    # scene suite
    scene_count: int = 4
    scene_seed_base: int = 100
    densities: tuple[float, ...] = (0.05, 0.1, 0.15, 0.2)
    min_obstacles: int = 6
    max_obstacles: int = 12
    goal_kind: str = "static"
    orbit_radius: float = 1.0
    angular_speed: float = 0.5
    train_skin_count: int = 2
    test_skin_count: int = 2
    skin_seed_base: int = 500

    # expert
    k_att: float = 1.5
    k_rep: float = 0.08
    rep_range: float = 0.8
    k_psi: float = 2.0
    stall_steps: int = 30
    stall_speed_frac: float = 0.05
    escape_speed_frac: float = 0.3
    reward_alpha: float = 1.0

    # networks
    embed_width: int = 64
    goal_hidden: int = 32
    goal_embed: int = 32
    fuse_width: int = 64
    head_hidden: int = 64
    conv_channels1: int = 16
    conv_channels2: int = 32
    kernel: int = 5
    stride: int = 2
    seq_len: int = 5
    student_camera: int = 0

    # training
    teacher_batch: int = 64
    student_batch: int = 32
    lr_encoder: float = 1e-5
    lr_action: float = 1e-4
    tau: float = 0.1
    lambda0: float = 1.0
    lambda1_start: float = 0.9
    lambda1_end: float = 0.1
    teacher_epochs: int = 20
    student_epochs: int = 20
    delta_min: float = 0.5
    dagger_iterations: int = 0
    dagger_episodes: int = 8
    checkpoint_every: int = 0

    # data collection
    collect_episodes: int = 24
    max_tuples: int = 5000

    # evaluation
    eval_episodes_per_scene: int = 5
    test_episodes: int = 8
    probe_stride: int = 5
    max_probes: int = 100

    # artifact names, resolved under out_dir unless absolute
    suite_path: str = "suite.txt"
    dataset_path: str = "dataset.okd"
    teacher_weights: str = "teacher.okw"
    student_weights: str = "student.okw"
    student_nodistill_weights: str = "student_nodistill.okw"

    def validate(self) -> None:
        errs = []
        for d in self.densities:
            if not (DENSITY_MIN <= d <= DENSITY_MAX):
                errs.append(f"densities entry {d} outside [{DENSITY_MIN}, {DENSITY_MAX}]")
        if self.tau <= 0:
            errs.append("tau must be > 0")
        if self.lambda0 < 0 or self.lambda1_start < 0 or self.lambda1_end < 0:
            errs.append("lambda0 / lambda1_start / lambda1_end must be >= 0")
        if self.seq_len != 5:
            errs.append("seq_len must be exactly 5")
        if self.delta_min < 0:
            errs.append("delta_min must be >= 0")
        if not (0 < self.fov_degrees < 360):
            errs.append("fov_degrees must lie in (0, 360)")
        if not (0 <= self.student_camera < 4):
            errs.append("student_camera must be one of 0..3")
        if self.goal_kind not in ("static", "circular"):
            errs.append("goal_kind must be 'static' or 'circular'")
        if self.min_obstacles < 1 or self.max_obstacles < self.min_obstacles:
            errs.append("need 1 <= min_obstacles <= max_obstacles")
        if self.train_skin_count < 1:
            errs.append("train_skin_count must be >= 1")
        if self.scene_count < 1:
            errs.append("scene_count must be >= 1")
        w1 = (self.rays_per_camera - self.kernel) // self.stride + 1
        if self.rays_per_camera < self.kernel or w1 < self.kernel:
            errs.append(
                f"rays_per_camera={self.rays_per_camera} too small for kernel={self.kernel}, "
                f"stride={self.stride}"
            )
        if errs:
            raise ConfigError("; ".join(errs))

    # Sub-config builders -------------------------------------------------

    def sim_cfg(self) -> SimConfig:
        return SimConfig(
            dt=self.dt,
            horizon=self.horizon,
            robot_radius=self.robot_radius,
            v_max=self.v_max,
            omega_max=self.omega_max,
            d_max=self.d_max,
            d_shade=self.d_shade,
            r_clear=self.r_clear,
            success_dist=self.success_dist,
            depth_noise=self.depth_noise,
        )

    def rig(self) -> CameraRig:
        return CameraRig(
            rays_per_camera=self.rays_per_camera, fov=math.radians(self.fov_degrees)
        )

    def net_cfg(self) -> NetConfig:
        return NetConfig(
            rays_per_camera=self.rays_per_camera,
            embed_width=self.embed_width,
            goal_hidden=self.goal_hidden,
            goal_embed=self.goal_embed,
            fuse_width=self.fuse_width,
            head_hidden=self.head_hidden,
            conv_channels=(self.conv_channels1, self.conv_channels2),
            kernel=self.kernel,
            stride=self.stride,
            seq_len=self.seq_len,
            student_camera=self.student_camera,
            d_max=self.d_max,
        )

    def expert_cfg(self) -> ExpertConfig:
        return ExpertConfig(
            k_att=self.k_att,
            k_rep=self.k_rep,
            rep_range=self.rep_range,
            k_psi=self.k_psi,
            stall_steps=self.stall_steps,
            stall_speed_frac=self.stall_speed_frac,
            escape_speed_frac=self.escape_speed_frac,
        )

    def train_cfg(self, role: str) -> TrainConfig:
        return TrainConfig(
            teacher_batch=self.teacher_batch,
            student_batch=self.student_batch,
            lr_encoder=self.lr_encoder,
            lr_action=self.lr_action,
            tau=self.tau,
            lambda0=self.lambda0,
            lambda1_start=self.lambda1_start,
            lambda1_end=self.lambda1_end,
            epochs=self.teacher_epochs if role == "teacher" else self.student_epochs,
            delta_min=self.delta_min,
            dagger_iterations=self.dagger_iterations,
            dagger_episodes=self.dagger_episodes,
            seed=self.seed,
        )


_FIELD_TYPES = typing.get_type_hints(ExperimentConfig)


def _convert(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    try:
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
        if ftype is str:
            return raw
        if typing.get_origin(ftype) is tuple:
            items = [part.strip() for part in raw.split(",") if part.strip()]
            return tuple(float(x) for x in items)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r}: {exc}") from exc
    raise ConfigError(f"unsupported config field type for {key}")


def _set_key(values: dict, key: str, raw: str) -> None:
    if key not in _FIELD_TYPES:
        hint = difflib.get_close_matches(key, list(_FIELD_TYPES), n=1)
        suffix = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(f"unknown config key {key!r}{suffix}")
    values[key] = _convert(key, raw)


def parse_config(
    path: str | None = None, overrides: list[str] | None = None
) -> ExperimentConfig:
    """Defaults, then file assignments, then overrides; validates the result."""
    values: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
                key, _, value = line.partition("=")
                _set_key(values, key.strip(), value.strip())
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, _, value = item.partition("=")
        _set_key(values, key.strip(), value.strip())
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    """Render the full effective config as loadable key = value text."""
    lines = ["# okdnav effective configuration"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            rendered = ",".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            rendered = repr(v)
        else:
            rendered = str(v)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"
