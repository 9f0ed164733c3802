"""On-disk artifact formats.

Dataset files ("OKD1", little-endian): header = magic, version u16,
rays_per_camera u32, camera_count u32, record_count u64; each record packs
pose f64x3, goal_local f64x2, expert_action f64x3, executed_action f64x3,
depth f32x(4W), rgb f32x(12W) (camera-major, then channel), scene_id u32,
step u32.

Weights files ("OKW1", little-endian): magic, version u16, tensor_count u32;
per tensor: name length u16 + utf-8 name, rank u8, dims u32 x rank, data f64.
Tensors are written sorted by name; loading validates names and shapes.

Scene suites are structured text listing layouts and skins by seed and
parameters, so a suite file fully determines its scenes.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ShapeError
from .sim import (
    AppearanceSkin,
    EpisodeRecord,
    SceneLayout,
    generate_scene,
    make_skin,
)

DATASET_MAGIC = b"OKD1"
WEIGHTS_MAGIC = b"OKW1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHIIQ")


def _record_dtype(cameras: int, rays: int) -> np.dtype:
    return np.dtype(
        [
            ("pose", "<f8", (3,)),
            ("goal", "<f8", (2,)),
            ("expert", "<f8", (3,)),
            ("executed", "<f8", (3,)),
            ("depth", "<f4", (cameras, rays)),
            ("rgb", "<f4", (cameras, 3, rays)),
            ("scene_id", "<u4"),
            ("step", "<u4"),
        ]
    )


class Dataset:
    """In-memory view over OKD1 records with derived training indices."""

    def __init__(self, records: np.ndarray, rays_per_camera: int, camera_count: int = 4):
        self.records = records
        self.rays_per_camera = rays_per_camera
        self.camera_count = camera_count

    def __len__(self) -> int:
        return int(self.records.shape[0])

    @property
    def poses(self) -> np.ndarray:
        return self.records["pose"]

    @property
    def positions(self) -> np.ndarray:
        return self.records["pose"][:, :2]

    @property
    def goals(self) -> np.ndarray:
        return self.records["goal"]

    @property
    def expert_actions(self) -> np.ndarray:
        return self.records["expert"]

    @property
    def executed_actions(self) -> np.ndarray:
        return self.records["executed"]

    @property
    def depth(self) -> np.ndarray:
        return self.records["depth"]

    @property
    def rgb(self) -> np.ndarray:
        return self.records["rgb"]

    @property
    def scene_ids(self) -> np.ndarray:
        return self.records["scene_id"]

    @property
    def steps(self) -> np.ndarray:
        return self.records["step"]

    def episode_starts(self) -> np.ndarray:
        """For each row, the index of the first row of its episode.

        Episode boundaries are detected from step resets: rows are stored in
        rollout order and `step` restarts at 0 for each new episode.
        """
        n = len(self)
        starts = np.zeros(n, dtype=np.int64)
        steps = self.steps
        scenes = self.scene_ids
        cur = 0
        for i in range(1, n):
            if steps[i] != steps[i - 1] + 1 or scenes[i] != scenes[i - 1]:
                cur = i
            starts[i] = cur
        return starts

    def window_indices(self, length: int) -> np.ndarray:
        """(N, length) row indices of each row's trailing in-episode window.

        Windows never cross episode boundaries; at an episode start the first
        frame is repeated to fill the window.
        """
        n = len(self)
        starts = self.episode_starts()
        rows = np.arange(n)
        offsets = np.arange(-(length - 1), 1)
        win = rows[:, None] + offsets[None, :]
        return np.maximum(win, starts[:, None])

    def concat(self, other: "Dataset") -> "Dataset":
        if other.rays_per_camera != self.rays_per_camera or other.camera_count != self.camera_count:
            raise ShapeError("cannot concat datasets with different rig shapes")
        return Dataset(
            np.concatenate([self.records, other.records]),
            self.rays_per_camera,
            self.camera_count,
        )

    @staticmethod
    def from_episodes(
        episodes: list[tuple[int, EpisodeRecord]],
        rays_per_camera: int,
        camera_count: int = 4,
    ) -> "Dataset":
        """Flatten (scene_id, EpisodeRecord) pairs into a dataset, in order."""
        total = sum(len(rec.tuples) for _, rec in episodes)
        dt = _record_dtype(camera_count, rays_per_camera)
        out = np.zeros(total, dtype=dt)
        i = 0
        for scene_id, rec in episodes:
            for tup in rec.tuples:
                row = out[i]
                row["pose"] = (tup.pose.x, tup.pose.y, tup.pose.psi)
                row["goal"] = tup.goal_local
                row["expert"] = tup.expert_action.as_array()
                row["executed"] = tup.executed_action.as_array()
                row["depth"] = tup.obs.depth
                row["rgb"] = tup.obs.rgb
                row["scene_id"] = scene_id
                row["step"] = tup.t
                i += 1
        return Dataset(out, rays_per_camera, camera_count)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(
                _HEADER.pack(
                    DATASET_MAGIC,
                    FORMAT_VERSION,
                    self.rays_per_camera,
                    self.camera_count,
                    len(self),
                )
            )
            f.write(self.records.tobytes())

    @staticmethod
    def load(path) -> "Dataset":
        with open(path, "rb") as f:
            head = f.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise FormatError(f"{path}: truncated header")
            magic, version, rays, cameras, count = _HEADER.unpack(head)
            if magic != DATASET_MAGIC:
                raise FormatError(f"{path}: bad magic {magic!r}")
            if version != FORMAT_VERSION:
                raise FormatError(f"{path}: unsupported version {version}")
            dt = _record_dtype(cameras, rays)
            body = f.read()
        if len(body) != count * dt.itemsize:
            raise FormatError(f"{path}: expected {count} records, payload mismatch")
        records = np.frombuffer(body, dtype=dt).copy()
        return Dataset(records, rays, cameras)


def save_weights(path, params: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHI", WEIGHTS_MAGIC, FORMAT_VERSION, len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_weights(path, expected_shapes: dict[str, tuple[int, ...]] | None = None) -> dict[str, np.ndarray]:
    """Read an OKW1 file; when `expected_shapes` is given, every tensor name and
    shape must match it exactly."""
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        head = f.read(10)
        if len(head) != 10:
            raise FormatError(f"{path}: truncated header")
        magic, version, count = struct.unpack("<4sHI", head)
        if magic != WEIGHTS_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            n_items = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(f.read(8 * n_items), dtype="<f8").copy()
            if data.shape[0] != n_items:
                raise FormatError(f"{path}: truncated tensor {name}")
            out[name] = data.reshape(dims)
    if expected_shapes is not None:
        missing = set(expected_shapes) - set(out)
        extra = set(out) - set(expected_shapes)
        if missing or extra:
            raise ShapeError(
                f"{path}: tensor name mismatch, missing={sorted(missing)} extra={sorted(extra)}"
            )
        for name, shape in expected_shapes.items():
            if tuple(out[name].shape) != tuple(shape):
                raise ShapeError(
                    f"{path}: tensor {name} expected shape {tuple(shape)}, got {out[name].shape}"
                )
    return out


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    density: float
    min_obstacles: int = 6
    max_obstacles: int = 12
    goal_kind: str = "static"
    orbit_radius: float = 1.0
    angular_speed: float = 0.5

    def build(self, arena_half_extent: float = 2.0, r_clear: float = 0.3) -> SceneLayout:
        return generate_scene(
            self.seed,
            self.density,
            (self.min_obstacles, self.max_obstacles),
            arena_half_extent=arena_half_extent,
            goal_kind=self.goal_kind,
            orbit_radius=self.orbit_radius,
            angular_speed=self.angular_speed,
            r_clear=r_clear,
        )


@dataclass(frozen=True)
class SkinSpec:
    seed: int
    role: str = "train"  # "train" | "test"

    def build(self) -> AppearanceSkin:
        return make_skin(self.seed)


@dataclass
class SceneSuite:
    arena_half_extent: float = 2.0
    scenes: list[SceneSpec] = field(default_factory=list)
    skins: list[SkinSpec] = field(default_factory=list)

    def train_skins(self) -> list[SkinSpec]:
        return [s for s in self.skins if s.role == "train"]

    def test_skins(self) -> list[SkinSpec]:
        return [s for s in self.skins if s.role == "test"]


def save_suite(path, suite: SceneSuite) -> None:
    lines = ["# okdnav scene suite", "version = 1", f"arena_half_extent = {suite.arena_half_extent!r}"]
    for sc in suite.scenes:
        lines += [
            "[scene]",
            f"seed = {sc.seed}",
            f"density = {float(sc.density)!r}",
            f"min_obstacles = {sc.min_obstacles}",
            f"max_obstacles = {sc.max_obstacles}",
            f"goal = {sc.goal_kind}",
            f"orbit_radius = {float(sc.orbit_radius)!r}",
            f"angular_speed = {float(sc.angular_speed)!r}",
        ]
    for sk in suite.skins:
        lines += ["[skin]", f"seed = {sk.seed}", f"role = {sk.role}"]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_suite(path) -> SceneSuite:
    suite = SceneSuite()
    section: dict[str, str] | None = None
    kind = ""

    def flush():
        nonlocal section
        if section is None:
            return
        if kind == "scene":
            suite.scenes.append(
                SceneSpec(
                    seed=int(section["seed"]),
                    density=float(section["density"]),
                    min_obstacles=int(section.get("min_obstacles", 6)),
                    max_obstacles=int(section.get("max_obstacles", 12)),
                    goal_kind=section.get("goal", "static"),
                    orbit_radius=float(section.get("orbit_radius", 1.0)),
                    angular_speed=float(section.get("angular_speed", 0.5)),
                )
            )
        elif kind == "skin":
            suite.skins.append(SkinSpec(seed=int(section["seed"]), role=section.get("role", "train")))
        section = None

    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                flush()
                kind = line.strip("[]").strip()
                if kind not in ("scene", "skin"):
                    raise FormatError(f"unknown suite section [{kind}]")
                section = {}
                continue
            if "=" not in line:
                raise FormatError(f"bad suite line: {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if section is None:
                if key == "arena_half_extent":
                    suite.arena_half_extent = float(value)
                elif key == "version":
                    if int(value) != 1:
                        raise FormatError(f"unsupported suite version {value}")
                else:
                    raise FormatError(f"unknown suite key {key!r}")
            else:
                section[key] = value
    flush()
    if not suite.scenes:
        raise FormatError(f"{path}: suite lists no scenes")
    return suite


def fmt_float(x) -> str:
    """Shortest round-trip decimal form; deterministic across runs."""
    return repr(float(x))


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Write rows with floats rendered via repr so files are byte-stable."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) if isinstance(v, float) else str(v) for v in row])
