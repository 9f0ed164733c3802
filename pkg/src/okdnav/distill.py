"""Teacher/student networks, imitation and contrastive losses, and training.

The teacher consumes all four cameras' depth rays through one shared per-part
encoder plus a goal encoder, linearly projected to an embedding z1 that feeds
an action head. The student consumes a length-5 sequence of single-camera
color rays, fuses each frame with the goal embedding, and runs an LSTM whose
final hidden state is its embedding z2. Distillation aligns z2 to a frozen
teacher's z1 with a one-directional InfoNCE loss over spatially spaced batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .errors import (
    BatchTooSmallError,
    ConfigError,
    NonFiniteGradientError,
    RangeError,
    SequenceLengthError,
    ShapeError,
    SpacingInfeasibleError,
    ZeroNormError,
)
from .expert import ExpertConfig, ExpertPolicy
from .nn import (
    Adam,
    Conv1d,
    Dense,
    LSTMCell,
    ReLU,
    accumulate_grads,
    collect_params,
    zero_grads_like,
)
from .sim import (
    Action,
    CameraRig,
    EpisodeRecord,
    SceneLayout,
    SimConfig,
    rollout,
    sample_clear_point,
    seeded_rng,
)


@dataclass(frozen=True)
class NetConfig:
    """Shapes shared by teacher and student; embedding widths must match."""

    rays_per_camera: int = 64
    cameras: int = 4
    embed_width: int = 64
    goal_hidden: int = 32
    goal_embed: int = 32
    fuse_width: int = 64
    head_hidden: int = 64
    conv_channels: tuple[int, int] = (16, 32)
    kernel: int = 5
    stride: int = 2
    seq_len: int = 5
    student_camera: int = 0
    d_max: float = 6.0

    def conv_out_width(self) -> int:
        w = (self.rays_per_camera - self.kernel) // self.stride + 1
        if self.rays_per_camera < self.kernel or w < self.kernel:
            raise ConfigError(
                f"rays_per_camera={self.rays_per_camera} too small for kernel {self.kernel}"
            )
        return (w - self.kernel) // self.stride + 1


@dataclass
class TrainConfig:
    teacher_batch: int = 64
    student_batch: int = 32
    lr_encoder: float = 1e-5
    lr_action: float = 1e-4
    tau: float = 0.1
    lambda0: float = 1.0
    lambda1_start: float = 0.9
    lambda1_end: float = 0.1
    epochs: int = 20
    delta_min: float = 0.5
    dagger_iterations: int = 4
    dagger_episodes: int = 200
    dagger_beta_schedule: tuple[float, ...] | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.lambda0 < 0 or self.lambda1_start < 0 or self.lambda1_end < 0:
            raise ConfigError("lambda weights must be >= 0")
        if self.delta_min < 0:
            raise ConfigError("delta_min must be >= 0")
        if self.epochs < 1 or self.teacher_batch < 1 or self.student_batch < 2:
            raise ConfigError("epochs and batch sizes must be positive (student batch >= 2)")

    def betas(self) -> list[float]:
        if self.dagger_beta_schedule is not None:
            return list(self.dagger_beta_schedule)[: self.dagger_iterations]
        return [0.5**i for i in range(self.dagger_iterations)]


class _NetBase:
    """Parameter bookkeeping shared by both networks."""

    layers: dict

    def params(self) -> dict[str, np.ndarray]:
        return collect_params(self.layers)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: tuple(v.shape) for k, v in self.params().items()}

    def load_params(self, values: dict[str, np.ndarray]) -> None:
        own = self.params()
        for name, arr in own.items():
            if name not in values:
                raise ShapeError(f"missing tensor {name}")
            if values[name].shape != arr.shape:
                raise ShapeError(f"{name}: expected {arr.shape}, got {values[name].shape}")
            arr[...] = values[name]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}


class TeacherNet(_NetBase):
    """Single-frame policy over omnidirectional depth rays."""

    def __init__(self, cfg: NetConfig, seed: int):
        self.cfg = cfg
        rng = seeded_rng(seed, "teacher-net")
        c1, c2 = cfg.conv_channels
        w2 = cfg.conv_out_width()
        self.layers = {
            "enc_conv1": Conv1d(1, c1, cfg.kernel, cfg.stride, rng),
            "enc_conv2": Conv1d(c1, c2, cfg.kernel, cfg.stride, rng),
            "enc_fc": Dense(c2 * w2, cfg.embed_width, rng),
            "goal_fc1": Dense(2, cfg.goal_hidden, rng),
            "goal_fc2": Dense(cfg.goal_hidden, cfg.goal_embed, rng),
            "lp": Dense(cfg.cameras * cfg.embed_width + cfg.goal_embed, cfg.embed_width, rng),
            "head_fc1": Dense(cfg.embed_width, cfg.head_hidden, rng),
            "head_fc2": Dense(cfg.head_hidden, 3, rng),
        }
        self.relu = ReLU()

    def forward(self, depth: np.ndarray, goal: np.ndarray):
        """(B, cameras, W) depth and (B, 2) local goals -> (z1 (B,E), action (B,3), cache)."""
        cfg = self.cfg
        if depth.ndim != 3 or depth.shape[1] != cfg.cameras or depth.shape[2] != cfg.rays_per_camera:
            raise ShapeError(
                f"teacher depth: expected (B, {cfg.cameras}, {cfg.rays_per_camera}), got {depth.shape}"
            )
        if goal.ndim != 2 or goal.shape[1] != 2 or goal.shape[0] != depth.shape[0]:
            raise ShapeError(f"teacher goal: expected ({depth.shape[0]}, 2), got {goal.shape}")
        b = depth.shape[0]
        L = self.layers

        x = (depth / cfg.d_max).reshape(b * cfg.cameras, 1, cfg.rays_per_camera)
        h1, c_c1 = L["enc_conv1"].forward(x)
        r1, c_r1 = self.relu.forward(h1)
        h2, c_c2 = L["enc_conv2"].forward(r1)
        r2, c_r2 = self.relu.forward(h2)
        flat = r2.reshape(b * cfg.cameras, -1)
        pe, c_fc = L["enc_fc"].forward(flat)
        parts = pe.reshape(b, cfg.cameras * cfg.embed_width)

        g1, c_g1 = L["goal_fc1"].forward(goal)
        gr, c_gr = self.relu.forward(g1)
        g2, c_g2 = L["goal_fc2"].forward(gr)

        cat = np.concatenate([parts, g2], axis=1)
        z1, c_lp = L["lp"].forward(cat)

        a1, c_h1 = L["head_fc1"].forward(z1)
        ar, c_hr = self.relu.forward(a1)
        act, c_h2 = L["head_fc2"].forward(ar)

        cache = {
            "b": b,
            "conv": (c_c1, c_r1, c_c2, c_r2, c_fc),
            "r2_shape": r2.shape,
            "goal": (c_g1, c_gr, c_g2),
            "lp": c_lp,
            "head": (c_h1, c_hr, c_h2),
            "part_embeddings": pe.reshape(b, cfg.cameras, cfg.embed_width),
        }
        return z1, act, cache

    def backward(self, cache, gz1: np.ndarray | None, gact: np.ndarray | None):
        cfg = self.cfg
        b = cache["b"]
        L = self.layers
        grads = zero_grads_like(self.params())
        e = cfg.embed_width

        gz = np.zeros((b, e)) if gz1 is None else gz1.copy()
        if gact is not None:
            c_h1, c_hr, c_h2 = cache["head"]
            gx, g = L["head_fc2"].backward(c_h2, gact)
            accumulate_grads(grads, "head_fc2", g)
            gx, _ = self.relu.backward(c_hr, gx)
            gx, g = L["head_fc1"].backward(c_h1, gx)
            accumulate_grads(grads, "head_fc1", g)
            gz += gx

        gcat, g = L["lp"].backward(cache["lp"], gz)
        accumulate_grads(grads, "lp", g)
        gparts = gcat[:, : cfg.cameras * e]
        ggoal = gcat[:, cfg.cameras * e:]

        c_g1, c_gr, c_g2 = cache["goal"]
        gx, g = L["goal_fc2"].backward(c_g2, ggoal)
        accumulate_grads(grads, "goal_fc2", g)
        gx, _ = self.relu.backward(c_gr, gx)
        _, g = L["goal_fc1"].backward(c_g1, gx)
        accumulate_grads(grads, "goal_fc1", g)

        c_c1, c_r1, c_c2, c_r2, c_fc = cache["conv"]
        gpe = gparts.reshape(b * cfg.cameras, e)
        gflat, g = L["enc_fc"].backward(c_fc, gpe)
        accumulate_grads(grads, "enc_fc", g)
        gr2 = gflat.reshape(cache["r2_shape"])
        gh2, _ = self.relu.backward(c_r2, gr2)
        gr1, g = L["enc_conv2"].backward(c_c2, gh2)
        accumulate_grads(grads, "enc_conv2", g)
        gh1, _ = self.relu.backward(c_r1, gr1)
        _, g = L["enc_conv1"].backward(c_c1, gh1)
        accumulate_grads(grads, "enc_conv1", g)
        return grads


class StudentNet(_NetBase):
    """Recurrent single-view policy over color-ray sequences."""

    def __init__(self, cfg: NetConfig, seed: int):
        self.cfg = cfg
        rng = seeded_rng(seed, "student-net")
        c1, c2 = cfg.conv_channels
        w2 = cfg.conv_out_width()
        self.layers = {
            "enc_conv1": Conv1d(3, c1, cfg.kernel, cfg.stride, rng),
            "enc_conv2": Conv1d(c1, c2, cfg.kernel, cfg.stride, rng),
            "enc_fc": Dense(c2 * w2, cfg.embed_width, rng),
            "goal_fc1": Dense(2, cfg.goal_hidden, rng),
            "goal_fc2": Dense(cfg.goal_hidden, cfg.goal_embed, rng),
            "fuse": Dense(cfg.embed_width + cfg.goal_embed, cfg.fuse_width, rng),
            "lstm": LSTMCell(cfg.fuse_width, cfg.embed_width, rng),
            "head_fc1": Dense(cfg.embed_width, cfg.head_hidden, rng),
            "head_fc2": Dense(cfg.head_hidden, 3, rng),
        }
        self.relu = ReLU()

    def forward(self, rgb_seq: np.ndarray, goal_seq: np.ndarray):
        """(B, L, 3, W) color rays and (B, L, 2) goals -> (z2 (B,E), action (B,3), cache)."""
        cfg = self.cfg
        if rgb_seq.ndim != 4 or rgb_seq.shape[2] != 3 or rgb_seq.shape[3] != cfg.rays_per_camera:
            raise ShapeError(
                f"student rgb: expected (B, {cfg.seq_len}, 3, {cfg.rays_per_camera}), got {rgb_seq.shape}"
            )
        if rgb_seq.shape[1] != cfg.seq_len:
            raise SequenceLengthError(
                f"student sequences must have length {cfg.seq_len}, got {rgb_seq.shape[1]}"
            )
        if goal_seq.shape != (rgb_seq.shape[0], cfg.seq_len, 2):
            raise ShapeError(
                f"student goals: expected ({rgb_seq.shape[0]}, {cfg.seq_len}, 2), got {goal_seq.shape}"
            )
        b, sl = rgb_seq.shape[0], cfg.seq_len
        L = self.layers

        x = rgb_seq.reshape(b * sl, 3, cfg.rays_per_camera)
        h1, c_c1 = L["enc_conv1"].forward(x)
        r1, c_r1 = self.relu.forward(h1)
        h2, c_c2 = L["enc_conv2"].forward(r1)
        r2, c_r2 = self.relu.forward(h2)
        flat = r2.reshape(b * sl, -1)
        img, c_fc = L["enc_fc"].forward(flat)

        g1, c_g1 = L["goal_fc1"].forward(goal_seq.reshape(b * sl, 2))
        gr, c_gr = self.relu.forward(g1)
        g2, c_g2 = L["goal_fc2"].forward(gr)

        cat = np.concatenate([img, g2], axis=1)
        fused, c_fuse = L["fuse"].forward(cat)
        fused = fused.reshape(b, sl, cfg.fuse_width)

        h, c = L["lstm"].zero_state(b)
        lstm_caches = []
        for t in range(sl):
            (h, c), cc = L["lstm"].forward(fused[:, t], (h, c))
            lstm_caches.append(cc)
        z2 = h

        a1, c_h1 = L["head_fc1"].forward(z2)
        ar, c_hr = self.relu.forward(a1)
        act, c_h2 = L["head_fc2"].forward(ar)

        cache = {
            "b": b,
            "conv": (c_c1, c_r1, c_c2, c_r2, c_fc),
            "r2_shape": r2.shape,
            "goal": (c_g1, c_gr, c_g2),
            "fuse": c_fuse,
            "lstm": lstm_caches,
            "head": (c_h1, c_hr, c_h2),
        }
        return z2, act, cache

    def backward(self, cache, gz2: np.ndarray | None, gact: np.ndarray | None):
        cfg = self.cfg
        b = cache["b"]
        sl = cfg.seq_len
        L = self.layers
        grads = zero_grads_like(self.params())

        gh = np.zeros((b, cfg.embed_width)) if gz2 is None else gz2.copy()
        if gact is not None:
            c_h1, c_hr, c_h2 = cache["head"]
            gx, g = L["head_fc2"].backward(c_h2, gact)
            accumulate_grads(grads, "head_fc2", g)
            gx, _ = self.relu.backward(c_hr, gx)
            gx, g = L["head_fc1"].backward(c_h1, gx)
            accumulate_grads(grads, "head_fc1", g)
            gh += gx

        gc = np.zeros((b, cfg.embed_width))
        gfused = np.zeros((b, sl, cfg.fuse_width))
        for t in reversed(range(sl)):
            gx_t, gh, gc, g = L["lstm"].backward(cache["lstm"][t], gh, gc)
            accumulate_grads(grads, "lstm", g)
            gfused[:, t] = gx_t

        gcat, g = L["fuse"].backward(cache["fuse"], gfused.reshape(b * sl, cfg.fuse_width))
        accumulate_grads(grads, "fuse", g)
        gimg = gcat[:, : cfg.embed_width]
        ggoal = gcat[:, cfg.embed_width:]

        c_g1, c_gr, c_g2 = cache["goal"]
        gx, g = L["goal_fc2"].backward(c_g2, ggoal)
        accumulate_grads(grads, "goal_fc2", g)
        gx, _ = self.relu.backward(c_gr, gx)
        _, g = L["goal_fc1"].backward(c_g1, gx)
        accumulate_grads(grads, "goal_fc1", g)

        c_c1, c_r1, c_c2, c_r2, c_fc = cache["conv"]
        gflat, g = L["enc_fc"].backward(c_fc, gimg)
        accumulate_grads(grads, "enc_fc", g)
        gr2 = gflat.reshape(cache["r2_shape"])
        gh2, _ = self.relu.backward(c_r2, gr2)
        gr1, g = L["enc_conv2"].backward(c_c2, gh2)
        accumulate_grads(grads, "enc_conv2", g)
        gh1, _ = self.relu.backward(c_r1, gr1)
        _, g = L["enc_conv1"].backward(c_c1, gh1)
        accumulate_grads(grads, "enc_conv1", g)
        return grads


def cosine_similarity(z1: np.ndarray, z2: np.ndarray) -> float:
    """Cosine of the angle between two nonzero vectors, clipped to [-1, 1].

    Identical inputs give exactly 1.0 (the denominator sqrt(s*s) recovers s)."""
    a = np.asarray(z1, dtype=np.float64).reshape(-1)
    b = np.asarray(z2, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"cosine: shapes {a.shape} vs {b.shape}")
    na2 = float(a @ a)
    nb2 = float(b @ b)
    if na2 == 0.0 or nb2 == 0.0:
        raise ZeroNormError("cosine similarity of a zero vector")
    return float(np.clip((a @ b) / math.sqrt(na2 * nb2), -1.0, 1.0))


def infonce_loss(
    z1: np.ndarray, z2: np.ndarray, tau: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """One-directional InfoNCE over cosine similarities.

    Anchors are rows of z1, candidates rows of z2; the positive for anchor i is
    row i. Returns (loss, dloss/dz1, dloss/dz2).
    """
    if tau <= 0:
        raise RangeError("tau must be > 0")
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ShapeError(f"infonce: need matching (N, E) matrices, got {z1.shape} vs {z2.shape}")
    n = z1.shape[0]
    if n < 2:
        raise BatchTooSmallError(f"contrastive batch needs N >= 2, got {n}")
    n1 = np.linalg.norm(z1, axis=1)
    n2 = np.linalg.norm(z2, axis=1)
    if np.any(n1 == 0.0) or np.any(n2 == 0.0):
        raise ZeroNormError("infonce received a zero row")

    u1 = z1 / n1[:, None]
    u2 = z2 / n2[:, None]
    logits = (u1 @ u2.T) / tau
    m = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - m)
    denom = expd.sum(axis=1)
    lse = m[:, 0] + np.log(denom)
    loss = float(np.mean(lse - np.diag(logits)))

    p = expd / denom[:, None]
    dlogits = (p - np.eye(n)) / n
    ds = dlogits / tau
    du1 = ds @ u2
    du2 = ds.T @ u1
    dz1 = (du1 - u1 * np.sum(du1 * u1, axis=1, keepdims=True)) / n1[:, None]
    dz2 = (du2 - u2 * np.sum(du2 * u2, axis=1, keepdims=True)) / n2[:, None]
    return loss, dz1, dz2


def action_l2_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean Euclidean action discrepancy and its gradient w.r.t. predictions."""
    if pred.shape != target.shape:
        raise ShapeError(f"action loss: {pred.shape} vs {target.shape}")
    diff = pred - target
    norms = np.linalg.norm(diff, axis=1)
    loss = float(norms.mean())
    safe = np.maximum(norms, 1e-12)
    grad = diff / (safe[:, None] * pred.shape[0])
    return loss, grad


def lambda1_schedule(epoch: int, total_epochs: int, cfg: TrainConfig) -> float:
    """Contrastive weight, linear from lambda1_start (epoch 0) to lambda1_end (last epoch)."""
    if not (0 <= epoch < total_epochs):
        raise RangeError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs == 1:
        return cfg.lambda1_end
    frac = epoch / (total_epochs - 1)
    return cfg.lambda1_start + (cfg.lambda1_end - cfg.lambda1_start) * frac


def batch_sample_spaced(
    dataset, n: int, delta_min: float, seed: int, attempts: int = 20
) -> list[int]:
    """N distinct row indices with pairwise position distance >= delta_min.

    Seeded rejection over random permutations (accept-scan with a blocked-set
    mask), falling back to greedy farthest-point selection from a seeded start.
    """
    positions = dataset.positions if hasattr(dataset, "positions") else np.asarray(dataset)
    positions = np.asarray(positions, dtype=np.float64)
    m = positions.shape[0]
    if m == 0:
        raise ValueError("dataset is empty")
    if n > m:
        raise SpacingInfeasibleError(f"batch of {n} from {m} rows")
    rng = seeded_rng(seed, "spaced-batch")
    d2min = delta_min * delta_min

    for _ in range(attempts):
        perm = rng.permutation(m)
        blocked = np.zeros(m, dtype=bool)
        chosen: list[int] = []
        for idx in perm:
            if blocked[idx]:
                continue
            chosen.append(int(idx))
            if len(chosen) == n:
                return chosen
            d2 = (positions[:, 0] - positions[idx, 0]) ** 2 + (
                positions[:, 1] - positions[idx, 1]
            ) ** 2
            blocked |= d2 < d2min
            blocked[idx] = True

    # Farthest-point fallback: maximizes the minimum pairwise distance greedily.
    start = int(rng.integers(m))
    chosen = [start]
    dmin = np.hypot(positions[:, 0] - positions[start, 0], positions[:, 1] - positions[start, 1])
    while len(chosen) < n:
        cand = int(np.argmax(dmin))
        if dmin[cand] < delta_min:
            raise SpacingInfeasibleError(
                f"no batch of {n} rows with spacing {delta_min} exists; lower delta_min"
            )
        chosen.append(cand)
        d = np.hypot(positions[:, 0] - positions[cand, 0], positions[:, 1] - positions[cand, 1])
        dmin = np.minimum(dmin, d)
    return chosen


def _group_lr(cfg: TrainConfig):
    return lambda name: cfg.lr_action if name.startswith("head_") else cfg.lr_encoder


def train_teacher(
    dataset: Dataset,
    cfg: TrainConfig,
    net_cfg: NetConfig,
    checkpoint_epochs: tuple[int, ...] = (),
) -> tuple[TeacherNet, list[tuple], dict[int, dict[str, np.ndarray]]]:
    """Behavior-clone the teacher on stored expert labels.

    Returns (net, trace rows (step, epoch, l_act, l_con, lambda1, total),
    {epoch: parameter snapshot} for each requested checkpoint epoch).
    """
    cfg.validate()
    net = TeacherNet(net_cfg, seed=_derive(cfg.seed, "teacher-init"))
    params = net.params()
    adam = Adam(_group_lr(cfg))
    rng = seeded_rng(cfg.seed, "teacher-data")

    depth = dataset.depth.astype(np.float64)
    goals = dataset.goals.astype(np.float64)
    labels = dataset.expert_actions.astype(np.float64)
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")

    trace = []
    checkpoints: dict[int, dict[str, np.ndarray]] = {}
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.teacher_batch):
            idx = perm[lo : lo + cfg.teacher_batch]
            _, act, cache = net.forward(depth[idx], goals[idx])
            loss, dact = action_l2_loss(act, labels[idx])
            if not math.isfinite(loss):
                raise NonFiniteGradientError(f"teacher loss non-finite at step {step}")
            grads = net.backward(cache, None, dact)
            adam.step(params, grads)
            trace.append((step, epoch, loss, 0.0, 0.0, loss))
            step += 1
        if (epoch + 1) in checkpoint_epochs:
            checkpoints[epoch + 1] = net.snapshot()
    return net, trace, checkpoints


def student_batch_loss(
    student: StudentNet,
    teacher: TeacherNet | None,
    rgb_seq: np.ndarray,
    goal_seq: np.ndarray,
    labels: np.ndarray,
    depth: np.ndarray | None,
    goal_last: np.ndarray | None,
    lambda0: float,
    lambda1: float,
    tau: float,
) -> tuple[float, float, float, dict[str, np.ndarray]]:
    """One composite loss evaluation: lambda0 * action + lambda1 * contrastive.

    The teacher embedding is treated as a constant (no gradient flows into the
    teacher). Returns (l_act, l_con, total, student grads).
    """
    z2, act, cache = student.forward(rgb_seq, goal_seq)
    l_act, dact = action_l2_loss(act, labels)
    l_con = 0.0
    gz2 = None
    if lambda1 > 0.0:
        if teacher is None:
            raise ConfigError("contrastive loss needs a teacher")
        z1, _, _ = teacher.forward(depth, goal_last)
        l_con, _, dz2 = infonce_loss(z1, z2, tau)
        gz2 = lambda1 * dz2
    total = lambda0 * l_act + lambda1 * l_con
    grads = student.backward(cache, gz2, lambda0 * dact if lambda0 != 0.0 else None)
    return l_act, l_con, total, grads


def train_student(
    dataset: Dataset,
    teacher: TeacherNet | None,
    cfg: TrainConfig,
    net_cfg: NetConfig,
    with_distillation: bool = True,
    init_net: StudentNet | None = None,
    checkpoint_epochs: tuple[int, ...] = (),
) -> tuple[StudentNet, list[tuple], dict[int, dict[str, np.ndarray]]]:
    """Train the student on spatially spaced batches; the teacher stays frozen.

    ``with_distillation=False`` trains the action-only ablation: the
    contrastive weight is identically zero and the teacher is never queried.
    Batch sampling and initialization do not depend on the flag, so ablation
    runs see the same batches as distillation runs under the same seed.
    """
    cfg.validate()
    if with_distillation:
        if teacher is None:
            raise ConfigError("distillation needs a teacher network")
        if teacher.cfg.embed_width != net_cfg.embed_width:
            raise ConfigError(
                f"embedding widths differ: teacher {teacher.cfg.embed_width}, "
                f"student {net_cfg.embed_width}"
            )
    student = init_net if init_net is not None else StudentNet(net_cfg, seed=_derive(cfg.seed, "student-init"))
    params = student.params()
    adam = Adam(_group_lr(cfg))

    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")
    cam = net_cfg.student_camera
    rgb = dataset.rgb[:, cam].astype(np.float64)
    goals = dataset.goals.astype(np.float64)
    labels = dataset.expert_actions.astype(np.float64)
    depth = dataset.depth.astype(np.float64) if with_distillation else None
    windows = dataset.window_indices(net_cfg.seq_len)

    bsz = min(cfg.student_batch, n)
    steps_per_epoch = max(1, math.ceil(n / bsz))
    trace = []
    checkpoints: dict[int, dict[str, np.ndarray]] = {}
    step = 0
    for epoch in range(cfg.epochs):
        lam1 = lambda1_schedule(epoch, cfg.epochs, cfg) if with_distillation else 0.0
        for _ in range(steps_per_epoch):
            idx = batch_sample_spaced(
                dataset, bsz, cfg.delta_min, seed=_derive(cfg.seed, "student-batch", step)
            )
            win = windows[idx]
            l_act, l_con, total, grads = student_batch_loss(
                student,
                teacher if with_distillation else None,
                rgb[win],
                goals[win],
                labels[idx],
                depth[idx] if with_distillation else None,
                goals[idx] if with_distillation else None,
                cfg.lambda0,
                lam1,
                cfg.tau,
            )
            if not math.isfinite(total):
                raise NonFiniteGradientError(f"student loss non-finite at step {step}")
            adam.step(params, grads)
            trace.append((step, epoch, l_act, l_con, lam1, total))
            step += 1
        if (epoch + 1) in checkpoint_epochs:
            checkpoints[epoch + 1] = student.snapshot()
    return student, trace, checkpoints


def _derive(seed: int, *tags) -> int:
    """Stable child seed for a named purpose."""
    rng = seeded_rng(seed, *tags)
    return int(rng.integers(0, 2**63 - 1))


class TeacherPolicy:
    """Rollout/eval adapter around a TeacherNet (consumes omni depth)."""

    needs = "depth"

    def __init__(self, net: TeacherNet):
        self.net = net

    def reset(self) -> None:
        pass

    def __call__(self, t, pose, obs, goal_rel) -> Action:
        _, act, _ = self.net.forward(obs.depth[None], np.array([goal_rel], dtype=np.float64))
        return Action(float(act[0, 0]), float(act[0, 1]), float(act[0, 2]))

    def predict_batch(self, dataset: Dataset, idx: np.ndarray) -> np.ndarray:
        _, act, _ = self.net.forward(
            dataset.depth[idx].astype(np.float64), dataset.goals[idx].astype(np.float64)
        )
        return act

    def embed_batch(self, dataset: Dataset, idx: np.ndarray) -> np.ndarray:
        z1, _, _ = self.net.forward(
            dataset.depth[idx].astype(np.float64), dataset.goals[idx].astype(np.float64)
        )
        return z1

    def embed_window(self, obs_window, goal_window) -> np.ndarray:
        z1, _, _ = self.net.forward(
            obs_window[-1].depth[None], np.array([goal_window[-1]], dtype=np.float64)
        )
        return z1[0]


class StudentPolicy:
    """Rollout/eval adapter around a StudentNet (single-camera color sequence).

    Keeps a rolling window of the last seq_len frames during rollouts; the
    first frame is repeated while the window fills.
    """

    needs = "rgb"

    def __init__(self, net: StudentNet):
        self.net = net
        self._frames: list[tuple[np.ndarray, tuple[float, float]]] = []

    def reset(self) -> None:
        self._frames = []

    def _window(self) -> tuple[np.ndarray, np.ndarray]:
        sl = self.net.cfg.seq_len
        frames = self._frames[-sl:]
        while len(frames) < sl:
            frames = [frames[0]] + frames
        rgb = np.stack([f[0] for f in frames])[None]
        goal = np.array([[f[1] for f in frames]], dtype=np.float64)
        return rgb, goal

    def __call__(self, t, pose, obs, goal_rel) -> Action:
        cam = self.net.cfg.student_camera
        self._frames.append((obs.rgb[cam].astype(np.float64), tuple(goal_rel)))
        rgb, goal = self._window()
        _, act, _ = self.net.forward(rgb, goal)
        return Action(float(act[0, 0]), float(act[0, 1]), float(act[0, 2]))

    def _batch_inputs(self, dataset: Dataset, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cam = self.net.cfg.student_camera
        win = dataset.window_indices(self.net.cfg.seq_len)[idx]
        rgb = dataset.rgb[:, cam].astype(np.float64)[win]
        goal = dataset.goals.astype(np.float64)[win]
        return rgb, goal

    def predict_batch(self, dataset: Dataset, idx: np.ndarray) -> np.ndarray:
        rgb, goal = self._batch_inputs(dataset, idx)
        _, act, _ = self.net.forward(rgb, goal)
        return act

    def embed_batch(self, dataset: Dataset, idx: np.ndarray) -> np.ndarray:
        rgb, goal = self._batch_inputs(dataset, idx)
        z2, _, _ = self.net.forward(rgb, goal)
        return z2

    def embed_window(self, obs_window, goal_window) -> np.ndarray:
        cam = self.net.cfg.student_camera
        rgb = np.stack([o.rgb[cam].astype(np.float64) for o in obs_window])[None]
        goal = np.array([goal_window], dtype=np.float64)
        z2, _, _ = self.net.forward(rgb, goal)
        return z2[0]


@dataclass
class WorldContext:
    """Everything data collection needs: scenes, skins, dynamics, sensing, expert."""

    scenes: list[tuple[int, SceneLayout]]
    skins: list
    sim_cfg: SimConfig
    rig: CameraRig
    expert_cfg: ExpertConfig = field(default_factory=ExpertConfig)

    def sample_start(self, layout: SceneLayout, rng: np.random.Generator):
        from .sim import Pose, _MIN_START_GOAL_DIST, _ENDPOINT_CLEARANCE

        centers, radii, _ = layout.obstacle_arrays()
        for _ in range(500):
            p = sample_clear_point(
                rng, layout.arena_half_extent, centers, radii, _ENDPOINT_CLEARANCE
            )
            gx, gy = layout.goal.position(0.0)
            if math.hypot(p[0] - gx, p[1] - gy) >= _MIN_START_GOAL_DIST:
                return Pose(p[0], p[1], float(rng.uniform(-math.pi, math.pi)))
        raise SpacingInfeasibleError("could not sample an episode start away from the goal")


def collect_expert_episodes(
    ctx: WorldContext, episodes: int, seed: int
) -> list[tuple[int, EpisodeRecord]]:
    """Expert-driven episodes rotating over (scene, skin) pairs with sampled starts."""
    out = []
    for ep in range(episodes):
        scene_id, layout = ctx.scenes[ep % len(ctx.scenes)]
        skin = ctx.skins[(ep // len(ctx.scenes)) % len(ctx.skins)]
        rng = seeded_rng(seed, "collect", ep)
        start = ctx.sample_start(layout, rng)
        expert = ExpertPolicy(layout, ctx.expert_cfg, ctx.sim_cfg)
        rec = rollout(None, layout, skin, expert, ctx.sim_cfg, ctx.rig, start=start)
        out.append((scene_id, rec))
    return out


def dagger_collect(
    student: StudentNet,
    ctx: WorldContext,
    beta: float,
    episodes: int,
    seed: int,
) -> list[tuple[int, EpisodeRecord]]:
    """Roll the student/expert mixture, always labeling with the expert.

    Each step executes the expert action with probability beta, the student's
    otherwise; the stored expert_action is the label in either case.
    """
    if not (0.0 <= beta <= 1.0):
        raise RangeError("beta must lie in [0, 1]")
    out = []
    for ep in range(episodes):
        scene_id, layout = ctx.scenes[ep % len(ctx.scenes)]
        skin = ctx.skins[(ep // len(ctx.scenes)) % len(ctx.skins)]
        rng = seeded_rng(seed, "dagger", ep)
        start = ctx.sample_start(layout, rng)
        expert = ExpertPolicy(layout, ctx.expert_cfg, ctx.sim_cfg)
        policy = StudentPolicy(student)
        rec = rollout(
            policy, layout, skin, expert, ctx.sim_cfg, ctx.rig,
            beta=beta, rng=rng, start=start,
        )
        out.append((scene_id, rec))
    return out


def train_student_with_dagger(
    dataset: Dataset,
    teacher: TeacherNet | None,
    cfg: TrainConfig,
    net_cfg: NetConfig,
    with_distillation: bool = True,
    ctx: WorldContext | None = None,
    checkpoint_epochs: tuple[int, ...] = (),
) -> tuple[StudentNet, list[tuple], Dataset, dict[int, dict[str, np.ndarray]]]:
    """Interleave student training with mixture-policy data aggregation.

    Runs cfg.dagger_iterations rounds of (train, collect with beta_i, append),
    then a final training pass on the aggregate. With zero iterations this is
    plain behavior cloning plus distillation on the initial dataset.
    """
    betas = cfg.betas()
    if betas and ctx is None:
        raise ConfigError("dagger_iterations > 0 needs a WorldContext to collect episodes")
    student: StudentNet | None = None
    trace: list[tuple] = []
    data = dataset
    for i, beta in enumerate(betas):
        student, t, _ = train_student(
            data, teacher, cfg, net_cfg, with_distillation, init_net=student
        )
        trace += t
        new = dagger_collect(student, ctx, beta, cfg.dagger_episodes, _derive(cfg.seed, "dagger-round", i))
        data = data.concat(Dataset.from_episodes(new, net_cfg.rays_per_camera, net_cfg.cameras))
    student, t, ckpts = train_student(
        data, teacher, cfg, net_cfg, with_distillation,
        init_net=student, checkpoint_epochs=checkpoint_epochs,
    )
    trace += t
    return student, trace, data, ckpts
