"""Metrics and experiment protocols: action error, navigation benchmark,
cross-skin embedding similarity, and raw embedding export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset, fmt_float
from .distill import cosine_similarity
from .errors import ModalityError, RenderFromCollisionError, ZeroNormError
from .expert import ExpertConfig, ExpertPolicy
from .sim import (
    AppearanceSkin,
    CameraRig,
    Pose,
    SceneLayout,
    SimConfig,
    goal_local,
    point_in_collision,
    raycast,
    rollout,
    seeded_rng,
)


@dataclass
class BenchmarkReport:
    sr: float
    md_mean: float
    md_std: float
    episodes: int
    outcomes: list[str] = field(default_factory=list)
    moving_distances: list[float] = field(default_factory=list)


@dataclass
class SimilarityReport:
    mu: float
    # (skin_i, skin_j, probe_index) -> similarity, probe-major within a pair
    series: list[tuple[int, int, int, float]] = field(default_factory=list)
    pair_means: dict[tuple[int, int], float] = field(default_factory=dict)


def action_error(policy, dataset: Dataset, indices: np.ndarray | None = None) -> float:
    """Mean Euclidean distance between policy outputs and stored expert labels."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    needs = getattr(policy, "needs", None)
    if needs is not None and needs not in getattr(dataset, "modalities", {"depth", "rgb"}):
        raise ModalityError(f"dataset lacks the {needs!r} modality")
    idx = np.arange(len(dataset)) if indices is None else np.asarray(indices)
    preds = policy.predict_batch(dataset, idx)
    labels = dataset.expert_actions[idx].astype(np.float64)
    return float(np.mean(np.linalg.norm(preds - labels, axis=1)))


def run_benchmark(
    policy,
    pairs: list[tuple[SceneLayout, AppearanceSkin]],
    episodes_per_scene: int,
    seed: int,
    sim_cfg: SimConfig,
    rig: CameraRig,
    expert_cfg: ExpertConfig | None = None,
) -> BenchmarkReport:
    """SR and moving-distance statistics over seeded episodes on a scene suite.

    Episode starts are sampled per (pair, episode) from the seed, so identical
    seeds reproduce identical reports for deterministic policies.
    """
    if not pairs:
        raise ValueError("benchmark suite is empty")
    from .distill import WorldContext  # local import to avoid a cycle at module load

    expert_cfg = expert_cfg or ExpertConfig()
    outcomes: list[str] = []
    dists: list[float] = []
    for pair_idx, (layout, skin) in enumerate(pairs):
        ctx = WorldContext([(pair_idx, layout)], [skin], sim_cfg, rig, expert_cfg)
        for ep in range(episodes_per_scene):
            rng = seeded_rng(seed, "benchmark", pair_idx, ep)
            start = ctx.sample_start(layout, rng)
            expert = ExpertPolicy(layout, expert_cfg, sim_cfg)
            try:
                rec = rollout(policy, layout, skin, expert, sim_cfg, rig, start=start)
            except Exception as exc:
                raise type(exc)(f"episode {ep} on suite pair {pair_idx}: {exc}") from exc
            outcomes.append(rec.outcome)
            dists.append(rec.moving_distance)
    n = len(outcomes)
    sr = sum(1 for o in outcomes if o == "success") / n
    md = np.asarray(dists)
    return BenchmarkReport(
        sr=float(sr),
        md_mean=float(md.mean()),
        md_std=float(md.std()),
        episodes=n,
        outcomes=outcomes,
        moving_distances=[float(d) for d in dists],
    )


@dataclass(frozen=True)
class Probe:
    """A probe point with its trailing pose/goal window (window length = seq_len)."""

    poses: tuple[Pose, ...]
    goals: tuple[tuple[float, float], ...]


def probes_from_expert(
    layout: SceneLayout,
    canonical_skin: AppearanceSkin,
    sim_cfg: SimConfig,
    rig: CameraRig,
    expert_cfg: ExpertConfig | None = None,
    stride: int = 5,
    window: int = 5,
    max_probes: int = 200,
) -> list[Probe]:
    """Probe windows along an expert rollout on the canonical skin.

    The trajectory is subsampled every `stride` steps; each probe carries the
    trailing `window` poses and local goals (first frame repeated at the start).
    """
    expert = ExpertPolicy(layout, expert_cfg or ExpertConfig(), sim_cfg)
    rec = rollout(None, layout, canonical_skin, expert, sim_cfg, rig)
    tuples = rec.tuples
    probes: list[Probe] = []
    for i in range(0, len(tuples), stride):
        lo = max(0, i - window + 1)
        seq = tuples[lo : i + 1]
        while len(seq) < window:
            seq = [seq[0]] + seq
        probes.append(
            Probe(
                poses=tuple(s.pose for s in seq),
                goals=tuple(s.goal_local for s in seq),
            )
        )
        if len(probes) >= max_probes:
            break
    return probes


def embedding_similarity(
    embed_fn,
    layout: SceneLayout,
    skins: list[AppearanceSkin],
    probes: list[Probe],
    sim_cfg: SimConfig,
    rig: CameraRig,
) -> SimilarityReport:
    """Cosine similarity of embeddings across renderings of the same probes.

    For every unordered skin pair and probe, the probe window is rendered under
    both skins and fed to `embed_fn(obs_window, goal_window)`; mu is the grand
    mean over all pairs and probes.
    """
    if len(skins) < 2:
        raise ValueError("need at least two skins")
    if not probes:
        raise ValueError("need at least one probe")
    for p in probes:
        for pose in p.poses:
            if point_in_collision(pose.x, pose.y, layout, 0.0):
                raise RenderFromCollisionError(
                    f"probe pose ({pose.x:.3f}, {pose.y:.3f}) is not collision-free"
                )

    embeddings: list[list[np.ndarray]] = []
    for s_idx, skin in enumerate(skins):
        per_skin = []
        for p_idx, probe in enumerate(probes):
            obs_window = [raycast(layout, skin, pose, rig, sim_cfg) for pose in probe.poses]
            z = embed_fn(obs_window, list(probe.goals))
            if float(np.linalg.norm(z)) == 0.0:
                raise ZeroNormError(f"zero embedding at probe {p_idx} under skin {s_idx}")
            per_skin.append(np.asarray(z, dtype=np.float64))
        embeddings.append(per_skin)

    series: list[tuple[int, int, int, float]] = []
    pair_means: dict[tuple[int, int], float] = {}
    all_sims: list[float] = []
    for i in range(len(skins)):
        for j in range(i + 1, len(skins)):
            sims = [
                cosine_similarity(embeddings[i][k], embeddings[j][k]) for k in range(len(probes))
            ]
            for k, s in enumerate(sims):
                series.append((i, j, k, float(s)))
            pair_means[(i, j)] = float(np.mean(sims))
            all_sims += sims
    return SimilarityReport(mu=float(np.mean(all_sims)), series=series, pair_means=pair_means)


def export_embeddings(policy, dataset: Dataset, path) -> int:
    """Write one CSV row (scene_id, step, x, y, psi, e0..e{E-1}) per dataset row.

    Values are written in shortest round-trip decimal form, so reloading the
    file recovers the in-memory embeddings exactly. Returns the row count.
    """
    n = len(dataset)
    if n > 0:
        emb = policy.embed_batch(dataset, np.arange(n))
        width = emb.shape[1]
    else:
        emb = np.zeros((0, 0))
        width = 0
    header = ["scene_id", "step", "x", "y", "psi"] + [f"e{i}" for i in range(width)]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i in range(n):
            pose = dataset.poses[i]
            row = [
                str(int(dataset.scene_ids[i])),
                str(int(dataset.steps[i])),
                fmt_float(pose[0]),
                fmt_float(pose[1]),
                fmt_float(pose[2]),
            ] + [fmt_float(v) for v in emb[i]]
            w.writerow(row)
    return n


def recompute_benchmark(records: list, sim_cfg: SimConfig, layouts: list[SceneLayout]) -> tuple[float, float]:
    """Independent SR/MD recomputation from stored episode tuples.

    Success is re-derived from the final post-step pose, moving distance from
    consecutive tuple poses plus a re-integration of the final step.
    """
    from .sim import step_dynamics

    succ = 0
    dists = []
    for rec, layout in zip(records, layouts):
        d = 0.0
        for a, b in zip(rec.tuples, rec.tuples[1:]):
            d += math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y)
        if rec.tuples:
            last = rec.tuples[-1]
            post, collided = step_dynamics(
                last.pose, last.executed_action, sim_cfg.dt, layout, sim_cfg.robot_radius
            )
            d += math.hypot(post.x - last.pose.x, post.y - last.pose.y)
            gx, gy = layout.goal.position((last.t + 1) * sim_cfg.dt)
            if not collided and math.hypot(gx - post.x, gy - post.y) <= sim_cfg.success_dist:
                succ += 1
        dists.append(d)
    return succ / len(records), float(np.mean(dists))
