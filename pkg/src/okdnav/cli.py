"""Command-line entry points: gen-scenes, collect, train-teacher,
train-student, eval, embed-sim.

Each command reads one ExperimentConfig, writes only under the output
directory, and echoes the effective config there for provenance. Exit codes:
0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluation
from .config import ExperimentConfig, format_config, parse_config
from .dataio import (
    Dataset,
    SceneSpec,
    SceneSuite,
    SkinSpec,
    load_suite,
    load_weights,
    save_suite,
    save_weights,
    write_csv,
)
from .distill import (
    StudentNet,
    StudentPolicy,
    TeacherNet,
    TeacherPolicy,
    WorldContext,
    collect_expert_episodes,
    train_student_with_dagger,
    train_teacher,
)
from .errors import ConfigError, MissingArtifactError
from .evaluation import action_error, embedding_similarity, probes_from_expert, run_benchmark
from .sim import episode_total_reward, seeded_rng

COMMANDS = ("gen-scenes", "collect", "train-teacher", "train-student", "eval", "embed-sim")


def _out(cfg: ExperimentConfig, name: str) -> str:
    return name if os.path.isabs(name) else os.path.join(cfg.out_dir, name)


def _echo_config(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config_used.cfg"), "w", encoding="utf-8") as f:
        f.write(format_config(cfg))


def _require(path: str, producer: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing {path}; produce it with `okdnav {producer}`")
    return path


def _load_suite_ctx(cfg: ExperimentConfig, skins_role: str) -> WorldContext:
    suite = load_suite(_require(_out(cfg, cfg.suite_path), "gen-scenes"))
    scenes = [
        (i, spec.build(suite.arena_half_extent, cfg.r_clear))
        for i, spec in enumerate(suite.scenes)
    ]
    specs = suite.train_skins() if skins_role == "train" else suite.test_skins()
    if not specs:
        raise MissingArtifactError(f"suite lists no {skins_role} skins; rerun `okdnav gen-scenes`")
    skins = [s.build() for s in specs]
    return WorldContext(scenes, skins, cfg.sim_cfg(), cfg.rig(), cfg.expert_cfg())


def cmd_gen_scenes(cfg: ExperimentConfig) -> str:
    """Write the scene suite (layout and skin recipes) as structured text."""
    suite = SceneSuite(arena_half_extent=cfg.arena_half_extent)
    for i in range(cfg.scene_count):
        suite.scenes.append(
            SceneSpec(
                seed=cfg.scene_seed_base + i,
                density=cfg.densities[i % len(cfg.densities)],
                min_obstacles=cfg.min_obstacles,
                max_obstacles=cfg.max_obstacles,
                goal_kind=cfg.goal_kind,
                orbit_radius=cfg.orbit_radius,
                angular_speed=cfg.angular_speed,
            )
        )
    for i in range(cfg.train_skin_count):
        suite.skins.append(SkinSpec(seed=cfg.skin_seed_base + i, role="train"))
    for i in range(cfg.test_skin_count):
        suite.skins.append(SkinSpec(seed=cfg.skin_seed_base + 1000 + i, role="test"))
    # Fail now rather than at collect time if any layout cannot be sampled.
    for spec in suite.scenes:
        spec.build(cfg.arena_half_extent, cfg.r_clear)
    path = _out(cfg, cfg.suite_path)
    save_suite(path, suite)
    return path


def cmd_collect(cfg: ExperimentConfig) -> str:
    """Roll the expert over train skins and write the OKD1 dataset."""
    ctx = _load_suite_ctx(cfg, "train")
    episodes = collect_expert_episodes(ctx, cfg.collect_episodes, cfg.seed)

    rows = []
    layouts = {i: layout for i, layout in ctx.scenes}
    for scene_id, rec in episodes:
        rows.append(
            [
                scene_id,
                rec.outcome,
                len(rec.tuples),
                float(rec.moving_distance),
                float(
                    episode_total_reward(
                        rec, layouts[scene_id], cfg.sim_cfg(), cfg.reward_alpha
                    )
                ),
            ]
        )
    write_csv(
        _out(cfg, "episodes.csv"),
        ["scene_id", "outcome", "steps", "moving_distance", "total_reward"],
        rows,
    )

    data = Dataset.from_episodes(episodes, cfg.rays_per_camera)
    if cfg.max_tuples > 0 and len(data) > cfg.max_tuples:
        data = Dataset(data.records[: cfg.max_tuples], cfg.rays_per_camera)
    path = _out(cfg, cfg.dataset_path)
    data.save(path)
    return path


def cmd_train_teacher(cfg: ExperimentConfig) -> str:
    data = Dataset.load(_require(_out(cfg, cfg.dataset_path), "collect"))
    ckpt_epochs = _checkpoint_epochs(cfg.checkpoint_every, cfg.teacher_epochs)
    net, trace, ckpts = train_teacher(data, cfg.train_cfg("teacher"), cfg.net_cfg(), ckpt_epochs)
    path = _out(cfg, cfg.teacher_weights)
    save_weights(path, net.params())
    for epoch, snap in ckpts.items():
        save_weights(_out(cfg, f"teacher_ep{epoch}.okw"), snap)
    _write_trace(_out(cfg, "teacher_loss.csv"), trace)
    return path


def cmd_train_student(cfg: ExperimentConfig, with_distillation: bool = True) -> str:
    data = Dataset.load(_require(_out(cfg, cfg.dataset_path), "collect"))
    teacher = None
    if with_distillation:
        teacher = TeacherNet(cfg.net_cfg(), seed=0)
        teacher.load_params(
            load_weights(
                _require(_out(cfg, cfg.teacher_weights), "train-teacher"),
                teacher.param_shapes(),
            )
        )
    ctx = _load_suite_ctx(cfg, "train") if cfg.dagger_iterations > 0 else None
    ckpt_epochs = _checkpoint_epochs(cfg.checkpoint_every, cfg.student_epochs)
    student, trace, _, ckpts = train_student_with_dagger(
        data, teacher, cfg.train_cfg("student"), cfg.net_cfg(),
        with_distillation=with_distillation, ctx=ctx, checkpoint_epochs=ckpt_epochs,
    )
    name = cfg.student_weights if with_distillation else cfg.student_nodistill_weights
    path = _out(cfg, name)
    save_weights(path, student.params())
    stem = "student" if with_distillation else "student_nodistill"
    for epoch, snap in ckpts.items():
        save_weights(_out(cfg, f"{stem}_ep{epoch}.okw"), snap)
    _write_trace(_out(cfg, f"{stem}_loss.csv"), trace)
    return path


def _checkpoint_epochs(every: int, total: int) -> tuple[int, ...]:
    if every <= 0:
        return ()
    return tuple(range(every, total + 1, every))


def _write_trace(path: str, trace: list[tuple]) -> None:
    rows = [[s, e, float(a), float(c), float(l1), float(t)] for s, e, a, c, l1, t in trace]
    write_csv(path, ["step", "epoch", "l_act", "l_con", "lambda1", "total"], rows)


def _available_policies(cfg: ExperimentConfig) -> list[tuple[str, object]]:
    """(name, policy) for every weights file present in the output directory."""
    out: list[tuple[str, object]] = []
    net_cfg = cfg.net_cfg()
    teacher_path = _out(cfg, cfg.teacher_weights)
    if os.path.exists(teacher_path):
        net = TeacherNet(net_cfg, seed=0)
        net.load_params(load_weights(teacher_path, net.param_shapes()))
        out.append(("teacher", TeacherPolicy(net)))
    for name, fname in (
        ("student", cfg.student_weights),
        ("student_nodistill", cfg.student_nodistill_weights),
    ):
        path = _out(cfg, fname)
        if os.path.exists(path):
            net = StudentNet(net_cfg, seed=0)
            net.load_params(load_weights(path, net.param_shapes()))
            out.append((name, StudentPolicy(net)))
    if not out:
        raise MissingArtifactError(
            "no weights found; produce them with `okdnav train-teacher` / `okdnav train-student`"
        )
    return out


def build_test_dataset(cfg: ExperimentConfig) -> Dataset:
    """Held-out evaluation set: expert episodes on test skins with fresh starts."""
    ctx = _load_suite_ctx(cfg, "test")
    test_seed = int(seeded_rng(cfg.seed, "test-collect").integers(0, 2**62))
    episodes = collect_expert_episodes(ctx, cfg.test_episodes, test_seed)
    return Dataset.from_episodes(episodes, cfg.rays_per_camera)


def cmd_eval(cfg: ExperimentConfig) -> str:
    """Per-policy action error (train and held-out skins) and SR/MD benchmark."""
    train_data = Dataset.load(_require(_out(cfg, cfg.dataset_path), "collect"))
    policies = _available_policies(cfg)
    test_data = build_test_dataset(cfg)
    ctx = _load_suite_ctx(cfg, "test")
    pairs = [
        (layout, skin)
        for _, layout in ctx.scenes
        for skin in ctx.skins
    ]

    rows = []
    summary = []
    for name, policy in policies:
        ae_train = action_error(policy, train_data)
        ae_test = action_error(policy, test_data)
        report = run_benchmark(
            policy, pairs, cfg.eval_episodes_per_scene, cfg.seed,
            cfg.sim_cfg(), cfg.rig(), cfg.expert_cfg(),
        )
        rows.append(
            [name, float(ae_train), float(ae_test), float(report.sr),
             float(report.md_mean), float(report.md_std), report.episodes]
        )
        summary.append(
            f"{name}: ae_train={ae_train:.6f} ae_test={ae_test:.6f} "
            f"sr={report.sr:.3f} md={report.md_mean:.3f}+/-{report.md_std:.3f} "
            f"({report.episodes} episodes)"
        )
    path = _out(cfg, "metrics.csv")
    write_csv(
        path,
        ["policy", "ae_train", "ae_test", "sr", "md_mean", "md_std", "episodes"],
        rows,
    )
    with open(_out(cfg, "metrics_summary.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(summary) + "\n")
    return path


def cmd_embed_sim(cfg: ExperimentConfig) -> str:
    """Cross-skin embedding similarity per policy encoder over probe windows."""
    suite = load_suite(_require(_out(cfg, cfg.suite_path), "gen-scenes"))
    train_ctx = _load_suite_ctx(cfg, "train")
    test_ctx = _load_suite_ctx(cfg, "test")
    policies = _available_policies(cfg)

    layout = train_ctx.scenes[0][1]
    canonical = train_ctx.skins[0]
    skins = [canonical] + test_ctx.skins
    probes = evaluation.probes_from_expert(
        layout, canonical, cfg.sim_cfg(), cfg.rig(), cfg.expert_cfg(),
        stride=cfg.probe_stride, window=cfg.seq_len, max_probes=cfg.max_probes,
    )

    rows = []
    summary = []
    for name, policy in policies:
        report = embedding_similarity(
            policy.embed_window, layout, skins, probes, cfg.sim_cfg(), cfg.rig()
        )
        for (i, j), mu in sorted(report.pair_means.items()):
            rows.append([name, i, j, float(mu)])
        rows.append([name, -1, -1, float(report.mu)])
        summary.append(f"{name}: mean cross-skin similarity mu={report.mu:.6f}")
    path = _out(cfg, "embed_sim.csv")
    write_csv(path, ["encoder", "skin_i", "skin_j", "mean_similarity"], rows)
    with open(_out(cfg, "embed_sim_summary.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(summary) + "\n")
    return path


def run_command(command: str, cfg: ExperimentConfig) -> str:
    """Dispatch one pipeline command; returns the primary artifact path."""
    cfg.validate()
    _echo_config(cfg)
    if command == "gen-scenes":
        return cmd_gen_scenes(cfg)
    if command == "collect":
        return cmd_collect(cfg)
    if command == "train-teacher":
        return cmd_train_teacher(cfg)
    if command == "train-student":
        return cmd_train_student(cfg, with_distillation=True)
    if command == "train-student-nodistill":
        return cmd_train_student(cfg, with_distillation=False)
    if command == "eval":
        return cmd_eval(cfg)
    if command == "embed-sim":
        return cmd_embed_sim(cfg)
    raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        raise ConfigError(message)


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="okdnav", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument(
        "--no-distill", action="store_true",
        help="train-student only: action-only ablation without embedding alignment",
    )
    try:
        args = parser.parse_args(argv)
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.out is not None:
            overrides.append(f"out_dir={args.out}")
        cfg = parse_config(args.config, overrides)
        command = args.command
        if command == "train-student" and args.no_distill:
            command = "train-student-nodistill"
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        artifact = run_command(command, cfg)
        print(artifact)
        return 0
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures: missing artifacts, sim faults, ...
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
