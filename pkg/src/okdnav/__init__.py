"""Omni-view cross-modality distillation for 2D visuomotor navigation."""

from .config import ExperimentConfig, parse_config
from .dataio import Dataset, SceneSuite, load_suite, load_weights, save_suite, save_weights
from .distill import (
    NetConfig,
    StudentNet,
    StudentPolicy,
    TeacherNet,
    TeacherPolicy,
    TrainConfig,
    WorldContext,
    batch_sample_spaced,
    cosine_similarity,
    dagger_collect,
    infonce_loss,
    lambda1_schedule,
    train_student,
    train_student_with_dagger,
    train_teacher,
)
from .evaluation import (
    action_error,
    embedding_similarity,
    export_embeddings,
    probes_from_expert,
    run_benchmark,
)
from .expert import ExpertConfig, ExpertPolicy, expert_action
from .sim import (
    Action,
    AppearanceSkin,
    CameraRig,
    EpisodeRecord,
    GoalSpec,
    Observation,
    ObstacleSpec,
    Pose,
    SceneLayout,
    SimConfig,
    generate_scene,
    goal_local,
    make_skin,
    raycast,
    reward,
    rollout,
    step_dynamics,
)

__version__ = "0.1.0"
