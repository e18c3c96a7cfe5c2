"""epic: defend training against targeted clean-label data poisoning.

The defense trains normally for a warmup period, then periodically
selects per-class medoids of the per-example gradient space via greedy
facility-location maximization and permanently drops the medoids no
other example is assigned to. Isolated gradient outliers are where
effective poisons live; dropping them barely perturbs the full training
gradient, which keeps training dynamics close to training on all data.
"""

from .attacks import AttackResult, AttackSpec, VictimConfig, craft, evaluate_attack, find_effective_subset
from .convergence import (
    BoundCheck,
    DropPerturbation,
    PLCertificate,
    PLViolation,
    QuadraticBowl,
    certify_pl_analytic,
    certify_pl_empirical,
    check_decay_bound,
    measure_drop_perturbation,
    run_quadratic_gd,
)
from .data import DatasetState, DropRecord, make_blobs, plant_outliers
from .defense import (
    ClassRound,
    CosineTrace,
    DefenseConfig,
    RoundReport,
    cluster_histogram,
    cosine_alignment_trace,
    elimination_round,
    medoid_budget,
)
from .errors import (
    ClassExhausted,
    ConfigError,
    DegenerateBudget,
    DegenerateTarget,
    EpicError,
    FileFormatError,
    InstanceTooLarge,
    InvalidInput,
    InvalidSurface,
    NoEffectiveSubset,
    NumericalDivergence,
    OutOfRegime,
)
from .facility import (
    FacilityObjective,
    MedoidSelection,
    assign_and_count,
    brute_force_optimum,
    evaluate,
    greedy_select,
)
from .models import LrSchedule, ToyModel, accuracy, extract_proxies, gd_step, loss_and_grad
from .proxies import (
    DistanceOracle,
    ProxyMatrix,
    class_residual_proxy,
    last_layer_full_proxy,
    pairwise_distance,
    softmax,
)
from .experiments import run_experiment, validate_config
from .report import canonical_json, export_series, strip_timings
from .rng import Rng, SplitMix64, derive_seed
from .training import (
    BatchMode,
    Instrumentation,
    TrainTrace,
    run_defense,
    run_random_drop_baseline,
    train,
)

__version__ = "0.1.0"
