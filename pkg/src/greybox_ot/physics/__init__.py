from .tasks import TaskSpec, get_task, TASKS
from .integrate import Trajectory, integrate
from .simulators import (
    AdvDiffParams,
    BudgetExceeded,
    BudgetMeter,
    PendulumParams,
    ReactDiffParams,
    advdiff_batch,
    advdiff_initial,
    pendulum_batch,
    reactdiff_batch,
    simulate_advdiff,
    simulate_pendulum,
    simulate_reactdiff,
)
from .priors import as_rng, default_dgp, sample_latent, sample_prior
from .dataset import (
    Dataset,
    dataset_fingerprint,
    load_dataset,
    make_dataset,
    save_dataset,
    trajectory_to_csv,
)

__all__ = [
    "TaskSpec", "get_task", "TASKS", "Trajectory", "integrate",
    "AdvDiffParams", "BudgetExceeded", "BudgetMeter", "PendulumParams",
    "ReactDiffParams", "advdiff_batch", "advdiff_initial", "pendulum_batch",
    "reactdiff_batch", "simulate_advdiff", "simulate_pendulum",
    "simulate_reactdiff", "as_rng", "default_dgp", "sample_latent",
    "sample_prior", "Dataset", "dataset_fingerprint", "load_dataset",
    "make_dataset", "save_dataset", "trajectory_to_csv",
]
