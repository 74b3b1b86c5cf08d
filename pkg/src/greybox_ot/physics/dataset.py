"""Dataset generation, on-disk layout and CSV export.

Roles:
  source  {(theta, x0, x)}      x = S_fp(x0, theta), counted against budget
  target  {y}                   y = S_fc with independent prior draws
  test    {(theta, x0, x, {y_j})}  shared (x0, theta); M latent draws

Source and target use independent seed streams derived from (seed, role),
so the two sides are unpaired by construction.  Generation is a pure
function of (task, role, n, config, seed): per-record seeds are derived
ahead of time, and worker threads only split the record range into chunks,
merged back in index order.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..diffengine import load_arrays, save_arrays
from ..utils import fingerprint, get_threads, read_json, write_json
from .priors import default_dgp, sample_latent, sample_prior
from .simulators import (BudgetMeter, advdiff_batch, pendulum_batch,
                         reactdiff_batch)
from .tasks import TaskSpec, get_task

_ROLE_CODE = {"source": 1, "target": 2, "test": 3}

FORMAT_NAME = "greybox-ot-dataset"
FORMAT_VERSION = 1

# Interpretation recorded in every advdiff manifest: 50 recorded steps of
# dt=0.02 (final time 1.0); the stated step count and final time in the
# task description cannot both hold.
ADVDIFF_TIME_NOTE = ("advdiff time grid: 50 records of dt=0.02, final time "
                     "1.0 (stated step count and horizon are inconsistent; "
                     "step size and record count win)")


@dataclass
class Dataset:
    task: str
    role: str
    n: int
    seed: int
    config: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    budget_used: int = 0

    @property
    def m_draws(self) -> int:
        return int(self.config.get("m_draws", 1))

    def spec(self) -> TaskSpec:
        return get_task(self.task, grid=self.config.get("grid"))

    def theta_matrix(self) -> np.ndarray:
        spec = self.spec()
        cols = [self.arrays[f"theta.{name}"] for name in spec.theta_names]
        return np.column_stack(cols)


def default_m(dgp: dict) -> int:
    kind = dgp.get("kind", "fixed")
    if kind == "fixed":
        return 1
    if kind == "two_point":
        return 2
    return 2


def _simulate_batch(spec, role_complete, x0, theta, latent, meter, lane,
                    method="rk4"):
    if spec.name == "pendulum":
        return pendulum_batch(x0[:, 0], x0[:, 1], theta["omega"], latent,
                              complete=role_complete, meter=meter, lane=lane,
                              spec=spec)
    if spec.name == "advdiff":
        return advdiff_batch(x0, theta["alpha"], latent,
                             complete=role_complete, method=method,
                             meter=meter, lane=lane, spec=spec)
    if spec.name == "reactdiff":
        return reactdiff_batch(x0, theta["a"], theta["b"], latent,
                               complete=role_complete, meter=meter, lane=lane,
                               spec=spec)
    raise ValueError(f"unknown task {spec.name!r}")


def _draw_records(spec, seeds, dgp, m):
    """Per-record prior draws from per-record seed sequences."""
    n = len(seeds)
    x0 = np.empty((n,) + ((2,) if spec.name == "pendulum" else spec.state_shape))
    theta = {name: np.empty(n) for name in spec.theta_names}
    latents = np.empty((n, m))
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        state, th = sample_prior(spec, rng, 1, spec=spec)
        x0[i] = state[0]
        for name in spec.theta_names:
            theta[name][i] = th[name][0]
        if dgp.get("kind") == "two_point" and m == len(dgp["values"]):
            latents[i] = np.asarray(dgp["values"], dtype=np.float64)
        else:
            latents[i] = sample_latent(dgp, spec, rng, m)
    return x0, theta, latents


def make_dataset(task, role, n, dgp=None, seed=0, m_draws=None, grid=None,
                 lane=None, threads=None) -> Dataset:
    """Generate one dataset deterministically from (task, role, n, cfg, seed)."""
    if role not in _ROLE_CODE:
        raise ValueError(f"unknown role {role!r}")
    spec = get_task(task, grid=grid)
    dgp = dict(dgp) if dgp else default_dgp(spec)
    m = int(m_draws) if m_draws else (default_m(dgp) if role == "test" else 1)
    config = {"dgp": dgp, "m_draws": m}
    if task == "reactdiff":
        config["grid"] = spec.extra["grid"]

    root = np.random.SeedSequence([int(seed), _ROLE_CODE[role]])
    seeds = root.spawn(n)
    meter = BudgetMeter()
    threads = threads if threads is not None else get_threads()

    def gen_chunk(lo, hi):
        x0, theta, latents = _draw_records(spec, seeds[lo:hi], dgp, m)
        out = {}
        if role in ("source", "test"):
            out["x"] = _simulate_batch(spec, False, x0, theta, None, meter, lane)
        if role == "target":
            y = _simulate_batch(spec, True, x0, theta, latents[:, 0], meter, lane)
            out["y"] = y
        if role == "test":
            ys = []
            for j in range(m):
                ys.append(_simulate_batch(spec, True, x0, theta,
                                          latents[:, j], meter, lane))
            out["y"] = np.stack(ys, axis=1)
        out["x0"] = x0
        for name in spec.theta_names:
            out[f"theta.{name}"] = theta[name]
        out["latent"] = latents
        return out

    if n == 0:
        chunks = []
    elif threads <= 1:
        chunks = [gen_chunk(0, n)]
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        spans = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda s: gen_chunk(*s), spans))

    arrays = {}
    if chunks:
        for key in chunks[0]:
            arrays[key] = np.concatenate([c[key] for c in chunks], axis=0)
    else:
        arrays["x0"] = np.empty((0,) + ((2,) if spec.name == "pendulum" else spec.state_shape))
        for name in spec.theta_names:
            arrays[f"theta.{name}"] = np.empty(0)
        arrays["latent"] = np.empty((0, m))

    return Dataset(task=task, role=role, n=n, seed=int(seed), config=config,
                   arrays=arrays, budget_used=meter.used)


# ---------------------------------------------------------------------------
# on-disk layout: <dir>/manifest.json + <dir>/blocks.bin
# ---------------------------------------------------------------------------

def save_dataset(ds: Dataset, path):
    os.makedirs(path, exist_ok=True)
    spec = ds.spec()
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "task": ds.task,
        "role": ds.role,
        "n": ds.n,
        "seed": ds.seed,
        "config": ds.config,
        "budget_used": ds.budget_used,
        "prior_ranges": {name: list(rng) for name, rng
                         in zip(spec.theta_names, spec.theta_ranges)},
        "arrays": {k: list(v.shape) for k, v in sorted(ds.arrays.items())},
        "fingerprint": dataset_fingerprint(ds),
    }
    if ds.task == "advdiff":
        manifest["notes"] = [ADVDIFF_TIME_NOTE]
    write_json(os.path.join(path, "manifest.json"), manifest)
    save_arrays(os.path.join(path, "blocks.bin"), ds.arrays)


def dataset_fingerprint(ds: Dataset) -> str:
    return fingerprint({"task": ds.task, "role": ds.role, "n": ds.n,
                        "seed": ds.seed, "config": ds.config})


def load_dataset(path) -> Dataset:
    manifest = read_json(os.path.join(path, "manifest.json"))
    if manifest.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a dataset directory")
    if manifest.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dataset version")
    arrays = load_arrays(os.path.join(path, "blocks.bin"))
    return Dataset(task=manifest["task"], role=manifest["role"],
                   n=manifest["n"], seed=manifest["seed"],
                   config=manifest["config"], arrays=arrays,
                   budget_used=manifest["budget_used"])


def trajectory_to_csv(ds: Dataset, index, path, which=None):
    """Write one record as CSV: one row per recorded step."""
    which = which or ("y" if ds.role == "target" else "x")
    arr = ds.arrays[which]
    traj = arr[index]
    if which == "y" and ds.role == "test":
        traj = traj[0]
    flat = traj.reshape(traj.shape[0], -1)
    spec = ds.spec()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"s{i}" for i in range(flat.shape[1])])
        for r in range(flat.shape[0]):
            t = spec.dt_record * (r + 1)
            writer.writerow([f"{t:.10g}"] + [f"{v:.17g}" for v in flat[r]])
