"""Adversarial maximin training loop.

Per outer epoch: T_max generator updates, each on a freshly simulated
source batch (charged to the simulation budget), then one critic update on
the last generated batch versus a fresh target batch.  Stops when the
budget cannot cover another generator batch, on max_epochs, or when the
windowed generator loss stops moving.

Artifacts under run_dir: history.csv (one row per generator iteration),
probe.csv (fixed-probe gradient-penalty and transport-cost traces),
checkpoints (binary weights + optimizer state + rng state + manifest).
Identical config + seed reproduces every artifact byte for byte.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffengine as de
from . import transport as tp
from .diffengine import adam_step, load_arrays, save_arrays
from .models import (LatentSpec, critic_from_arch, generator_from_arch,
                     make_critic, make_generator)
from .physics import BudgetMeter, Dataset, get_task, sample_prior
from .physics.dataset import _simulate_batch
from .utils import fingerprint, read_json, write_json

CHECKPOINT_FORMAT = "greybox-ot-checkpoint"
CHECKPOINT_VERSION = 1

HISTORY_COLUMNS = ("iter", "gen_loss", "critic_loss", "cost_term", "penalty",
                   "budget_used")

MODES = ("ot-gb", "ot-bb", "wgan-gb", "wgan-bb")


class NumericFailure(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str
    mode: str
    budget: int
    seed: int = 0
    batch_size: int = 64
    t_max: int = 10
    gamma: float = 0.0
    n_z: int = 1
    lam: float = 1.0
    lr_g: float = 1e-4
    lr_c: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    max_epochs: int | None = None
    convergence_window: int = 500
    convergence_tol: float = 1e-3
    latent: dict | None = None
    emb_dim: int = 8
    hidden: int = 64
    conv_filters: int = 4
    bb_hidden: int = 48
    critic_hidden: tuple = (250, 100, 100, 50)
    grid: int | None = None
    checkpoint_every: int = 0
    probe_size: int = 64
    probe_every: int = 10
    # Polyak averaging of generator iterates (0 = off).  Adam's normalized
    # steps random-walk near the saddle at lr scale; with a fixed learning
    # rate the tail average is the stable iterate, so evaluation prefers it.
    ema_decay: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        spec = LatentSpec.from_config(self.latent)
        if self.gamma > 0:
            if self.n_z < 2:
                raise ValueError("gamma > 0 requires n_z >= 2")
            if spec.kind == "none":
                raise ValueError("gamma > 0 requires a latent specification")
        if self.gamma == 0 and spec.kind != "none" and self.mode.startswith("ot"):
            raise ValueError("deterministic OT mode (gamma = 0) must not use a latent")
        if not (0.0 <= self.ema_decay < 1.0):
            raise ValueError("ema_decay must lie in [0, 1)")

    @property
    def family(self) -> str:
        return self.mode.split("-")[1]

    @property
    def is_wgan(self) -> bool:
        return self.mode.startswith("wgan")

    def latent_spec(self) -> LatentSpec:
        return LatentSpec.from_config(self.latent)

    def cost_config(self) -> tp.WeakCostConfig:
        return tp.WeakCostConfig(gamma=self.gamma, n_z=self.n_z)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["critic_hidden"] = list(self.critic_hidden)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        if "critic_hidden" in d:
            d["critic_hidden"] = tuple(d["critic_hidden"])
        return TrainConfig(**d)

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


@dataclass
class TrainResult:
    generator: object
    critic: object
    history: list
    probe_rows: list
    stop_reason: str
    budget_used: int
    run_dir: str | None = None
    iterations: int = 0
    epochs: int = 0
    generator_ema: object = None

    def eval_generator(self):
        """The iterate meant for evaluation: the tail average when active."""
        return self.generator_ema if self.generator_ema is not None else self.generator


def _fmt(x) -> str:
    return f"{float(x):.17g}"


class _History:
    def __init__(self, path, resume=False):
        self.path = path
        self.rows = []
        if path:
            mode = "a" if (resume and os.path.exists(path)) else "w"
            self.fh = open(path, mode)
            if mode == "w":
                self.fh.write(",".join(HISTORY_COLUMNS) + "\n")
        else:
            self.fh = None

    def append(self, row):
        self.rows.append(row)
        if self.fh:
            self.fh.write(",".join([str(int(row[0]))] + [_fmt(v) for v in row[1:]]) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


def train(cfg: TrainConfig, target: Dataset, run_dir=None, resume=False,
          backend=None) -> TrainResult:
    """Run the maximin loop against a target dataset.

    backend overrides the grey-box rollout implementation ('graph' or
    'fused'); None picks the task default.
    """
    if target.role != "target":
        raise ValueError(f"expected a target dataset, got role {target.role!r}")
    if target.task != cfg.task:
        raise ValueError(f"dataset task {target.task!r} != config task {cfg.task!r}")
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)

    spec = get_task(cfg.task, grid=cfg.grid)
    latent = cfg.latent_spec()
    root = np.random.SeedSequence([int(cfg.seed), 7131557])
    ss_model, ss_train, ss_probe = root.spawn(3)
    rng_model = np.random.default_rng(ss_model)

    gen_kw = ({"hidden": cfg.hidden, "conv_filters": cfg.conv_filters}
              if cfg.family == "gb" else {"hidden": cfg.bb_hidden})
    generator = make_generator(cfg.task, cfg.family, rng_model, latent=latent,
                               grid=cfg.grid, emb_dim=cfg.emb_dim, **gen_kw)
    critic = make_critic(cfg.task, rng_model, hidden=cfg.critic_hidden,
                         grid=cfg.grid)

    rng_train = np.random.default_rng(ss_train)
    rng_probe = np.random.default_rng(ss_probe)
    meter = BudgetMeter(cfg.budget)
    y_all = target.arrays["y"].reshape(target.n, -1)
    ema = ({name: node.value.copy() for name, node in generator.store.params.items()}
           if cfg.ema_decay > 0 else None)

    it = 0
    epoch = 0
    critic_steps = 0
    last_critic_loss = float("nan")
    last_penalty = float("nan")
    loss_window: list[float] = []

    # fixed probe batch: drawn before training, counted against the budget
    probe = None
    if cfg.probe_size > 0 and meter.can_afford(cfg.probe_size + cfg.batch_size):
        px0, ptheta = sample_prior(spec, rng_probe, cfg.probe_size, spec=spec)
        px = _simulate_batch(spec, False, px0, ptheta, None, meter, None)
        pz = latent.sample(rng_probe, cfg.probe_size * cfg.n_z)
        py_idx = rng_probe.choice(target.n, size=min(cfg.probe_size, target.n),
                                  replace=False)
        probe = {"x0": px0, "theta": _theta_mat(spec, ptheta), "x": px.reshape(cfg.probe_size, -1),
                 "z": pz, "y": y_all[py_idx]}

    if resume and not run_dir:
        raise ValueError("resume needs a run_dir")
    state_loaded = None
    if resume:
        latest = os.path.join(run_dir, "checkpoint-latest")
        if not os.path.isdir(latest):
            raise FileNotFoundError(f"no checkpoint to resume in {run_dir}")
        state_loaded = load_checkpoint(latest, generator=generator, critic=critic,
                                       weights="raw")
        if ema is not None:
            if state_loaded.get("ema") is None:
                raise ValueError("checkpoint has no averaged weights to resume")
            ema = state_loaded["ema"]
        st = state_loaded["state"]
        it = st["iteration"]
        epoch = st["epoch"]
        critic_steps = st["critic_steps"]
        meter.used = st["budget_used"]
        last_critic_loss = st["last_critic_loss"]
        last_penalty = st["last_penalty"]
        loss_window = list(st["loss_window"])
        rng_train.bit_generator.state = st["rng_train"]
        rng_probe.bit_generator.state = st["rng_probe"]

    history = _History(os.path.join(run_dir, "history.csv") if run_dir else None,
                       resume=resume)
    probe_rows = []
    probe_path = os.path.join(run_dir, "probe.csv") if run_dir else None
    if probe_path and not (resume and os.path.exists(probe_path)):
        with open(probe_path, "w") as fh:
            fh.write("critic_step,probe_gp,probe_cost\n")

    # the initial generated probe batch stays fixed for the gp trace
    if probe is not None:
        init_path = os.path.join(run_dir, "probe_init.bin") if run_dir else None
        if resume and init_path and os.path.exists(init_path):
            probe["yhat0"] = load_arrays(init_path)["yhat0"]
        else:
            probe["yhat0"] = _generate(generator, cfg, spec, probe["x0"],
                                       probe["theta"], probe["x"], probe["z"],
                                       backend).value.copy()
            if init_path:
                save_arrays(init_path, {"yhat0": probe["yhat0"]})
        if not resume:
            _eval_probe(probe, critic, generator, cfg, spec, rng_probe, backend,
                        critic_steps, probe_rows, probe_path)

    cost_cfg = cfg.cost_config()
    stop_reason = None

    def save_ckpt(tag):
        if not run_dir:
            return
        path = os.path.join(run_dir, tag)
        save_checkpoint(path, cfg, generator, critic,
                        state={"iteration": it, "epoch": epoch,
                               "critic_steps": critic_steps,
                               "budget_used": meter.used,
                               "last_critic_loss": last_critic_loss,
                               "last_penalty": last_penalty,
                               "loss_window": loss_window[-2 * cfg.convergence_window:],
                               "rng_train": rng_train.bit_generator.state,
                               "rng_probe": rng_probe.bit_generator.state},
                        ema=ema)

    try:
        while stop_reason is None:
            if cfg.max_epochs is not None and epoch >= cfg.max_epochs:
                stop_reason = "max_epochs"
                break
            if not meter.can_afford(cfg.batch_size):
                stop_reason = "budget"
                break
            yhat_detached = None
            for _ in range(cfg.t_max):
                if not meter.can_afford(cfg.batch_size):
                    break
                x0, theta_d = sample_prior(spec, rng_train, cfg.batch_size, spec=spec)
                theta = _theta_mat(spec, theta_d)
                x = _simulate_batch(spec, False, x0, theta_d, None, meter, None)
                x_flat = x.reshape(cfg.batch_size, -1)
                z = latent.sample(rng_train, cfg.batch_size * cfg.n_z)
                yhat = _generate(generator, cfg, spec, x0, theta, x_flat, z, backend)
                if cfg.is_wgan:
                    loss = tp.wgan_generator_loss(yhat, critic)
                    cost_val = tp.weak_cost_mc(
                        x_flat, yhat.value.reshape(cfg.batch_size, cfg.n_z, -1),
                        cfg.gamma).item()
                else:
                    loss, cost = tp.generator_loss(x_flat, yhat, critic, cost_cfg)
                    cost_val = cost.item()
                loss_val = loss.item()
                yhat_detached = np.asarray(yhat.value)
                generator.store.zero_grad()
                de.backward(loss, release=True)
                adam_step(generator.store, lr=cfg.lr_g, beta1=cfg.beta1,
                          beta2=cfg.beta2)
                if ema is not None:
                    d = cfg.ema_decay
                    for name, node in generator.store.params.items():
                        buf = ema[name]
                        buf *= d
                        buf += (1.0 - d) * node.value
                it += 1
                loss_window.append(loss_val)
                history.append((it, loss_val, last_critic_loss, cost_val,
                                last_penalty, meter.used))
                if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                    save_ckpt(f"checkpoint-it{it:08d}")
                if _converged(loss_window, cfg):
                    stop_reason = "converged"
                    break
            if yhat_detached is None:
                if stop_reason is None:
                    stop_reason = "budget"
                break
            # one critic (potential) ascent step on the freshest batches
            idx = rng_train.choice(target.n, size=min(cfg.batch_size, target.n),
                                   replace=True)
            closs, gp = tp.critic_loss(yhat_detached, y_all[idx], critic,
                                       lam=cfg.lam, rng=rng_train)
            last_critic_loss = closs.item()
            last_penalty = gp.item()
            critic.store.zero_grad()
            de.backward(closs, release=True)
            adam_step(critic.store, lr=cfg.lr_c, beta1=cfg.beta1, beta2=cfg.beta2)
            critic_steps += 1
            if probe is not None and critic_steps % cfg.probe_every == 0:
                _eval_probe(probe, critic, generator, cfg, spec, rng_probe,
                            backend, critic_steps, probe_rows, probe_path)
            epoch += 1
    except FloatingPointError as exc:
        save_ckpt("checkpoint-diagnostic")
        history.close()
        raise NumericFailure(f"non-finite value during training: {exc}") from exc

    if ema is not None:
        ema_generator = generator_from_arch(generator.arch(), rng=0)
        ema_generator.store.load_values(ema)
    else:
        ema_generator = None
    save_ckpt("checkpoint-latest")
    save_ckpt("checkpoint-final")
    if run_dir:
        write_json(os.path.join(run_dir, "run.json"), {
            "config": cfg.to_dict(),
            "config_fingerprint": cfg.fingerprint(),
            "target_dataset": {"task": target.task, "n": target.n,
                               "seed": target.seed, "config": target.config},
            "stop_reason": stop_reason,
            "iterations": it,
            "epochs": epoch,
            "critic_steps": critic_steps,
            "budget_used": meter.used,
        })
    history.close()
    return TrainResult(generator=generator, critic=critic, history=history.rows,
                       probe_rows=probe_rows, stop_reason=stop_reason,
                       budget_used=meter.used, run_dir=run_dir, iterations=it,
                       epochs=epoch, generator_ema=ema_generator)


def _theta_mat(spec, theta_dict) -> np.ndarray:
    return np.column_stack([theta_dict[name] for name in spec.theta_names])


def _generate(generator, cfg, spec, x0, theta, x_flat, z, backend) -> de.Node:
    """Roll the generator on a batch repeated n_z times along the z axis."""
    Z = cfg.n_z
    if Z > 1:
        x0 = np.repeat(x0, Z, axis=0)
        theta = np.repeat(theta, Z, axis=0)
        x_flat = np.repeat(x_flat, Z, axis=0)
    return generator.forward(x0=x0, theta=theta, z=z, x=x_flat, backend=backend)


def _eval_probe(probe, critic, generator, cfg, spec, rng_probe, backend,
                critic_steps, probe_rows, probe_path):
    m = min(len(probe["yhat0"]), len(probe["y"]))
    gp = tp.gradient_penalty(critic, probe["yhat0"][:m], probe["y"][:m], rng_probe)
    yhat = _generate(generator, cfg, spec, probe["x0"], probe["theta"],
                     probe["x"], probe["z"], backend)
    cost = tp.weak_cost_mc(probe["x"], yhat.value.reshape(len(probe["x"]), cfg.n_z, -1),
                           cfg.gamma)
    row = (critic_steps, gp.item(), cost.item())
    probe_rows.append(row)
    if probe_path:
        with open(probe_path, "a") as fh:
            fh.write(f"{critic_steps},{_fmt(row[1])},{_fmt(row[2])}\n")


def _converged(window, cfg) -> bool:
    W = cfg.convergence_window
    if W <= 0 or len(window) < 2 * W:
        return False
    prev = float(np.mean(window[-2 * W:-W]))
    last = float(np.mean(window[-W:]))
    denom = max(abs(prev), 1e-12)
    return abs(last - prev) / denom < cfg.convergence_tol


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, cfg: TrainConfig, generator, critic, state=None,
                    ema=None):
    os.makedirs(path, exist_ok=True)
    save_arrays(os.path.join(path, "gen.bin"), generator.store.values())
    save_arrays(os.path.join(path, "critic.bin"), critic.store.values())
    if ema is not None:
        save_arrays(os.path.join(path, "gen_ema.bin"), ema)
    opt = {}
    for tag, store in (("gen", generator.store), ("critic", critic.store)):
        for name in store.params:
            opt[f"m.{tag}.{name}"] = store.m[name]
            opt[f"v.{tag}.{name}"] = store.v[name]
        opt[f"t.{tag}"] = np.array([float(store.step)])
    save_arrays(os.path.join(path, "opt.bin"), opt)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "config_fingerprint": cfg.fingerprint(),
        "arch_gen": generator.arch(),
        "arch_critic": critic.arch(),
        "state": state or {},
    }
    write_json(os.path.join(path, "manifest.json"), manifest)


def load_checkpoint(path, generator=None, critic=None, expect_task=None,
                    weights="auto"):
    """Load a checkpoint; builds models from the manifest when not given.

    weights: 'raw' loads the live iterate, 'ema' the tail-averaged one
    (error if absent), 'auto' prefers the average when present.  Returns
    {config, generator, critic, state, ema}.  Raises on format,
    architecture or task mismatches.
    """
    manifest = read_json(os.path.join(path, "manifest.json"))
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a training checkpoint")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    cfg = TrainConfig.from_dict(manifest["config"])
    if expect_task and cfg.task != expect_task:
        raise ValueError(f"checkpoint task {cfg.task!r} != expected {expect_task!r}")
    if generator is None:
        generator = generator_from_arch(manifest["arch_gen"], rng=0)
    elif generator.arch() != manifest["arch_gen"]:
        raise ValueError("generator architecture does not match checkpoint manifest")
    if critic is None:
        critic = critic_from_arch(manifest["arch_critic"], cfg.task, rng=0,
                                  grid=cfg.grid)
    elif critic.arch() != manifest["arch_critic"]:
        raise ValueError("critic architecture does not match checkpoint manifest")
    ema_path = os.path.join(path, "gen_ema.bin")
    ema = load_arrays(ema_path) if os.path.exists(ema_path) else None
    if weights == "ema" and ema is None:
        raise ValueError(f"{path}: no averaged generator weights saved")
    use_ema = (weights == "ema") or (weights == "auto" and ema is not None)
    generator.store.load_values(ema if use_ema
                                else load_arrays(os.path.join(path, "gen.bin")))
    critic.store.load_values(load_arrays(os.path.join(path, "critic.bin")))
    opt_path = os.path.join(path, "opt.bin")
    if os.path.exists(opt_path):
        opt = load_arrays(opt_path)
        for tag, store in (("gen", generator.store), ("critic", critic.store)):
            for name in store.params:
                if f"m.{tag}.{name}" in opt:
                    store.m[name] = opt[f"m.{tag}.{name}"]
                    store.v[name] = opt[f"v.{tag}.{name}"]
            if f"t.{tag}" in opt:
                store.step = int(opt[f"t.{tag}"][0])
    return {"config": cfg, "generator": generator, "critic": critic,
            "state": manifest.get("state", {}), "ema": ema}
