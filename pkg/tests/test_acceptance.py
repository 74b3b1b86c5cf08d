"""Acceptance gate.

Each criterion prints one PASS/FAIL line (visible with `pytest -s`) and the
full set is appended to .acceptance/acceptance_report.txt.  Training-based
criteria cache their runs under .acceptance/ keyed by config fingerprint;
delete that directory to retrain from scratch.
"""

import dataclasses
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from greybox_ot import diffengine as de
from greybox_ot import evaluation as ev
from greybox_ot import models, physics, trainer
from greybox_ot import transport as tp
from greybox_ot.models import LatentSpec

from conftest import central_diff, rel_err

CACHE = Path(__file__).resolve().parent.parent / ".acceptance"
CACHE.mkdir(exist_ok=True)
REPORT_PATH = CACHE / "acceptance_report.txt"
_REPORT = []

TARGET_SEED = 101
TEST_SEED = 202

# desk-scale hyperparameters shared by all trained models: one critic step
# per generator step and a faster critic keep the potential useful at these
# budgets (the t_max=10 default starves it; see the decisions notes)
DESK = dict(t_max=1, lr_g=5e-4, lr_c=1e-3, beta1=0.5, beta2=0.9,
            batch_size=64, probe_size=64, probe_every=25,
            convergence_window=0, ema_decay=0.998)

ONE2TWO = dict(values=[0.7, 1.4], weights=[0.5, 0.5])
LAT2 = {"kind": "categorical", "dim": 2, "probs": [0.5, 0.5]}


def criterion(num, ok, desc, detail=""):
    status = "PASS" if ok else "FAIL"
    line = f"CRITERION {num:02d} {status} - {desc}"
    if detail:
        line += f" [{detail}]"
    print("\n" + line)
    _REPORT.append(line)
    REPORT_PATH.write_text("\n".join(_REPORT) + "\n")
    assert ok, line


# ---------------------------------------------------------------------------
# cached training / evaluation helpers
# ---------------------------------------------------------------------------

def train_cached(cfg: trainer.TrainConfig, target_n, target_dgp=None):
    run_dir = CACHE / f"run-{cfg.fingerprint()}"
    t0 = time.time()
    if (run_dir / "run.json").exists():
        loaded = trainer.load_checkpoint(str(run_dir / "checkpoint-final"))
        return loaded["generator"], run_dir, 0.0
    target = physics.make_dataset(cfg.task, "target", target_n, dgp=target_dgp,
                                  seed=TARGET_SEED, grid=cfg.grid)
    res = trainer.train(cfg, target, run_dir=str(run_dir))
    return res.eval_generator(), run_dir, time.time() - t0


def eval_cached(generator, run_dir, test_ds, tag, n_bootstrap=200):
    path = Path(run_dir) / f"report-{tag}.json"
    if path.exists():
        return ev.EvalReport.load(path)
    rep = ev.evaluate_joint(generator, test_ds, n_bootstrap=n_bootstrap, seed=7)
    rep.save(path)
    return rep


@pytest.fixture(scope="module")
def pend_test():
    return physics.make_dataset("pendulum", "test", 100, seed=TEST_SEED)


@pytest.fixture(scope="module")
def adv_test():
    return physics.make_dataset("advdiff", "test", 100, seed=TEST_SEED)


@pytest.fixture(scope="module")
def pend2_test():
    return physics.make_dataset("pendulum", "test", 120,
                                dgp={"kind": "two_point", **ONE2TWO},
                                seed=TEST_SEED)


def pend_cfg(mode, **kw):
    base = dict(task="pendulum", mode=mode, budget=200_000, seed=1, **DESK)
    base.update(kw)
    return trainer.TrainConfig(**base)


def adv_cfg(mode, **kw):
    base = dict(task="advdiff", mode=mode, budget=200_000, seed=1, **DESK)
    base.update(kw)
    return trainer.TrainConfig(**base)


def pend2_cfg(mode, **kw):
    base = dict(task="pendulum", mode=mode, budget=400_000, seed=1, **DESK)
    if mode.startswith("ot"):
        base.update(gamma=1.0, n_z=2, latent=LAT2)
    else:
        base.update(latent=LAT2)
    base.update(kw)
    return trainer.TrainConfig(**base)


@pytest.fixture(scope="module")
def run_c4(pend_test):
    gen, run_dir, secs = train_cached(pend_cfg("ot-gb"), 500)
    rep = eval_cached(gen, run_dir, pend_test, "det")
    return gen, run_dir, rep, secs


@pytest.fixture(scope="module")
def run_c5(adv_test):
    gen, run_dir, secs = train_cached(adv_cfg("ot-gb"), 500)
    rep = eval_cached(gen, run_dir, adv_test, "det")
    return gen, run_dir, rep, secs


@pytest.fixture(scope="module")
def run_c6(pend_test, adv_test, pend2_test):
    out = {}
    for tag, cfg, n in (("pend-ot-bb", pend_cfg("ot-bb"), 500),
                        ("pend-wgan-bb", pend_cfg("wgan-bb"), 500),
                        ("adv-ot-bb", adv_cfg("ot-bb"), 500),
                        ("adv-wgan-bb", adv_cfg("wgan-bb"), 500)):
        gen, run_dir, _ = train_cached(cfg, n)
        test = pend_test if cfg.task == "pendulum" else adv_test
        out[tag] = eval_cached(gen, run_dir, test, "det")
    dgp = {"kind": "two_point", **ONE2TWO}
    for tag, cfg in (("p2-ot-gb", pend2_cfg("ot-gb")),
                     ("p2-wgan-gb", pend2_cfg("wgan-gb")),
                     ("p2-ot-bb", pend2_cfg("ot-bb")),
                     ("p2-wgan-bb", pend2_cfg("wgan-bb"))):
        gen, run_dir, _ = train_cached(cfg, 600, target_dgp=dgp)
        out[tag] = eval_cached(gen, run_dir, pend2_test, "stoch")
        out[tag + "-gen"] = gen
        out[tag + "-dir"] = run_dir
    return out


# ---------------------------------------------------------------------------
# criterion 1: numerics suite
# ---------------------------------------------------------------------------

def test_criterion_01_numerics():
    t0 = time.time()
    rng = np.random.default_rng(3)
    # first order: matmul against central differences
    a = de.variable(rng.normal(size=(4, 3)))
    b = de.variable(rng.normal(size=(3, 2)))

    def f():
        return de.reduce_sum(de.square(de.matmul(a, b))).value

    de.backward(de.reduce_sum(de.square(de.matmul(a, b))))
    first = max(rel_err(a.grad, central_diff(a, f)),
                rel_err(b.grad, central_diff(b, f)))

    # second order: penalty gradient w.r.t. critic weights
    W = de.variable(rng.normal(size=(6, 4)) * 0.5)
    V = de.variable(rng.normal(size=(4, 1)) * 0.5)
    y = de.variable(rng.normal(size=(2, 6)))

    def penalty():
        g = de.input_gradient(
            lambda t: de.reduce_sum(de.matmul(de.tanh(de.matmul(t, W)), V)), y)
        return de.square(de.sub(de.l2norm(g), de.constant(1.0)))

    de.backward(penalty())
    second = max(rel_err(W.grad, central_diff(W, lambda: penalty().value)),
                 rel_err(V.grad, central_diff(V, lambda: penalty().value)))

    errs = []
    for dt in (0.1, 0.05, 0.025):
        tr = physics.integrate(lambda s: -s, np.array([1.0]), (0, 1.0), dt, 1.0)
        errs.append(abs(tr.states[-1, 0] - np.exp(-1.0)))
    slopes = np.diff(np.log(errs)) / np.diff(np.log([0.1, 0.05, 0.025]))

    om = 1.0
    trp = physics.integrate(lambda s: np.array([s[1], -om**2 * np.sin(s[0])]),
                            np.array([0.5, 0.0]), (0, 50.0), 0.1, 0.1)
    E = 0.5 * trp.states[:, 1]**2 + om**2 * (1 - np.cos(trp.states[:, 0]))
    E0 = om**2 * (1 - np.cos(0.5))
    drift = float(np.max(np.abs(E - E0)) / E0)

    ok = (first <= 1e-5 and second <= 1e-4
          and np.all(np.abs(slopes - 4.0) <= 0.2) and drift <= 1e-4)
    criterion(1, ok, "numerics: gradients, RK4 order, energy drift",
              f"first {first:.1e}, second {second:.1e}, slopes "
              f"{slopes.round(2).tolist()}, drift {drift:.1e}, "
              f"{time.time() - t0:.0f}s")


# ---------------------------------------------------------------------------
# criterion 2: estimator oracle
# ---------------------------------------------------------------------------

def test_criterion_02_estimator_oracle():
    rng = np.random.default_rng(4)
    atoms = rng.normal(size=(4, 6))
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    x = rng.normal(size=6)

    def kv(u, v):
        return 0.5 * (np.linalg.norm(u) + np.linalg.norm(v)
                      - np.linalg.norm(u - v))

    worst = 0.0
    for gamma in (0.0, 0.5, 1.0):
        exact = (0.5 * kv(x, x)
                 + (1 - gamma) / 2 * sum(p * kv(t, t) for p, t in zip(probs, atoms))
                 - sum(p * kv(x, t) for p, t in zip(probs, atoms))
                 + gamma / 2 * sum(pi * pj * kv(ti, tj)
                                   for pi, ti in zip(probs, atoms)
                                   for pj, tj in zip(probs, atoms)))
        est = sum(probs[i] * probs[j]
                  * tp.weak_cost_mc(x, np.stack([atoms[i], atoms[j]]), gamma).item()
                  for i in range(4) for j in range(4))
        worst = max(worst, abs(est - exact))
    ident = max(abs(tp.weak_cost_mc(x, np.tile(x, (4, 1)), g).item())
                for g in (0.0, 0.5, 1.0))
    ok = worst <= 1e-9 and ident <= 1e-12
    criterion(2, ok, "weak-cost estimator: enumeration oracle + identity map",
              f"enum err {worst:.1e}, identity cost {ident:.1e}")


# ---------------------------------------------------------------------------
# criterion 3: metric sanity
# ---------------------------------------------------------------------------

def test_criterion_03_metric_sanity():
    t0 = time.time()
    rng = np.random.default_rng(6)
    S = rng.normal(size=(40, 4))
    mmd_self, _ = ev.mmd_agg(S, S.copy())
    X1 = rng.normal(size=(250, 5))
    X2 = rng.normal(size=(250, 5))
    acc_same, _ = ev.c2st(X1, X2, np.random.default_rng(8))
    X3 = rng.normal(size=(250, 5))
    X3[:, 0] += 10.0
    acc_sep, _ = ev.c2st(X1, X3, np.random.default_rng(8))
    ok = (mmd_self == 0.0 and 0.45 <= acc_same <= 0.58 and acc_sep >= 0.95)
    criterion(3, ok, "metric sanity: MMD(S,S)=0, C2ST chance band, separable",
              f"mmd {mmd_self}, c2st same {acc_same:.3f}, sep {acc_sep:.3f}, "
              f"{time.time() - t0:.0f}s")


# ---------------------------------------------------------------------------
# criteria 4-7: trained desk-scale models
# ---------------------------------------------------------------------------

def test_criterion_04_pendulum_one_to_one(run_c4):
    gen, run_dir, rep, secs = run_c4
    val = rep.metrics["nrmse"]["point"]
    criterion(4, val <= 0.05, "pendulum one-to-one OT-GB N-RMSE <= 0.05",
              f"nrmse {val:.4f}, CI [{rep.metrics['nrmse']['ci_low']:.4f}, "
              f"{rep.metrics['nrmse']['ci_high']:.4f}], train {secs:.0f}s")


def test_criterion_05_advdiff_one_to_one(run_c5):
    gen, run_dir, rep, secs = run_c5
    val = rep.metrics["nrmse"]["point"]
    criterion(5, val <= 0.10, "advdiff one-to-one OT-GB N-RMSE <= 0.10",
              f"nrmse {val:.4f}, CI [{rep.metrics['nrmse']['ci_low']:.4f}, "
              f"{rep.metrics['nrmse']['ci_high']:.4f}], train {secs:.0f}s")


def test_criterion_06_orderings(run_c4, run_c5, run_c6):
    p_gb = run_c4[2].metrics["nrmse"]["point"]
    a_gb = run_c5[2].metrics["nrmse"]["point"]
    p_otbb = run_c6["pend-ot-bb"].metrics["nrmse"]["point"]
    p_wgbb = run_c6["pend-wgan-bb"].metrics["nrmse"]["point"]
    a_otbb = run_c6["adv-ot-bb"].metrics["nrmse"]["point"]
    a_wgbb = run_c6["adv-wgan-bb"].metrics["nrmse"]["point"]
    m_gb = run_c6["p2-ot-gb"].metrics["mmd"]["point"]
    m_otbb = run_c6["p2-ot-bb"].metrics["mmd"]["point"]
    m_wgbb = run_c6["p2-wgan-bb"].metrics["mmd"]["point"]
    c_gb = run_c6["p2-ot-gb"].metrics["c2st"]["point"]
    c_wggb = run_c6["p2-wgan-gb"].metrics["c2st"]["point"]
    cis = all("ci_low" in rep.metrics[m] for rep, m in
              [(run_c4[2], "nrmse"), (run_c6["p2-ot-gb"], "mmd"),
               (run_c6["p2-ot-gb"], "c2st")])
    ok = (p_gb < p_otbb and p_gb < p_wgbb
          and a_gb < a_otbb and a_gb < a_wgbb
          and m_gb < m_otbb and m_gb < m_wgbb
          and c_gb <= c_wggb and cis)
    criterion(6, ok, "orderings: OT-GB beats OT-BB/WGAN-BB; C2ST vs WGAN-GB",
              f"pend nrmse gb {p_gb:.4f} | ot-bb {p_otbb:.4f} | wgan-bb {p_wgbb:.4f}; "
              f"adv nrmse gb {a_gb:.4f} | ot-bb {a_otbb:.4f} | wgan-bb {a_wgbb:.4f}; "
              f"1-2 mmd gb {m_gb:.4f} | ot-bb {m_otbb:.4f} | wgan-bb {m_wgbb:.4f}; "
              f"c2st gb {c_gb:.3f} vs wgan-gb {c_wggb:.3f}")


def test_criterion_07_bimodality(run_c6, pend2_test):
    gen = run_c6["p2-ot-gb-gen"]
    rec = 0
    x0 = np.repeat(pend2_test.arrays["x0"][rec:rec + 1], 64, axis=0)
    theta = np.repeat(pend2_test.theta_matrix()[rec:rec + 1], 64, axis=0)
    z = gen.latent.sample(np.random.default_rng(9), 64)
    trajs = gen.forward(x0, theta, z=z).value
    shares = ev.two_means_shares(trajs, np.random.default_rng(10))
    ok = shares[0] >= 0.20 and shares[1] >= 0.20
    criterion(7, ok, "one-to-two bimodality: both clusters hold >= 20% of draws",
              f"shares {shares.round(3).tolist()}")


# ---------------------------------------------------------------------------
# trainer invariants measured on the trained desk-scale artifacts
# ---------------------------------------------------------------------------

def test_invariant_critic_lipschitz_pressure(run_c4):
    # after warm-up the penalty on a fixed probe batch sits below its value
    # at initialization: the critic is actually optimizing the constraint
    _, run_dir, _, _ = run_c4
    rows = np.genfromtxt(Path(run_dir) / "probe.csv", delimiter=",",
                         names=True)
    warm = rows["probe_gp"][rows["critic_step"] >= 200]
    init = rows["probe_gp"][0]
    assert len(warm) > 0
    assert float(np.mean(warm)) < float(init)


def test_invariant_minimal_change_ot_vs_wgan(run_c6):
    # the OT objective carries the transport cost, WGAN does not: on a fresh
    # probe batch the trained OT map must stay cheaper than the WGAN map
    ot = run_c6["p2-ot-gb-gen"]
    wg = run_c6["p2-wgan-gb-gen"]
    rng = np.random.default_rng(31337)
    x0, theta_d = physics.sample_prior("pendulum", rng, 64)
    theta = np.column_stack([theta_d["omega"]])
    x = physics.pendulum_batch(x0[:, 0], x0[:, 1], theta[:, 0], complete=False)
    costs = {}
    for tag, gen, nz in (("ot", ot, 2), ("wgan", wg, 1)):
        z = gen.latent.sample(np.random.default_rng(5), 64 * nz)
        out = gen.forward(np.repeat(x0, nz, axis=0), np.repeat(theta, nz, axis=0),
                          z=z)
        costs[tag] = tp.weak_cost_mc(x.reshape(64, -1),
                                     out.value.reshape(64, nz, -1), 0.0).item()
    assert costs["ot"] <= costs["wgan"], costs


# ---------------------------------------------------------------------------
# criterion 8: grey-box identity and oracle
# ---------------------------------------------------------------------------

def test_criterion_08_greybox_identity_oracle():
    rng = np.random.default_rng(12)
    x0 = np.column_stack([rng.uniform(-1.5, 1.5, 5), np.zeros(5)])
    theta = rng.uniform(0.785, 3.14, (5, 1))
    sim_p = physics.pendulum_batch(x0[:, 0], x0[:, 1], theta[:, 0],
                                   complete=False, lane="numpy")
    sim_c = physics.pendulum_batch(x0[:, 0], x0[:, 1], theta[:, 0],
                                   [1.2] * 5, complete=True, lane="numpy")
    gb = models.make_generator("pendulum", "gb", rng=1)
    ident_ok = all(
        np.array_equal(gb.forward(x0, theta, backend=b).value, sim_p)
        for b in ("graph", "fused"))
    orc = models.oracle_greybox("pendulum")
    err_p = np.max(np.abs(orc.forward(x0, theta).value - sim_c))

    T0 = physics.advdiff_initial(rng.uniform(0.5, 1.5, 4))
    th_a = rng.uniform(0.01, 0.1, (4, 1))
    sim_ac = physics.advdiff_batch(T0, th_a[:, 0], [0.1] * 4, complete=True,
                                   lane="numpy")
    err_a = np.max(np.abs(
        models.oracle_greybox("advdiff").forward(T0, th_a).value.reshape(4, 50, 20)
        - sim_ac))
    ok = ident_ok and err_p <= 1e-10 and err_a <= 1e-10
    criterion(8, ok, "grey-box identity exact; true-term oracle <= 1e-10",
              f"identity {ident_ok}, pendulum {err_p:.1e}, advdiff {err_a:.1e}")


# ---------------------------------------------------------------------------
# criterion 9: reaction-diffusion smoke
# ---------------------------------------------------------------------------

def test_criterion_09_reactdiff_smoke():
    spec = physics.get_task("reactdiff")
    G = spec.extra["grid"]
    uv0 = np.zeros((2, G, G))
    uv0[0] = 0.05
    uv0[1] = -0.02
    out = physics.reactdiff_batch(uv0[None], [3e-3], [2e-3], [0.05],
                                  complete=True, lane="numpy")

    def rhs0(s):
        u, v = s
        return np.array([u - u**3 - v - 0.05, u - v])

    tr = physics.integrate(rhs0, np.array([0.05, -0.02]), (0, 15.0),
                           spec.dt_solver, 1.0)
    err = max(np.max(np.abs(out[0][:, 0, 0, 0] - tr.states[:, 0])),
              np.max(np.abs(out[0][:, 1, 0, 0] - tr.states[:, 1])))

    cfg = trainer.TrainConfig(task="reactdiff", mode="ot-gb", budget=16,
                              seed=3, batch_size=4, t_max=2, max_epochs=1,
                              probe_size=0, convergence_window=0,
                              lr_g=5e-4, lr_c=1e-3)
    target = physics.make_dataset("reactdiff", "target", 8, seed=TARGET_SEED)
    res = trainer.train(cfg, target)
    losses = [row[1] for row in res.history]
    ok = err <= 1e-6 and res.iterations >= 1 and np.all(np.isfinite(losses))
    criterion(9, ok, "reactdiff 16x16: 0-D oracle <= 1e-6; one OT-GB epoch trains",
              f"oracle err {err:.1e}, iters {res.iterations}, losses finite "
              f"{bool(np.all(np.isfinite(losses)))}")


# ---------------------------------------------------------------------------
# criterion 10: determinism
# ---------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    target = physics.make_dataset("pendulum", "target", 60, seed=TARGET_SEED)
    cfg = trainer.TrainConfig(task="pendulum", mode="ot-gb", budget=2000,
                              seed=4, batch_size=32, t_max=2, probe_size=16,
                              probe_every=2, convergence_window=0,
                              lr_g=5e-4, lr_c=1e-3)
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    trainer.train(cfg, target, run_dir=str(d1))
    trainer.train(cfg, target, run_dir=str(d2))
    files = ["history.csv", "probe.csv", "checkpoint-final/gen.bin",
             "checkpoint-final/critic.bin", "checkpoint-final/opt.bin",
             "checkpoint-final/manifest.json"]
    same = {f: (d1 / f).read_bytes() == (d2 / f).read_bytes() for f in files}
    criterion(10, all(same.values()),
              "determinism: identical config+seed give byte-identical artifacts",
              ", ".join(f"{k}={'ok' if v else 'DIFF'}" for k, v in same.items()))
