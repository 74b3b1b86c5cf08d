import sys, time, json
sys.path.insert(0, "/root/pkg/tests")
sys.path.insert(0, "/root/pkg/src")
import numpy as np
from greybox_ot import physics, trainer, evaluation as ev
import test_acceptance as acc

def report(tag, gen, run_dir, test, stoch=False):
    rep = acc.eval_cached(gen, run_dir, test, "stoch" if stoch else "det")
    key = "mmd" if stoch else "nrmse"
    print(json.dumps({"tag": tag, key: rep.metrics[key]["point"],
                      **({"c2st": rep.metrics["c2st"]["point"]} if stoch else {})}),
          flush=True)
    return rep

# 1) full-budget pendulum OT-GB (the acceptance criterion-4 run, cached)
t0 = time.time()
gen, run_dir, secs = acc.train_cached(acc.pend_cfg("ot-gb"), 500)
print(json.dumps({"tag": "c4-train", "seconds": round(time.time()-t0,1)}), flush=True)
test = physics.make_dataset("pendulum", "test", 100, seed=acc.TEST_SEED)
report("c4-pend-otgb-full", gen, run_dir, test)

# 2) advdiff OT-GB probe at reduced budget
cfg = acc.adv_cfg("ot-gb", budget=60000)
t0 = time.time()
tgt = physics.make_dataset("advdiff", "target", 500, seed=acc.TARGET_SEED)
res = trainer.train(cfg, tgt)
atest = physics.make_dataset("advdiff", "test", 60, seed=999)
rep = ev.evaluate_joint(res.generator, atest, n_bootstrap=100, seed=1)
print(json.dumps({"tag": "adv-probe-60k", "seconds": round(time.time()-t0,1),
                  "nrmse": rep.metrics["nrmse"]["point"],
                  "cost": res.history[-1][3]}), flush=True)

# 3) one-to-two pendulum OT-GB probe at reduced budget
cfg2 = acc.pend2_cfg("ot-gb", budget=100000)
t0 = time.time()
dgp = {"kind": "two_point", **acc.ONE2TWO}
tgt2 = physics.make_dataset("pendulum", "target", 600, dgp=dgp, seed=acc.TARGET_SEED)
res2 = trainer.train(cfg2, tgt2)
tst2 = physics.make_dataset("pendulum", "test", 60, dgp=dgp, seed=998)
rep2 = ev.evaluate_joint(res2.generator, tst2, n_bootstrap=100, seed=1)
x0 = np.repeat(tst2.arrays["x0"][:1], 64, axis=0)
th = np.repeat(tst2.theta_matrix()[:1], 64, axis=0)
z = res2.generator.latent.sample(np.random.default_rng(9), 64)
shares = ev.two_means_shares(res2.generator.forward(x0, th, z=z).value,
                             np.random.default_rng(10))
print(json.dumps({"tag": "p2-probe-100k", "seconds": round(time.time()-t0,1),
                  "mmd": rep2.metrics["mmd"]["point"],
                  "c2st": rep2.metrics["c2st"]["point"],
                  "shares": shares.tolist()}), flush=True)
