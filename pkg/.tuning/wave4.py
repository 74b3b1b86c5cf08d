import sys, json, time
sys.path.insert(0, "/root/pkg/tests"); sys.path.insert(0, "/root/pkg/src")
import numpy as np
from greybox_ot import physics, trainer, evaluation as ev
import test_acceptance as acc

target = physics.make_dataset("pendulum", "target", 500, seed=acc.TARGET_SEED)
test = physics.make_dataset("pendulum", "test", 60, seed=999)

def run(tag, **kw):
    cfg = acc.pend_cfg("ot-gb", budget=60000, **kw)
    t0 = time.time()
    res = trainer.train(cfg, target)
    row = {"tag": tag, "seconds": round(time.time()-t0,1)}
    rep_raw = ev.evaluate_joint(res.generator, test, n_bootstrap=100, seed=1)
    row["nrmse_raw"] = round(rep_raw.metrics["nrmse"]["point"], 4)
    if res.generator_ema is not None:
        rep_ema = ev.evaluate_joint(res.generator_ema, test, n_bootstrap=100, seed=1)
        row["nrmse_ema"] = round(rep_ema.metrics["nrmse"]["point"], 4)
    print(json.dumps(row), flush=True)

run("ema998-60k")                 # DESK default now has ema_decay=0.998
run("ema9995-60k", ema_decay=0.9995)
