import numpy as np, time, os, json, sys
from greybox_ot import physics, trainer, evaluation as ev

target = physics.make_dataset("pendulum", "target", 500, seed=101)
test = physics.make_dataset("pendulum", "test", 60, seed=102)

def run(tag, budget=60000, **kw):
    base = dict(task="pendulum", mode="ot-gb", budget=budget, seed=11,
                batch_size=64, probe_size=64, probe_every=20,
                convergence_window=0, t_max=10)
    base.update(kw)
    cfg = trainer.TrainConfig(**base)
    t0 = time.time()
    res = trainer.train(cfg, target)
    dt = time.time() - t0
    rep = ev.evaluate_joint(res.generator, test, n_bootstrap=100, seed=1)
    row = dict(tag=tag, seconds=round(dt,1), iters=res.iterations,
               critic_steps=res.epochs, nrmse=round(rep.metrics["nrmse"]["point"],4),
               cost_last=round(res.history[-1][3],4),
               gen_loss_last=round(res.history[-1][1],3))
    print(json.dumps(row), flush=True)
    return row

run("tmax1_lrg5e-4_lrc1e-3", t_max=1, lr_g=5e-4, lr_c=1e-3)
run("tmax2_lrg1e-3_lrc1e-3", t_max=2, lr_g=1e-3, lr_c=1e-3)
run("tmax1_lrg1e-3_lrc2e-3_B128", t_max=1, lr_g=1e-3, lr_c=2e-3, batch_size=128)
