import numpy as np, time, os, json
from greybox_ot import physics, trainer, evaluation as ev

target = physics.make_dataset("pendulum", "target", 500, seed=101)
test = physics.make_dataset("pendulum", "test", 60, seed=102)

def run(tag, **kw):
    cfg = trainer.TrainConfig(task="pendulum", mode="ot-gb", budget=60000, seed=11,
                              batch_size=64, t_max=10, probe_size=64, probe_every=10,
                              convergence_window=0, **kw)
    t0 = time.time()
    res = trainer.train(cfg, target)
    dt = time.time() - t0
    rep = ev.evaluate_joint(res.generator, test, n_bootstrap=100, seed=1)
    row = dict(tag=tag, seconds=round(dt,1), iters=res.iterations,
               critic_steps=res.epochs, nrmse=rep.metrics["nrmse"]["point"],
               absm=rep.metrics["abs"]["point"],
               cost_last=res.history[-1][3], gen_loss_last=res.history[-1][1])
    print(json.dumps(row), flush=True)
    return row

run("lr1e-4", lr_g=1e-4, lr_c=1e-4)
run("lr5e-4", lr_g=5e-4, lr_c=5e-4)
run("lr1e-3_tmax5", lr_g=1e-3, lr_c=1e-3, t_max=5)
