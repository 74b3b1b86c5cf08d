import sys, json
sys.path.insert(0, "/root/pkg/tests"); sys.path.insert(0, "/root/pkg/src")
import numpy as np
from greybox_ot import physics, trainer, evaluation as ev
import test_acceptance as acc

gen, run_dir, _ = acc.train_cached(acc.pend_cfg("ot-gb"), 500)
test = physics.make_dataset("pendulum", "test", 100, seed=acc.TEST_SEED)
x0 = test.arrays["x0"]; theta = test.theta_matrix()
y = test.arrays["y"][:, 0]          # [100, 50]
yhat = gen.forward_values(x0, theta)  # [100, 50]

err = yhat - y
print("per-time |err| mean (t=1..50):")
prof = np.abs(err).mean(axis=0)
print(np.array2string(prof, precision=3, max_line_width=100))
print("per-time |y| mean:")
print(np.array2string(np.abs(y).mean(axis=0), precision=3, max_line_width=100))

# N-RMSE contributions: early (t<=10) vs late
num_early = np.linalg.norm(err[:, :10], axis=1)
num_late = np.linalg.norm(err[:, 10:], axis=1)
den = np.linalg.norm(y, axis=1)
print("mean ||err_early||/||y||:", (num_early/den).mean())
print("mean ||err_late||/||y||:", (num_late/den).mean())

# correction-function error along true damped trajectories (component analysis)
# evaluate f_phi on states of the complete model; compare with -1.2 v
from greybox_ot import diffengine as de
rng = np.random.default_rng(0)
B = 200
st_ang = rng.uniform(-1.5, 1.5, B)
st_vel = rng.uniform(-2.0, 2.0, B)
om = rng.uniform(0.785, 3.14, B)
emb = gen.encoder.forward(om[:, None])
fpa = -(om**2) * np.sin(st_ang)
u = np.concatenate([st_ang[:,None], st_vel[:,None], st_vel[:,None], fpa[:,None],
                    emb.value], axis=1)
W1, b1 = gen.store["phi.W1"].value, gen.store["phi.b1"].value
W2, b2 = gen.store["phi.W2"].value, gen.store["phi.b2"].value
W3, b3 = gen.store["phi.W3"].value, gen.store["phi.b3"].value
h1 = np.tanh(u @ W1 + b1)
h2 = np.tanh(np.concatenate([h1, emb.value], 1) @ W2 + b2)
corr = (h2 @ W3 + b3)[:, 0]
true_corr = -1.2 * st_vel
resid = corr - true_corr
print("corr err: mean|resid| =", np.abs(resid).mean(), " mean|true| =", np.abs(true_corr).mean())
# effective damping slope: regress corr against -v
xi_hat = -np.sum(corr * st_vel) / np.sum(st_vel * st_vel)
print("effective xi on random states:", xi_hat)

# probe cost trace tail
rows = np.genfromtxt(run_dir / "probe.csv", delimiter=",", names=True)
print("probe cost first/last 5:", rows["probe_cost"][:5], rows["probe_cost"][-5:])
print("probe gp first/last:", rows["probe_gp"][0], rows["probe_gp"][-3:])
