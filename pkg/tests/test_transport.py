import numpy as np
import pytest

from greybox_ot import diffengine as de
from greybox_ot import transport as tp
from greybox_ot.models import make_critic

from conftest import central_diff, rel_err


@pytest.fixture
def rng():
    return np.random.default_rng(5)


def dist_kernel(u, v):
    return 0.5 * (np.linalg.norm(u) + np.linalg.norm(v) - np.linalg.norm(u - v))


class LinearCritic:
    def __init__(self, w):
        self.w = de.constant(np.asarray(w, dtype=float)[:, None])

    def forward(self, y):
        y = y if isinstance(y, de.Node) else de.constant(np.atleast_2d(y))
        return de.matmul(y, self.w)

    def score_sum(self, y):
        return de.reduce_sum(self.forward(y))


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def test_distance_kernel_self_is_norm(rng):
    a = rng.normal(size=7)
    assert tp.kernel(a, a).item() == pytest.approx(np.linalg.norm(a), abs=1e-14)


def test_eqquad_self_is_one(rng):
    a = rng.normal(size=7)
    spec = tp.KernelSpec("eqquad", sigma=1.5)
    assert tp.kernel(a, a, spec).item() == 1.0


def test_kernel_symmetry(rng):
    a, b = rng.normal(size=6), rng.normal(size=6)
    for spec in (tp.KernelSpec(), tp.KernelSpec("eqquad", 0.7)):
        assert tp.kernel(a, b, spec).item() == pytest.approx(
            tp.kernel(b, a, spec).item(), abs=1e-14)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        tp.KernelSpec("eqquad", sigma=0.0)
    with pytest.raises(ValueError):
        tp.KernelSpec("rbf")
    with pytest.raises(ValueError, match="mismatch"):
        tp.kernel(np.ones(3), np.ones(4))


# ---------------------------------------------------------------------------
# Monte-Carlo weak cost
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_identity_map_zero_cost(gamma, rng):
    x = rng.normal(size=9)
    T = np.tile(x, (4, 1))
    assert abs(tp.weak_cost_mc(x, T, gamma).item()) <= 1e-12


def test_quadratic_family_dirac():
    x = np.array([1.0, -2.0, 0.5])
    T = np.array([[0.5, 0.0, 2.0]])
    val = tp.weak_cost_mc(x, T, 0.0, family="quadratic").item()
    assert val == pytest.approx(0.5 * np.sum((x - T[0])**2), abs=1e-13)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_estimator_matches_enumeration(gamma, rng):
    # categorical latent with 4 atoms: averaging the |Z|=2 estimator over all
    # ordered draw pairs must equal the exact population cost
    atoms = rng.normal(size=(4, 6))
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    x = rng.normal(size=6)
    exact = (0.5 * dist_kernel(x, x)
             + (1 - gamma) / 2 * sum(p * dist_kernel(t, t)
                                     for p, t in zip(probs, atoms))
             - sum(p * dist_kernel(x, t) for p, t in zip(probs, atoms))
             + gamma / 2 * sum(pi * pj * dist_kernel(ti, tj)
                               for pi, ti in zip(probs, atoms)
                               for pj, tj in zip(probs, atoms)))
    est = 0.0
    for i in range(4):
        for j in range(4):
            pair = np.stack([atoms[i], atoms[j]])
            est += probs[i] * probs[j] * tp.weak_cost_mc(x, pair, gamma).item()
    assert abs(est - exact) <= 1e-9


def test_estimator_unbiased_under_resampling(rng):
    # 10^4 z-resamplings on a fixed toy generator: the sample mean of the
    # estimator must sit within 3 standard errors of the enumerated value
    atoms = rng.normal(size=(4, 5))
    probs = np.array([0.4, 0.3, 0.2, 0.1])
    x = rng.normal(size=5)
    gamma = 1.0
    exact = (0.5 * dist_kernel(x, x)
             - sum(p * dist_kernel(x, t) for p, t in zip(probs, atoms))
             + gamma / 2 * sum(pi * pj * dist_kernel(ti, tj)
                               for pi, ti in zip(probs, atoms)
                               for pj, tj in zip(probs, atoms)))
    n = 10_000
    draws = rng.choice(4, size=(n, 2), p=probs)
    vals = np.empty(n)
    for r in range(n):
        vals[r] = tp.weak_cost_mc(x, atoms[draws[r]], gamma).item()
    se = vals.std(ddof=1) / np.sqrt(n)
    assert abs(vals.mean() - exact) <= 3 * se


def test_batched_equals_mean_of_singles(rng):
    x = rng.normal(size=(3, 4))
    T = rng.normal(size=(3, 2, 4))
    batched = tp.weak_cost_mc(x, T, 1.0).item()
    singles = [tp.weak_cost_mc(x[i], T[i], 1.0).item() for i in range(3)]
    assert batched == pytest.approx(np.mean(singles), abs=1e-12)


def test_cost_nonnegative_distance_kernel(rng):
    for _ in range(20):
        x = rng.normal(size=6)
        T = rng.normal(size=(3, 6))
        assert tp.weak_cost_mc(x, T, 1.0).item() >= -1e-12


def test_gamma_needs_pairs():
    with pytest.raises(ValueError, match=">= 2"):
        tp.weak_cost_mc(np.ones(3), np.ones((1, 3)), 0.5)
    with pytest.raises(ValueError):
        tp.WeakCostConfig(gamma=1.0, n_z=1)
    with pytest.raises(ValueError):
        tp.WeakCostConfig(gamma=2.0, n_z=4)


def test_cost_differentiable(rng):
    x = rng.normal(size=(2, 5))
    T = de.variable(rng.normal(size=(2, 3, 5)))
    cost = tp.weak_cost_mc(de.constant(x), T, 1.0)
    de.backward(cost)
    fd = central_diff(T, lambda: tp.weak_cost_mc(de.constant(x), T, 1.0).value,
                      entries=[(0, 0, 1), (1, 2, 4), (0, 1, 3)])
    for idx in [(0, 0, 1), (1, 2, 4), (0, 1, 3)]:
        assert abs(T.grad[idx] - fd[idx]) / (abs(fd[idx]) + 1e-9) <= 1e-5


# ---------------------------------------------------------------------------
# variance term
# ---------------------------------------------------------------------------

def test_variance_identical_samples_zero(rng):
    # a Dirac has zero variance; the mean of identical floats may round in
    # the last ulp, hence the tiny tolerance
    s = np.tile(rng.normal(size=4), (5, 1))
    assert abs(tp.variance_term(s).item()) <= 1e-28


def test_variance_two_antipodal(rng):
    a = rng.normal(size=6)
    assert tp.variance_term(np.stack([a, -a])).item() == pytest.approx(
        2 * np.sum(a * a), rel=1e-12)


def test_variance_matches_direct(rng):
    s = rng.normal(size=(9, 4))
    ref = np.sum((s - s.mean(axis=0))**2) / 8
    assert tp.variance_term(s).item() == pytest.approx(ref, rel=1e-12)


def test_variance_needs_two():
    with pytest.raises(ValueError):
        tp.variance_term(np.ones((1, 3)))


# ---------------------------------------------------------------------------
# gradient penalty
# ---------------------------------------------------------------------------

def test_gp_unit_linear_critic_zero(rng):
    w = rng.normal(size=8)
    w /= np.linalg.norm(w)
    gp = tp.gradient_penalty(LinearCritic(w), rng.normal(size=(6, 8)),
                             rng.normal(size=(6, 8)), rng)
    assert abs(gp.item()) <= 1e-12


def test_gp_linear_norm3_is_four(rng):
    w = rng.normal(size=8)
    w = 3.0 * w / np.linalg.norm(w)
    gp = tp.gradient_penalty(LinearCritic(w), rng.normal(size=(6, 8)),
                             rng.normal(size=(6, 8)), rng)
    assert gp.item() == pytest.approx(4.0, abs=1e-12)


def test_gp_mlp_value_matches_fd_reconstruction(rng):
    # rebuild ||grad_y f|| by finite differences over the interpolates and
    # compare the penalty value
    crit = make_critic("pendulum", rng=3, hidden=(10, 6))
    yhat = rng.normal(size=(3, 50))
    y = rng.normal(size=(3, 50))
    seed_rng = np.random.default_rng(77)
    gp = tp.gradient_penalty(crit, yhat, y, seed_rng)
    eps = np.random.default_rng(77).uniform(size=(3, 1))
    mix = eps * y + (1 - eps) * yhat
    h = 1e-6
    norms = []
    for i in range(3):
        g = np.zeros(50)
        for d in range(50):
            up = mix.copy()
            up[i, d] += h
            dn = mix.copy()
            dn[i, d] -= h
            g[d] = (crit.forward(up).value[i, 0] - crit.forward(dn).value[i, 0]) / (2 * h)
        norms.append(np.linalg.norm(g))
    ref = np.mean([(n - 1.0)**2 for n in norms])
    assert abs(gp.item() - ref) <= 1e-5


def test_gp_batch_mismatch(rng):
    with pytest.raises(ValueError, match="batch shapes"):
        tp.gradient_penalty(LinearCritic(np.ones(4)), np.ones((3, 4)),
                            np.ones((2, 4)), rng)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def test_generator_loss_zero_critic_identity_outputs(rng):
    x = rng.normal(size=(4, 6))
    out = de.constant(x.copy())
    cfg = tp.WeakCostConfig(gamma=0.0, n_z=1)
    loss, cost = tp.generator_loss(x, out, LinearCritic(np.zeros(6)), cfg)
    assert abs(loss.item()) <= 1e-12
    assert abs(cost.item()) <= 1e-12


def test_generator_loss_constant_critic(rng):
    x = rng.normal(size=(4, 6))
    out = de.constant(rng.normal(size=(4, 6)))

    class Const:
        def forward(self, y):
            y = y if isinstance(y, de.Node) else de.constant(y)
            B = y.value.shape[0]
            return de.add(de.mul(y[:, :1], de.constant(np.zeros((B, 1)))),
                          de.constant(2.5))

    cfg = tp.WeakCostConfig(gamma=0.0, n_z=1)
    loss, cost = tp.generator_loss(x, out, Const(), cfg)
    assert loss.item() == pytest.approx(cost.item() - 2.5, abs=1e-12)


def test_generator_loss_hand_oracle_two_samples(rng):
    # spreadsheet-style check: 2 source samples, |Z| = 2, gamma = 1
    x = np.array([[1.0, 0.0], [0.0, 2.0]])
    out_vals = np.array([[[1.0, 1.0], [2.0, 0.0]],
                         [[0.0, 1.0], [1.0, 2.0]]])
    w = np.array([0.3, -0.7])
    per_x = []
    for i in range(2):
        c = (0.5 * dist_kernel(x[i], x[i])
             - 0.5 * sum(dist_kernel(x[i], t) for t in out_vals[i])
             + 0.5 * dist_kernel(out_vals[i][0], out_vals[i][1]))
        per_x.append(c)
    critic_term = np.mean([out @ w for rec in out_vals for out in rec])
    expected = np.mean(per_x) - critic_term
    cfg = tp.WeakCostConfig(gamma=1.0, n_z=2)
    loss, cost = tp.generator_loss(x, de.constant(out_vals.reshape(4, 2)),
                                   LinearCritic(w), cfg)
    assert cost.item() == pytest.approx(np.mean(per_x), abs=1e-12)
    assert loss.item() == pytest.approx(expected, abs=1e-12)


def test_generator_loss_directional_sanity(rng):
    # moving outputs toward the critic-preferred direction lowers the loss:
    # the critic gain (slope 3) beats the transport cost (slope 1/2)
    w = rng.normal(size=5)
    w = 3.0 * w / np.linalg.norm(w)
    x = rng.normal(size=(4, 5))
    cfg = tp.WeakCostConfig(gamma=0.0, n_z=1)
    delta = 0.1
    l0, _ = tp.generator_loss(x, de.constant(x.copy()), LinearCritic(w), cfg)
    l1, _ = tp.generator_loss(x, de.constant(x + delta * w / 3.0),
                              LinearCritic(w), cfg)
    assert l1.item() < l0.item()


def test_generator_loss_empty_batch():
    cfg = tp.WeakCostConfig()
    with pytest.raises(ValueError, match="empty"):
        tp.generator_loss(np.empty((0, 3)), de.constant(np.empty((0, 3))),
                          LinearCritic(np.ones(3)), cfg)


def test_critic_loss_identical_batches_unit_linear(rng):
    w = rng.normal(size=6)
    w /= np.linalg.norm(w)
    batch = rng.normal(size=(5, 6))
    loss, gp = tp.critic_loss(batch, batch.copy(), LinearCritic(w), lam=1.0,
                              rng=rng)
    assert abs(loss.item()) <= 1e-12
    assert abs(gp.item()) <= 1e-12


def test_critic_loss_hand_oracle(rng):
    w = rng.normal(size=4)
    yhat = rng.normal(size=(3, 4))
    y = rng.normal(size=(3, 4))
    seed = np.random.default_rng(13)
    loss, gp = tp.critic_loss(yhat, y, LinearCritic(w), lam=1.0,
                              rng=np.random.default_rng(13))
    expected = yhat @ w
    expected = expected.mean() - (y @ w).mean() + (np.linalg.norm(w) - 1)**2
    assert loss.item() == pytest.approx(expected, abs=1e-12)


def test_critic_loss_empty():
    with pytest.raises(ValueError, match="empty"):
        tp.critic_loss(np.empty((0, 2)), np.ones((2, 2)),
                       LinearCritic(np.ones(2)))


def test_wgan_losses_definitional(rng):
    w = rng.normal(size=5)
    x = rng.normal(size=(4, 5))
    out_vals = rng.normal(size=(4, 5))
    out = de.constant(out_vals)
    cfg = tp.WeakCostConfig(gamma=0.0, n_z=1)
    ot_loss, cost = tp.generator_loss(x, out, LinearCritic(w), cfg)
    gen, cri = tp.wgan_losses(x, out, out_vals, rng.normal(size=(4, 5)),
                              LinearCritic(w), rng=rng)
    # generator loss with the cost term zeroed
    assert gen.item() == pytest.approx(ot_loss.item() - cost.item(), abs=1e-12)


def test_losses_finite_and_differentiable(rng):
    crit = make_critic("pendulum", rng=21, hidden=(12, 8))
    x = rng.normal(size=(3, 50))
    out = de.variable(rng.normal(size=(3, 50)))
    cfg = tp.WeakCostConfig(gamma=0.0, n_z=1)
    loss, _ = tp.generator_loss(x, out, crit, cfg)
    assert np.isfinite(loss.value)
    grads = de.backward(loss, set_grads=False)
    assert np.all(np.isfinite(grads[id(out)].value))
