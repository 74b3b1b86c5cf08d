"""Joint-distribution evaluation.

Deterministic tasks: per-record N-RMSE and mean absolute error against the
paired complete-model trajectory (same theta and initial condition).
Stochastic tasks: aggregated-kernel MMD on (x0, theta, y) joints and a
classifier two-sample test on (x, theta, y) joints, comparing generated
samples against the true DGP draws.  Every metric carries a bootstrap
confidence interval over test-set splits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .physics import Dataset
from .utils import fingerprint, read_json, write_json


# ---------------------------------------------------------------------------
# deterministic metrics
# ---------------------------------------------------------------------------

def _per_record_nrmse(yhat, y):
    yhat = np.asarray(yhat, dtype=float).reshape(len(yhat), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch {yhat.shape} vs {y.shape}")
    denom = np.linalg.norm(y, axis=1)
    keep = denom > 0
    if not np.all(keep):
        warnings.warn(f"skipping {np.sum(~keep)} records with zero-norm target",
                      RuntimeWarning)
    num = np.linalg.norm(yhat - y, axis=1)
    return num[keep] / denom[keep]


def nrmse(yhat, y) -> float:
    """Mean over records of ||yhat - y||_F / ||y||_F."""
    return float(np.mean(_per_record_nrmse(yhat, y)))


def abs_err(yhat, y) -> float:
    """Mean absolute entrywise error."""
    yhat = np.asarray(yhat, dtype=float)
    y = np.asarray(y, dtype=float)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch {yhat.shape} vs {y.shape}")
    return float(np.mean(np.abs(yhat - y)))


# ---------------------------------------------------------------------------
# kernel two-sample machinery
# ---------------------------------------------------------------------------

def _sq_dists(a, b):
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    sq = aa + bb - 2.0 * (a @ b.T)
    return np.maximum(sq, 0.0)


def median_heuristic(samples) -> float:
    """Median of pairwise euclidean distances (all unordered pairs)."""
    s = np.asarray(samples, dtype=float).reshape(len(samples), -1)
    if len(s) < 2:
        raise ValueError("median heuristic needs at least 2 samples")
    sq = _sq_dists(s, s)
    iu = np.triu_indices(len(s), k=1)
    med = float(np.median(np.sqrt(sq[iu])))
    if med == 0.0:
        raise ValueError("degenerate sample set: median pairwise distance is 0")
    return med


def _mmd2_unbiased(s1, s2, sigma):
    k11 = np.exp(-_sq_dists(s1, s1) / sigma**2)
    k22 = np.exp(-_sq_dists(s2, s2) / sigma**2)
    k12 = np.exp(-_sq_dists(s1, s2) / sigma**2)
    n, m = len(s1), len(s2)
    np.fill_diagonal(k11, 0.0)
    np.fill_diagonal(k22, 0.0)
    return (k11.sum() / (n * (n - 1)) + k22.sum() / (m * (m - 1))
            - 2.0 * k12.mean())


def mmd_agg(S1, S2, n_scales=5):
    """Aggregated-kernel MMD: exponentiated-quadratic kernels at bandwidths
    sigma_med * 2^i, i in [-2, 2]; aggregate is the mean over bandwidths of
    sqrt(max(MMD^2, 0)).  Returns (aggregate, {sigma: mmd2})."""
    s1 = np.asarray(S1, dtype=float).reshape(len(S1), -1)
    s2 = np.asarray(S2, dtype=float).reshape(len(S2), -1)
    if len(s1) < 2 or len(s2) < 2:
        raise ValueError("mmd needs at least 2 samples per set")
    med = median_heuristic(np.concatenate([s1, s2], axis=0))
    lo = -(n_scales // 2)
    sigmas = [med * 2.0**i for i in range(lo, lo + n_scales)]
    per = {}
    vals = []
    for sigma in sigmas:
        m2 = _mmd2_unbiased(s1, s2, sigma)
        per[sigma] = m2
        vals.append(np.sqrt(max(m2, 0.0)))
    return float(np.mean(vals)), per


def c2st(S1, S2, rng, hidden=(64, 64), epochs=200, folds=5):
    """Classifier two-sample test: 5-fold cross-validated accuracy of an
    MLP separating the sets.  Returns (accuracy, per-record correctness)."""
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.neural_network import MLPClassifier

    s1 = np.asarray(S1, dtype=float).reshape(len(S1), -1)
    s2 = np.asarray(S2, dtype=float).reshape(len(S2), -1)
    X = np.concatenate([s1, s2], axis=0)
    ylab = np.concatenate([np.zeros(len(s1)), np.ones(len(s2))])
    n = len(X)
    if min(len(s1), len(s2)) < folds:
        raise ValueError("not enough samples for the requested folds")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % folds
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Xn = (X - mu) / sd
    correct = np.zeros(n, dtype=bool)
    for f in range(folds):
        test = fold_of == f
        clf = MLPClassifier(hidden_layer_sizes=tuple(hidden), max_iter=epochs,
                            random_state=int(rng.integers(2**31 - 1)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=ConvergenceWarning)
            clf.fit(Xn[~test], ylab[~test])
        pred = clf.predict(Xn[test])
        correct[test] = pred == ylab[test]
    return float(np.mean(correct)), correct


def two_means_shares(X, rng, iters=100):
    """Plain 2-means on rows of X; returns cluster shares sorted ascending."""
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    i0 = rng.integers(len(X))
    d = np.linalg.norm(X - X[i0], axis=1)
    i1 = int(np.argmax(d))
    centers = np.stack([X[i0], X[i1]])
    labels = np.zeros(len(X), dtype=int)
    for _ in range(iters):
        dists = np.stack([np.linalg.norm(X - c, axis=1) for c in centers])
        new = np.argmin(dists, axis=0)
        if np.array_equal(new, labels) and _ > 0:
            break
        labels = new
        for k in (0, 1):
            if np.any(labels == k):
                centers[k] = X[labels == k].mean(axis=0)
    shares = np.array([np.mean(labels == 0), np.mean(labels == 1)])
    return np.sort(shares)


# ---------------------------------------------------------------------------
# joint evaluation protocol
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    task: str
    mode: str                    # deterministic | stochastic
    n_test: int
    seed: int
    metrics: dict = field(default_factory=dict)
    model_fingerprint: str = ""
    dataset_fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": "greybox-ot-evalreport",
            "version": 1,
            "task": self.task,
            "mode": self.mode,
            "n_test": self.n_test,
            "seed": self.seed,
            "metrics": self.metrics,
            "model_fingerprint": self.model_fingerprint,
            "dataset_fingerprint": self.dataset_fingerprint,
            "extra": self.extra,
        }

    def save(self, path):
        write_json(path, self.to_dict())

    @staticmethod
    def load(path) -> "EvalReport":
        d = read_json(path)
        if d.get("format") != "greybox-ot-evalreport":
            raise ValueError(f"{path}: not an evaluation report")
        return EvalReport(task=d["task"], mode=d["mode"], n_test=d["n_test"],
                          seed=d["seed"], metrics=d["metrics"],
                          model_fingerprint=d["model_fingerprint"],
                          dataset_fingerprint=d["dataset_fingerprint"],
                          extra=d.get("extra", {}))

    def any_nan(self) -> bool:
        for m in self.metrics.values():
            if not np.isfinite(m["point"]):
                return True
        return False


def _bootstrap_ci(values_fn, n_records, rng, n_resamples):
    pts = np.empty(n_resamples)
    for r in range(n_resamples):
        idx = rng.integers(0, n_records, size=n_records)
        pts[r] = values_fn(idx)
    return float(np.percentile(pts, 2.5)), float(np.percentile(pts, 97.5))


def _metric_entry(point, ci, n_resamples, **extra):
    e = {"point": float(point), "ci_low": ci[0], "ci_high": ci[1],
         "n_resamples": int(n_resamples)}
    e.update(extra)
    return e


def generate_for_test(generator, test: Dataset, rng, per_draw=1, backend=None,
                      chunk=200):
    """One generated trajectory per (record, draw): [N, per_draw, obs_size]."""
    spec = test.spec()
    theta = test.theta_matrix()
    x0 = test.arrays["x0"]
    x = test.arrays["x"].reshape(test.n, -1)
    latent = generator.latent
    outs = np.empty((test.n, per_draw, spec.obs_size))
    for j in range(per_draw):
        for lo in range(0, test.n, chunk):
            hi = min(lo + chunk, test.n)
            z = latent.sample(rng, hi - lo)
            node = generator.forward(x0=x0[lo:hi], theta=theta[lo:hi], z=z,
                                     x=x[lo:hi], backend=backend)
            outs[lo:hi, j] = node.value
    return outs


def evaluate_joint(generator, test: Dataset, n_bootstrap=200, seed=0,
                   metrics=None, backend=None, model_fingerprint="") -> EvalReport:
    """Run the evaluation protocol for a trained map on a test dataset.

    Deterministic DGPs (single draw per record) default to N-RMSE + ABS on
    paired records; stochastic DGPs default to MMD-agg + C2ST on joint
    samples, generating one trajectory per (x, theta, fresh z).
    """
    if test.role != "test":
        raise ValueError(f"expected a test dataset, got role {test.role!r}")
    if test.task != generator.spec.name:
        raise ValueError(f"dataset task {test.task!r} != model task "
                         f"{generator.spec.name!r}")
    if n_bootstrap < 100:
        raise ValueError("bootstrap needs at least 100 resamples")
    stochastic = test.config.get("dgp", {}).get("kind", "fixed") != "fixed"
    if metrics is None:
        metrics = ("mmd", "c2st") if stochastic else ("nrmse", "abs")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 90210]))
    spec = test.spec()
    M = test.m_draws
    y = test.arrays["y"].reshape(test.n, M, -1)
    report = EvalReport(task=test.task,
                        mode="stochastic" if stochastic else "deterministic",
                        n_test=test.n, seed=int(seed),
                        model_fingerprint=model_fingerprint,
                        dataset_fingerprint=fingerprint(
                            {"task": test.task, "role": test.role, "n": test.n,
                             "seed": test.seed, "config": test.config}))

    yhat = generate_for_test(generator, test, rng, per_draw=M if stochastic else 1,
                             backend=backend)

    if "nrmse" in metrics or "abs" in metrics:
        vals_n = _per_record_nrmse(yhat[:, 0], y[:, 0])
        vals_a = np.mean(np.abs(yhat[:, 0] - y[:, 0]), axis=1)
        if "nrmse" in metrics:
            ci = _bootstrap_ci(lambda idx: float(np.mean(vals_n[idx % len(vals_n)])),
                               len(vals_n), rng, n_bootstrap)
            report.metrics["nrmse"] = _metric_entry(np.mean(vals_n), ci, n_bootstrap)
        if "abs" in metrics:
            ci = _bootstrap_ci(lambda idx: float(np.mean(vals_a[idx])),
                               len(vals_a), rng, n_bootstrap)
            report.metrics["abs"] = _metric_entry(np.mean(vals_a), ci, n_bootstrap)
        report.extra["per_record_nrmse"] = vals_n.tolist()

    if "mmd" in metrics or "c2st" in metrics:
        x0f = test.arrays["x0"].reshape(test.n, -1)
        xf = test.arrays["x"].reshape(test.n, -1)
        theta = test.theta_matrix()

        def joints(base, ys):
            # [N, M, base_dim + theta + obs] flattened over draws
            reps = np.repeat(base[:, None, :], M, axis=1)
            th = np.repeat(theta[:, None, :], M, axis=1)
            return np.concatenate([reps, th, ys], axis=2).reshape(test.n * M, -1)

        if "mmd" in metrics:
            j_true = joints(x0f, y)
            j_gen = joints(x0f, yhat)
            point, per_bw = mmd_agg(j_true, j_gen)

            def mmd_on(idx):
                rows = (idx[:, None] * M + np.arange(M)[None, :]).ravel()
                return mmd_agg(j_true[rows], j_gen[rows])[0]

            ci = _bootstrap_ci(mmd_on, test.n, rng, n_bootstrap)
            report.metrics["mmd"] = _metric_entry(point, ci, n_bootstrap,
                                                  bandwidths={f"{s:.6g}": v for s, v
                                                              in per_bw.items()})
        if "c2st" in metrics:
            j_true = joints(xf, y)
            j_gen = joints(xf, yhat)
            acc, correct = c2st(j_true, j_gen, rng)

            def acc_on(idx):
                rows = (idx[:, None] * M + np.arange(M)[None, :]).ravel()
                both = np.concatenate([correct[rows],
                                       correct[len(j_true) + rows]])
                return float(np.mean(both))

            ci = _bootstrap_ci(acc_on, test.n, rng, n_bootstrap)
            report.metrics["c2st"] = _metric_entry(acc, ci, n_bootstrap)
    return report
