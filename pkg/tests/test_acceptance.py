"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 5 and 7 train real models at desk scale (preset-small networks), so
this module takes tens of minutes end to end; everything else completes in
seconds. Run just this file with `pytest tests/test_acceptance.py -v -s`.
"""

import math
import time

import numpy as np
import pytest

from roundtrip import estimators as est
from roundtrip import kde, metrics, nn
from roundtrip import simdata as sd
from roundtrip.cli import main as cli_main
from roundtrip.model import RoundtripConfig, RoundtripModel, train
from roundtrip.numerics import LOG_2PI
from roundtrip.rng import stream
from roundtrip.simdata import ingest_csv

SMALL = dict(
    g_hidden=(128,) * 4, h_hidden=(64,) * 4, dx_hidden=(64,) * 3, dz_hidden=(32,) * 2,
    batch_size=128, val_is_samples=500, val_points_cap=512,
)


def report(criterion: str, ok: bool, detail: str):
    print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def affine_model(w, c, sigma):
    w = np.asarray(w, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    pinv = np.linalg.pinv(w)
    return RoundtripModel(
        nn.linear_mlp(w, c), nn.linear_mlp(pinv, -pinv @ c), sigma, w.shape[1], w.shape[0]
    )


def test_criterion_1_gradient_suite():
    """Backward gradients match central finite differences on >= 20 random nets."""
    t0 = time.perf_counter()
    rng = stream(2024, "accept-grad")
    checked = 0
    worst = 0.0
    activations = [nn.LEAKY_RELU, nn.SIGMOID, nn.IDENTITY]
    for net_idx in range(20):
        depth = int(rng.integers(1, 4))
        dims = [int(rng.integers(1, 7))] + [int(rng.integers(2, 17)) for _ in range(depth)] \
            + [int(rng.integers(1, 5))]
        act = activations[net_idx % 3]
        net = nn.init_mlp(dims, act, rng, output_activation=act)
        x = rng.standard_normal((2, dims[0]))
        upstream = rng.standard_normal((2, dims[-1]))
        _, cache = nn.forward_cached(net, x)
        grads, _ = nn.backward(net, cache, upstream)
        h = 1e-5
        for arr, grad in zip(net.params(), grads):
            flat, gf = arr.ravel(), grad.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = float(np.sum(upstream * nn.forward(net, x)))
                flat[i] = orig - h
                down = float(np.sum(upstream * nn.forward(net, x)))
                flat[i] = orig
                fd = (up - down) / (2 * h)
                err = abs(fd - gf[i]) / (max(abs(fd), abs(gf[i])) + 1e-8)
                worst = max(worst, err)
                checked += 1
        assert worst <= 1e-5, f"net {net_idx} ({act}): rel err {worst}"
    elapsed = time.perf_counter() - t0
    report(
        "criterion 1 (gradient suite)",
        worst <= 1e-5 and elapsed < 10.0,
        f"20 nets, {checked} partials, worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_2_laplace_linear_exactness():
    """Closed form equals the analytic Gaussian marginal for >= 50 affine maps."""
    t0 = time.perf_counter()
    rng = stream(77, "accept-lp")
    worst = 0.0
    count = 0
    for _rep in range(2):  # 2 x 12 (m, n) pairs x 4 sigmas = 96 random models
        for m in (1, 2, 3):
            for n in range(m, 6):
                for sigma in (0.05, 0.1, 0.5, 1.0):
                    w = rng.standard_normal((n, m))
                    c = rng.standard_normal(n)
                    model = affine_model(w, c, sigma)
                    x = c + w @ rng.standard_normal(m) + sigma * rng.standard_normal(n)
                    got = est.estimate_laplace(x, model)
                    cov = w @ w.T + sigma**2 * np.eye(n)
                    _, logdet = np.linalg.slogdet(cov)
                    want = float(
                        -0.5 * n * LOG_2PI - 0.5 * logdet
                        - 0.5 * (x - c) @ np.linalg.solve(cov, x - c)
                    )
                    worst = max(worst, abs(got - want) / abs(want))
                    count += 1
    elapsed = time.perf_counter() - t0
    report(
        "criterion 2 (Laplace linear-G exactness)",
        count >= 50 and worst <= 1e-9 and elapsed < 5.0,
        f"{count} affine models, worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_3_change_of_variable_limit():
    """sigma -> 0 with m = n and H = G^-1 degenerates to the change-of-variable rule."""
    worst = 0.0
    for dim in (1, 2, 3):
        rng = stream(dim, "accept-cov")
        w = rng.standard_normal((dim, dim)) + 2.0 * np.eye(dim)
        c = rng.standard_normal(dim)
        w_inv = np.linalg.inv(w)
        model = RoundtripModel(
            nn.linear_mlp(w, c), nn.linear_mlp(w_inv, -w_inv @ c), 1e-4, dim, dim
        )
        log_abs_det = math.log(abs(np.linalg.det(w)))
        for _ in range(100):
            x = c + w @ rng.standard_normal(dim)
            z = w_inv @ (x - c)
            cov_rule = -0.5 * dim * LOG_2PI - 0.5 * z @ z - log_abs_det
            worst = max(worst, abs(est.estimate_laplace(x, model) - cov_rule))
    report(
        "criterion 3 (change-of-variable degeneration)",
        worst < 1e-3,
        f"300 queries over m=n in {{1,2,3}}, worst |LP - CoV| = {worst:.2e} nats",
    )


def test_criterion_4_is_consistency():
    """IS hits the analytic value at N=40k and its variance halves when N doubles."""
    t0 = time.perf_counter()
    g = nn.linear_mlp([[1.0]], [0.0])
    h = nn.linear_mlp([[1.0]], [0.0])
    model = RoundtripModel(g, h, 1.0, 1, 1)
    target = math.log(1.0 / math.sqrt(4.0 * math.pi))
    at_n = np.array([est.estimate_is([0.0], model, 40_000, seed=s) for s in range(20)])
    at_2n = np.array([est.estimate_is([0.0], model, 80_000, seed=1000 + s) for s in range(20)])
    mean_err = abs(at_n.mean() - target)
    ratio = at_2n.var(ddof=1) / at_n.var(ddof=1)
    elapsed = time.perf_counter() - t0
    report(
        "criterion 4 (IS consistency)",
        mean_err < 0.02 and 0.35 <= ratio <= 0.65 and elapsed < 30.0,
        f"|mean - log(1/sqrt(4pi))| = {mean_err:.4f}, var ratio 2N/N = {ratio:.3f}, {elapsed:.1f}s",
    )


# Desk-scale training recipe calibrated within criterion 5's 10-minute cap:
# preset-small widths, batch 128, lr 5e-4 (the protocol's 2e-4 needs several
# times more iterations than the budget allows), full-dimensional latent for
# the full-rank mixture, long pretraining so sigma is selected on a
# near-converged G.
DESK = dict(learning_rate=5e-4, seed=0)


def _benchmark_spearman(task_name, dim, m_latent, pretrain, max_epochs, patience,
                        is_samples=4000, seed=0):
    task = sd.make_task(task_name, dim)
    data = task.sampler(20_000, stream(0, "bench", dim))
    split = sd.split_indices(20_000, 0)
    stats = sd.fit_minmax(data[split.train])
    norm = sd.apply_minmax(data, stats)
    cfg = RoundtripConfig(
        m=m_latent, n=dim, pretrain_epochs=pretrain, max_epochs=max_epochs,
        patience_epochs=patience, **DESK, **SMALL,
    )
    t0 = time.perf_counter()
    model, _ = train(norm[split.train], cfg, val_data=norm[split.val], norm_stats=stats)
    train_secs = time.perf_counter() - t0
    vals = est.batch_estimate(norm[split.test], model, "is", num_samples=is_samples, seed=1)
    vals += stats.log_volume_factor()
    true = task.log_density(data[split.test])
    return metrics.spearman(vals, true), train_secs, data, split, true


def _kde_by_validation(data, split, true):
    """Fit both bandwidth rules, keep the better validation log-likelihood."""
    val_lls, fits = {}, {}
    for rule in (kde.RULE_SCOTT, kde.RULE_SILVERMAN):
        fits[rule] = kde.fit_kde(data[split.train], rule)
        val_lls[rule] = float(np.mean(kde.kde_log_density(fits[rule], data[split.val])))
    best_rule = max(sorted(val_lls), key=lambda r: val_lls[r])
    sp = metrics.spearman(kde.kde_log_density(fits[best_rule], data[split.test]), true)
    return sp, best_rule


def test_criterion_5a_simulation_fidelity_2d():
    """Roundtrip-IS Spearman >= 0.75 on the 2-D mixture and the involute."""
    sp_mix, secs_mix, *_ = _benchmark_spearman("indep-mixture", 2, 2,
                                               pretrain=20, max_epochs=45, patience=10,
                                               is_samples=2000)
    sp_inv, secs_inv, *_ = _benchmark_spearman("involute", 2, 1,
                                               pretrain=100, max_epochs=170, patience=20)
    report(
        "criterion 5a (2-D simulation fidelity)",
        sp_mix >= 0.75 and sp_inv >= 0.75 and secs_mix < 600 and secs_inv < 600,
        f"mixture d=2 spearman {sp_mix:.3f} ({secs_mix:.0f}s), "
        f"involute spearman {sp_inv:.3f} ({secs_inv:.0f}s); floor 0.75",
    )


def test_criterion_5b_dimension_sweep_vs_kde():
    """Roundtrip-IS Spearman >= KDE Spearman at d in {6, 8, 10}.

    Known shortfall: with the log-sum-exp KDE this spec mandates (criterion
    6), the baseline does not collapse above d=5 the way the ordering claim
    assumes, and within the preset-small/10-minute budget the model tops out
    below it at d=6 (~0.94 vs ~0.97) and marginally at d=8. See the decisions
    ledger for the full calibration evidence. The comparison is run faithfully
    and reported per dimension rather than weakened.
    """
    lines = []
    ok = True
    for dim in (6, 8, 10):
        sp_rt, secs, data, split, true = _benchmark_spearman(
            "indep-mixture", dim, dim, pretrain=150, max_epochs=185, patience=10
        )
        sp_kde, best_rule = _kde_by_validation(data, split, true)
        ok = ok and sp_rt >= sp_kde and secs < 600
        lines.append(f"d={dim}: RT-IS {sp_rt:.3f} vs KDE({best_rule}) {sp_kde:.3f} ({secs:.0f}s)")
    report("criterion 5b (dimension sweep vs KDE)", ok, "; ".join(lines))


def test_criterion_6_kde_oracle():
    """Log-sum-exp KDE equals the naive sum; bandwidth formulas exact."""
    rng = stream(6, "accept-kde")
    x = rng.standard_normal((1000, 2))
    model = kde.fit_kde(x, "scott")
    queries = rng.standard_normal((25, 2)) * 2.0
    fast = kde.kde_log_density(model, queries)
    worst = 0.0
    for i, q in enumerate(queries):
        total = 0.0
        for t in model.train_points:
            prod = 1.0
            for xj, tj, hj in zip(q, t, model.bandwidths):
                prod *= math.exp(-0.5 * ((xj - tj) / hj) ** 2) / (hj * math.sqrt(2 * math.pi))
            total += prod
        worst = max(worst, abs(fast[i] - math.log(total / 1000)))
    n, d = 300, 3
    pts = rng.standard_normal((n, d))
    sds = pts.std(axis=0, ddof=1)
    scott_err = np.max(np.abs(
        kde.fit_kde(pts, "scott").bandwidths - n ** (-1.0 / (d + 4)) * sds
    ))
    silv_err = np.max(np.abs(
        kde.fit_kde(pts, "silverman").bandwidths - (n * (d + 2) / 4.0) ** (-1.0 / (d + 4)) * sds
    ))
    report(
        "criterion 6 (KDE oracle)",
        worst <= 1e-10 and scott_err <= 1e-12 and silv_err <= 1e-12,
        f"lse vs naive worst {worst:.2e}; bandwidth errs scott {scott_err:.2e}, "
        f"silverman {silv_err:.2e}",
    )


def test_criterion_7_outlier_detection():
    """Synthetic outlier benchmark: RT-IS precision@k >= 0.8 and >= KDE's."""
    dataset = sd.make_outlier_dataset(6, 10_000, 0.01, stream(0, "outlier-data"))
    split = sd.split_indices(10_000, 0)
    stats = sd.fit_minmax(dataset.points[split.train])
    norm = sd.apply_minmax(dataset.points, stats)
    test_labels = dataset.labels[split.test]
    k = int(test_labels.sum())
    cfg = RoundtripConfig(
        m=6, n=6, pretrain_epochs=60, max_epochs=110, patience_epochs=12, **DESK, **SMALL
    )
    t0 = time.perf_counter()
    model, _ = train(norm[split.train], cfg, val_data=norm[split.val], norm_stats=stats)
    secs = time.perf_counter() - t0
    rt_ll = est.batch_estimate(norm[split.test], model, "is", num_samples=2000, seed=1)
    prec_rt = metrics.precision_at_k(metrics.outlier_scores(rt_ll), test_labels, k)
    val_lls, fits = {}, {}
    for rule in (kde.RULE_SCOTT, kde.RULE_SILVERMAN):
        fits[rule] = kde.fit_kde(dataset.points[split.train], rule)
        val_lls[rule] = float(np.mean(kde.kde_log_density(fits[rule], dataset.points[split.val])))
    best = max(sorted(val_lls), key=lambda r: val_lls[r])
    kde_ll = kde.kde_log_density(fits[best], dataset.points[split.test])
    prec_kde = metrics.precision_at_k(metrics.outlier_scores(kde_ll), test_labels, k)
    report(
        "criterion 7 (outlier detection)",
        prec_rt >= 0.8 and prec_rt >= prec_kde and secs < 600,
        f"k={k}: RT-IS precision {prec_rt:.3f} vs KDE({best}) {prec_kde:.3f} ({secs:.0f}s)",
    )


def test_criterion_8_metric_oracles():
    """Spearman matches brute-force ranks on 1000 vectors; precision@k matches counting."""
    rng = stream(8, "accept-metrics")
    checked = 0
    for _ in range(1000):
        n = int(rng.integers(3, 30))
        tied = rng.random() < 0.5
        a = rng.integers(0, 5, n).astype(float) if tied else rng.standard_normal(n)
        b = rng.integers(0, 5, n).astype(float) if tied else rng.standard_normal(n)
        if len(np.unique(a)) < 2 or len(np.unique(b)) < 2:
            continue
        ra = np.array([np.sum(a < v) + (np.sum(a == v) + 1) / 2.0 for v in a])
        rb = np.array([np.sum(b < v) + (np.sum(b == v) + 1) / 2.0 for v in b])
        np.testing.assert_array_equal(metrics.average_ranks(a), ra)
        np.testing.assert_array_equal(metrics.average_ranks(b), rb)
        da, db = ra - ra.mean(), rb - rb.mean()
        brute = float(da @ db) / math.sqrt(float(da @ da) * float(db @ db))
        assert metrics.spearman(a, b) == pytest.approx(brute, abs=1e-12)
        scores = np.round(rng.standard_normal(n), 1)
        labels = rng.random(n) < 0.3
        k = int(rng.integers(1, n + 1))
        order = sorted(range(n), key=lambda i: (-scores[i], i))
        brute_prec = sum(1 for i in order[:k] if labels[i]) / k
        assert metrics.precision_at_k(scores, labels, k) == brute_prec
        checked += 1
    report(
        "criterion 8 (metric oracles)",
        checked >= 900,
        f"{checked} random vectors: ranks exactly equal, correlations within 1e-12, "
        f"precision@k exact",
    )


def test_criterion_9_cli_determinism(tmp_path):
    """Identical CLI runs give byte-identical files; workers don't change results."""
    data = tmp_path / "data.csv"
    rc = cli_main(["simulate", "--task", "indep-mixture", "--dim", "1", "--count", "400",
                   "--seed", "3", "--out", str(data)])
    assert rc == 0
    data2 = tmp_path / "data2.csv"
    assert cli_main(["simulate", "--task", "indep-mixture", "--dim", "1", "--count", "400",
                     "--seed", "3", "--out", str(data2)]) == 0
    sim_same = data.read_bytes() == data2.read_bytes()

    ckpts = []
    for name in ("m1.rtde", "m2.rtde"):
        path = tmp_path / name
        assert cli_main([
            "train", "--data", str(data), "--latent-dim", "1", "--g-hidden", "16,16",
            "--h-hidden", "16,16", "--dx-hidden", "8", "--dz-hidden", "8",
            "--batch-size", "32", "--val-is-samples", "100", "--pretrain-epochs", "2",
            "--max-epochs", "4", "--patience", "2", "--seed", "4", "--out", str(path),
        ]) == 0
        ckpts.append(path)
    train_same = ckpts[0].read_bytes() == ckpts[1].read_bytes()
    logs_same = (
        ckpts[0].with_name("m1.rtde.trainlog.csv").read_bytes()
        == ckpts[1].with_name("m2.rtde.trainlog.csv").read_bytes()
    )

    outs = []
    for name, workers in (("e1.csv", 1), ("e2.csv", 1), ("e3.csv", 3)):
        out = tmp_path / name
        assert cli_main([
            "estimate", "--checkpoint", str(ckpts[0]), "--points", str(data),
            "--method", "is", "--is-samples", "200", "--seed", "5",
            "--workers", str(workers), "--out", str(out),
        ]) == 0
        outs.append(out.read_bytes())
    est_same = outs[0] == outs[1]
    workers_same = outs[0] == outs[2]
    ok = sim_same and train_same and logs_same and est_same and workers_same
    report(
        "criterion 9 (CLI determinism)",
        ok,
        f"simulate identical={sim_same}, checkpoints identical={train_same}, "
        f"trainlogs identical={logs_same}, estimates identical={est_same}, "
        f"parallel==serial={workers_same}",
    )
