"""Command-line entry point.

Subcommands: simulate | train | estimate | grid | benchmark | outlier | kde.
Every run writes a resolved-config echo next to its outputs, and all outputs
are fully determined by (resolved config, input files).

Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import estimators, kde, metrics, model as model_mod, simdata
from .numerics import NumericalError
from .rng import stream

PRESETS = {
    "paper": dict(
        g_hidden=(512,) * 10, h_hidden=(256,) * 10, dx_hidden=(256,) * 4,
        dz_hidden=(128,) * 2, batch_size=64, val_is_samples=2000, val_points_cap=None,
    ),
    "small": dict(
        g_hidden=(128,) * 4, h_hidden=(64,) * 4, dx_hidden=(64,) * 3,
        dz_hidden=(32,) * 2, batch_size=128, val_is_samples=500, val_points_cap=512,
    ),
}

SIDE_COLUMNS = ("label", "log_density")  # header names treated as metadata, not features


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if v != "")

def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v != "")


def _write_config_echo(out_path: Path, resolved: dict) -> Path:
    echo = out_path / "config.txt" if out_path.is_dir() else out_path.with_name(out_path.name + ".config")
    lines = [f"{k}={resolved[k]}" for k in sorted(resolved)]
    echo.write_text("\n".join(lines) + "\n")
    return echo


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    values: dict[str, str] = {}
    for i, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{i}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        values[key.strip().replace("-", "_")] = val.strip()
    return values


# coercions for config-file values whose command default is None
_NONE_KEY_COERCERS = dict(
    latent_dim=int, batch_size=int, val_is_samples=int, val_points_cap=int,
    workers=int, dim=int, count=int, resolution=int, is_samples=int,
    fraction=float, g_hidden=_parse_int_list, h_hidden=_parse_int_list,
    dx_hidden=_parse_int_list, dz_hidden=_parse_int_list, dims=_parse_int_list,
    bounds=_parse_float_list, sigma_grid=_parse_float_list,
)


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags, with file values coerced to
    the default's type."""
    file_vals = _load_config_file(getattr(args, "config", None))
    resolved = dict(defaults)
    for key, raw in file_vals.items():
        if key not in defaults:
            raise ValueError(f"unknown config key {key!r}")
        ref = defaults[key]
        if isinstance(ref, bool):
            resolved[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(ref, int):
            resolved[key] = int(raw)
        elif isinstance(ref, float):
            resolved[key] = float(raw)
        elif isinstance(ref, tuple):
            resolved[key] = (_parse_int_list(raw) if all(isinstance(v, int) for v in ref) and ref
                             else _parse_float_list(raw))
        elif ref is None and key in _NONE_KEY_COERCERS:
            resolved[key] = _NONE_KEY_COERCERS[key](raw)
        else:
            resolved[key] = raw
    for key, val in vars(args).items():
        if key in ("func", "config"):
            continue
        if val is not None and key in resolved:
            resolved[key] = val
        elif key not in resolved:
            resolved[key] = val
    return resolved


def _feature_columns(result: simdata.IngestResult) -> tuple[np.ndarray, np.ndarray | None]:
    """Split off metadata columns; returns (features, labels or None)."""
    data, header = result.data, result.header
    if header is None:
        return data, None
    keep = [i for i, name in enumerate(header) if name not in SIDE_COLUMNS]
    labels = None
    if "label" in header:
        labels = data[:, header.index("label")] != 0.0
    return data[:, keep], labels


def _default_latent_dim(task: str, dim: int) -> int:
    if task == "involute":
        return 1
    if task == "octagon":
        return 2
    return dim  # full-dimensional density


def _build_train_config(resolved: dict, m: int, n: int) -> model_mod.RoundtripConfig:
    preset = PRESETS[resolved["preset"]]
    def pick(key):
        return resolved[key] if resolved.get(key) is not None else preset[key]
    return model_mod.RoundtripConfig(
        m=m,
        n=n,
        alpha=resolved["alpha"],
        beta=resolved["beta"],
        sigma_grid=resolved["sigma_grid"],
        pretrain_epochs=resolved["pretrain_epochs"],
        batch_size=pick("batch_size"),
        learning_rate=resolved["learning_rate"],
        adam_beta1=resolved["adam_beta1"],
        adam_beta2=resolved["adam_beta2"],
        patience_epochs=resolved["patience"],
        max_epochs=resolved["max_epochs"],
        val_is_samples=pick("val_is_samples"),
        val_points_cap=pick("val_points_cap"),
        proposal_dof=resolved["proposal_dof"],
        proposal_scale=resolved["proposal_scale"],
        leaky_slope=resolved["leaky_slope"],
        g_hidden=pick("g_hidden"),
        h_hidden=pick("h_hidden"),
        dx_hidden=pick("dx_hidden"),
        dz_hidden=pick("dz_hidden"),
        seed=resolved["seed"],
    )


TRAIN_DEFAULTS = dict(
    latent_dim=None, alpha=10.0, beta=10.0, sigma_grid=(0.01, 0.05, 0.1, 0.2, 0.4, 0.5),
    pretrain_epochs=20, learning_rate=2e-4, adam_beta1=0.9, adam_beta2=0.999,
    patience=10, max_epochs=200, proposal_dof=5.0, proposal_scale=1.0, leaky_slope=0.2,
    preset="paper", batch_size=None, val_is_samples=None, val_points_cap=None,
    g_hidden=None, h_hidden=None, dx_hidden=None, dz_hidden=None,
    seed=0, normalize=True, is_samples=estimators.DEFAULT_IS_SAMPLES,
)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--latent-dim", type=int, dest="latent_dim")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--sigma-grid", type=_parse_float_list, dest="sigma_grid")
    p.add_argument("--pretrain-epochs", type=int, dest="pretrain_epochs")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--adam-beta1", type=float, dest="adam_beta1")
    p.add_argument("--adam-beta2", type=float, dest="adam_beta2")
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--proposal-dof", type=float, dest="proposal_dof")
    p.add_argument("--proposal-scale", type=float, dest="proposal_scale")
    p.add_argument("--leaky-slope", type=float, dest="leaky_slope")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--val-is-samples", type=int, dest="val_is_samples")
    p.add_argument("--val-points-cap", type=int, dest="val_points_cap")
    p.add_argument("--g-hidden", type=_parse_int_list, dest="g_hidden")
    p.add_argument("--h-hidden", type=_parse_int_list, dest="h_hidden")
    p.add_argument("--dx-hidden", type=_parse_int_list, dest="dx_hidden")
    p.add_argument("--dz-hidden", type=_parse_int_list, dest="dz_hidden")
    p.add_argument("--is-samples", type=int, dest="is_samples")
    p.add_argument("--no-normalize", dest="normalize", action="store_false", default=None)


def cmd_simulate(args) -> int:
    defaults = dict(task="indep-mixture", dim=2, count=20000, seed=0, quad_points=simdata.DEFAULT_QUAD_POINTS)
    resolved = _resolve(args, defaults)
    task = simdata.make_task(resolved["task"], resolved["dim"], resolved["quad_points"])
    rng = stream(resolved["seed"], f"simulate-{task.name}", task.dim)
    points = task.sampler(resolved["count"], rng)
    log_d = task.log_density(points)
    out = Path(args.out)
    header = [f"x{i + 1}" for i in range(task.dim)] + ["log_density"]
    simdata.write_csv(out, np.column_stack([points, log_d]), header)
    _write_config_echo(out, resolved)
    print(f"wrote {resolved['count']} samples from {task.name} (dim {task.dim}) to {out}")
    return 0


def _write_trainlog(path: Path, log: model_mod.TrainLog) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,generator_loss,discriminator_loss,val_log_likelihood\n")
        for rec in log.records:
            fh.write(f"{rec.epoch},{rec.generator_loss!r},{rec.discriminator_loss!r},"
                     f"{rec.val_log_likelihood!r}\n")


def cmd_train(args) -> int:
    resolved = _resolve(args, dict(TRAIN_DEFAULTS))
    ingest = simdata.ingest_csv(args.data)
    features, _ = _feature_columns(ingest)
    n = features.shape[1]
    m = resolved["latent_dim"] if resolved["latent_dim"] is not None else max(1, n // 2)
    resolved["latent_dim"] = m
    seed = resolved["seed"]

    n_val = int(round(0.1 * features.shape[0]))
    perm = stream(seed, "train-holdout").permutation(features.shape[0])
    val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    stats = None
    work = features
    if resolved["normalize"]:
        stats = simdata.fit_minmax(features[fit_idx] if len(fit_idx) else features)
        work = simdata.apply_minmax(features, stats)

    config = _build_train_config(resolved, m, n)
    trained, log = model_mod.train(
        work[fit_idx] if len(fit_idx) else work,
        config,
        val_data=work[val_idx] if n_val else None,
        norm_stats=stats,
    )
    out = Path(args.out)
    ckpt.save_checkpoint(trained, out)
    _write_trainlog(out.with_name(out.name + ".trainlog.csv"), log)
    _write_config_echo(out, resolved)
    print(f"trained model (m={m}, n={n}, sigma={trained.sigma}) in "
          f"{log.stopped_epoch} epochs; best validation epoch {log.best_epoch} "
          f"(mean log-likelihood {log.best_val_log_likelihood})")
    return 0


def _estimate_file(trained, points: np.ndarray, method: str, resolved: dict) -> np.ndarray:
    """Log densities in original data units for original-unit query points."""
    work = points
    shift = 0.0
    if trained.norm_stats is not None:
        work = simdata.apply_minmax(points, trained.norm_stats)
        shift = trained.norm_stats.log_volume_factor()
    vals = estimators.batch_estimate(
        work, trained, method,
        num_samples=resolved["is_samples"],
        proposal_scale=resolved["proposal_scale"],
        proposal_dof=resolved["proposal_dof"],
        seed=resolved["seed"],
        workers=resolved["workers"],
    )
    return vals + shift


def cmd_estimate(args) -> int:
    defaults = dict(method="is", is_samples=estimators.DEFAULT_IS_SAMPLES,
                    proposal_dof=5.0, proposal_scale=1.0, seed=0, workers=1)
    resolved = _resolve(args, defaults)
    trained = ckpt.load_checkpoint(args.checkpoint)
    ingest = simdata.ingest_csv(args.points)
    points, _ = _feature_columns(ingest)
    if points.shape[1] != trained.n:
        raise ValueError(
            f"points have {points.shape[1]} feature columns but the checkpoint expects {trained.n}"
        )
    vals = _estimate_file(trained, points, resolved["method"], resolved)
    out = Path(args.out)
    simdata.write_csv(out, vals[:, None], ["log_density"])
    _write_config_echo(out, resolved)
    print(f"estimated {len(vals)} log densities ({resolved['method']}) -> {out}")
    return 0


def cmd_grid(args) -> int:
    defaults = dict(task=None, dim=2, checkpoint=None, kde_data=None, rule="scott",
                    method="is", resolution=100, bounds=None, seed=0,
                    is_samples=estimators.DEFAULT_IS_SAMPLES, proposal_dof=5.0,
                    proposal_scale=1.0, workers=1, quad_points=simdata.DEFAULT_QUAD_POINTS)
    resolved = _resolve(args, defaults)
    sources = [s for s in (resolved["task"], resolved["checkpoint"], resolved["kde_data"]) if s]
    if len(sources) != 1:
        raise ValueError("pick exactly one of --task, --checkpoint, --kde-data")

    if resolved["task"]:
        task = simdata.make_task(resolved["task"], 2, resolved["quad_points"])
        evaluator = task.log_density
        bounds = resolved["bounds"] or (*task.default_bounds, *task.default_bounds)
        label = f"true:{task.name}"
    elif resolved["checkpoint"]:
        trained = ckpt.load_checkpoint(resolved["checkpoint"])
        if trained.n != 2:
            raise ValueError("grid rendering requires a 2-D model")
        evaluator = lambda pts: _estimate_file(trained, pts, resolved["method"], resolved)  # noqa: E731
        bounds = resolved["bounds"] or (-4.0, 4.0, -4.0, 4.0)
        label = f"model:{resolved['method']}"
    else:
        ingest = simdata.ingest_csv(resolved["kde_data"])
        points, _ = _feature_columns(ingest)
        if points.shape[1] != 2:
            raise ValueError("grid rendering requires 2-D data")
        fitted = kde.fit_kde(points, resolved["rule"])
        evaluator = lambda pts: kde.kde_log_density(fitted, pts)  # noqa: E731
        bounds = resolved["bounds"] or (-4.0, 4.0, -4.0, 4.0)
        label = f"kde:{resolved['rule']}"

    grid_rows = metrics.render_grid(evaluator, bounds, resolved["resolution"])
    out = Path(args.out)
    simdata.write_csv(out, grid_rows, ["x1", "x2", "log_density"])
    resolved["bounds"] = tuple(bounds)
    _write_config_echo(out, resolved)
    print(f"rendered {resolved['resolution']}x{resolved['resolution']} grid ({label}) -> {out}")
    return 0


def cmd_kde(args) -> int:
    defaults = dict(rule="scott", bandwidths=None, seed=0)
    resolved = _resolve(args, defaults)
    train_pts, _ = _feature_columns(simdata.ingest_csv(args.train))
    query_pts, _ = _feature_columns(simdata.ingest_csv(args.points))
    if resolved["bandwidths"] is not None:
        fitted = kde.fit_kde(train_pts, kde.RULE_FIXED, _parse_float_list(resolved["bandwidths"]))
    else:
        fitted = kde.fit_kde(train_pts, resolved["rule"])
    vals = kde.kde_log_density(fitted, query_pts)
    out = Path(args.out)
    simdata.write_csv(out, np.asarray(vals)[:, None], ["log_density"])
    resolved["fitted_bandwidths"] = ",".join(repr(b) for b in fitted.bandwidths)
    _write_config_echo(out, resolved)
    print(f"kde ({fitted.rule}) log densities for {len(np.atleast_1d(vals))} points -> {out}")
    return 0


def _fit_best_kde(train_pts: np.ndarray, val_pts: np.ndarray):
    """Fit both rule-of-thumb bandwidths and keep the one with the better
    validation mean log-likelihood."""
    fits = {rule: kde.fit_kde(train_pts, rule) for rule in (kde.RULE_SCOTT, kde.RULE_SILVERMAN)}
    val_ll = {rule: float(np.mean(kde.kde_log_density(f, val_pts))) for rule, f in fits.items()}
    best = max(sorted(val_ll), key=lambda r: val_ll[r])
    return fits[best], best, val_ll


BENCH_DEFAULTS = dict(
    task="indep-mixture", dims=(2,), methods="roundtrip-is,roundtrip-lp,kde",
    count=20000, quad_points=simdata.DEFAULT_QUAD_POINTS, workers=1, **TRAIN_DEFAULTS,
)


def _prepare_features(points: np.ndarray, split, normalize: bool):
    """Min-max scale from the training split; identity when disabled."""
    if not normalize:
        return points, None, 0.0
    stats = simdata.fit_minmax(points[split.train])
    return simdata.apply_minmax(points, stats), stats, stats.log_volume_factor()


def _train_for_benchmark(norm_data, split, stats, resolved, m, n):
    config = _build_train_config(resolved, m, n)
    return model_mod.train(
        norm_data[split.train], config, val_data=norm_data[split.val], norm_stats=stats
    )


def _roundtrip_test_densities(trained, norm_test, method, resolved, volume_shift):
    vals = estimators.batch_estimate(
        norm_test, trained, method,
        num_samples=resolved["is_samples"],
        proposal_scale=resolved["proposal_scale"],
        proposal_dof=resolved["proposal_dof"],
        seed=resolved["seed"],
        workers=resolved["workers"],
    )
    return vals + volume_shift


def cmd_benchmark(args) -> int:
    resolved = _resolve(args, dict(BENCH_DEFAULTS))
    methods = [m.strip() for m in str(resolved["methods"]).split(",") if m.strip()]
    unknown = [m for m in methods if m not in ("roundtrip-is", "roundtrip-lp", "kde")]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = resolved["seed"]
    reports = []

    for dim in resolved["dims"]:
        task = simdata.make_task(resolved["task"], dim, resolved["quad_points"])
        data = task.sampler(resolved["count"], stream(seed, f"benchmark-{task.name}", task.dim))
        split = simdata.split_indices(resolved["count"], seed)
        norm, stats, volume_shift = _prepare_features(data, split, resolved["normalize"])
        true_test = task.log_density(data[split.test])
        m_latent = resolved["latent_dim"] or _default_latent_dim(task.name, task.dim)

        trained = None
        if any(meth.startswith("roundtrip") for meth in methods):
            trained, _ = _train_for_benchmark(norm, split, stats, resolved, m_latent, task.dim)
        for meth in methods:
            if meth == "kde":
                fitted, rule, val_ll = _fit_best_kde(data[split.train], data[split.val])
                est = np.asarray(kde.kde_log_density(fitted, data[split.test]))
                extra = {"kde_rule": rule,
                         **{f"kde_val_ll_{r}": v for r, v in val_ll.items()}}
            else:
                est = _roundtrip_test_densities(
                    trained, norm[split.test], meth.split("-")[1], resolved, volume_shift
                )
                extra = {"sigma": trained.sigma, "latent_dim": m_latent,
                         "is_samples": resolved["is_samples"],
                         "proposal_dof": resolved["proposal_dof"],
                         "proposal_scale": resolved["proposal_scale"]}
            report = metrics.EvalReport(
                task=f"{task.name}-d{task.dim}", method=meth, log_densities=est,
                spearman_to_truth=metrics.spearman(est, true_test),
                mean_ll=metrics.mean_log_likelihood(est),
                config={"seed": seed, "count": resolved["count"], **extra},
            )
            stem = f"{task.name}_d{task.dim}_{meth}"
            simdata.write_csv(out_dir / f"{stem}.csv", est[:, None], ["log_density"])
            (out_dir / f"{stem}.report.txt").write_text(report.to_text())
            sys.stdout.write(report.to_text() + "\n")
            reports.append(report)

    _write_config_echo(out_dir, resolved)
    return 0


OUTLIER_DEFAULTS = dict(
    data=None, dim=6, count=10000, fraction=0.01,
    methods="roundtrip-is,kde", workers=1, **TRAIN_DEFAULTS,
)


def cmd_outlier(args) -> int:
    resolved = _resolve(args, dict(OUTLIER_DEFAULTS))
    methods = [m.strip() for m in str(resolved["methods"]).split(",") if m.strip()]
    unknown = [m for m in methods if m not in ("roundtrip-is", "roundtrip-lp", "kde")]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = resolved["seed"]

    if resolved["data"]:
        ingest = simdata.ingest_csv(resolved["data"])
        features, labels = _feature_columns(ingest)
        if labels is None:
            # no label column: inject synthetic uniform-box outliers at the
            # requested fraction so precision is measurable
            frac = resolved["fraction"]
            n_in = len(features)
            n_out = int(round(n_in * frac / (1.0 - frac)))
            rng = stream(seed, "outlier-inject")
            lo, hi = features.min(axis=0), features.max(axis=0)
            center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            synth = center + (2.0 * rng.uniform(0.0, 1.0, (n_out, features.shape[1])) - 1.0) * 1.5 * half
            features = np.concatenate([features, synth], axis=0)
            labels = np.concatenate([np.zeros(n_in, dtype=bool), np.ones(n_out, dtype=bool)])
            perm = rng.permutation(n_in + n_out)
            features, labels = features[perm], labels[perm]
        dataset = simdata.OutlierDataset(features, labels, float(np.mean(labels)))
        name = Path(resolved["data"]).stem
    else:
        dataset = simdata.make_outlier_dataset(
            resolved["dim"], resolved["count"], resolved["fraction"],
            stream(seed, "outlier-data"),
        )
        name = f"synthetic-d{resolved['dim']}"

    points, labels = dataset.points, dataset.labels
    split = simdata.split_indices(len(points), seed)
    norm, stats, volume_shift = _prepare_features(points, split, resolved["normalize"])
    test_labels = labels[split.test]
    k = int(np.count_nonzero(test_labels))
    if k == 0:
        raise ValueError("no outliers in the test split; increase --count or --fraction")
    n_dim = points.shape[1]
    m_latent = resolved["latent_dim"] or max(1, n_dim // 2)

    trained = None
    if any(meth.startswith("roundtrip") for meth in methods):
        trained, _ = _train_for_benchmark(norm, split, stats, resolved, m_latent, n_dim)
    for meth in methods:
        if meth == "kde":
            fitted, rule, _ = _fit_best_kde(points[split.train], points[split.val])
            est = np.asarray(kde.kde_log_density(fitted, points[split.test]))
            extra = {"kde_rule": rule}
        else:
            est = _roundtrip_test_densities(
                trained, norm[split.test], meth.split("-")[1], resolved, volume_shift
            )
            extra = {"sigma": trained.sigma, "latent_dim": m_latent}
        prec = metrics.precision_at_k(metrics.outlier_scores(est), test_labels, k)
        report = metrics.EvalReport(
            task=f"outlier-{name}", method=meth, log_densities=est,
            precision_k=prec, k=k,
            config={"seed": seed, "outlier_fraction": dataset.outlier_fraction, **extra},
        )
        stem = f"outlier_{meth}"
        simdata.write_csv(out_dir / f"{stem}.csv", est[:, None], ["log_density"])
        (out_dir / f"{stem}.report.txt").write_text(report.to_text())
        sys.stdout.write(report.to_text() + "\n")

    _write_config_echo(out_dir, resolved)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roundtrip",
        description="Density estimation with paired mapping networks; simulate, train, estimate, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", help="flat key=value config file; flags override it")

    p = sub.add_parser("simulate", help="sample a benchmark distribution to CSV")
    p.add_argument("--task", choices=simdata.TASK_NAMES, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--quad-points", type=int, dest="quad_points", default=None)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model on a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_train_flags(p)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="pointwise log densities from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--method", choices=("is", "lp"), default=None)
    p.add_argument("--is-samples", type=int, dest="is_samples", default=None)
    p.add_argument("--proposal-dof", type=float, dest="proposal_dof", default=None)
    p.add_argument("--proposal-scale", type=float, dest="proposal_scale", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("grid", help="render a 2-D log-density grid CSV")
    p.add_argument("--task", choices=simdata.TASK_NAMES, default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--kde-data", dest="kde_data", default=None)
    p.add_argument("--rule", choices=(kde.RULE_SCOTT, kde.RULE_SILVERMAN), default=None)
    p.add_argument("--method", choices=("is", "lp"), default=None)
    p.add_argument("--bounds", type=_parse_float_list, default=None,
                   help="x1_lo,x1_hi,x2_lo,x2_hi")
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--is-samples", type=int, dest="is_samples", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--quad-points", type=int, dest="quad_points", default=None)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("kde", help="kernel density estimates for query points")
    p.add_argument("--train", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--rule", choices=(kde.RULE_SCOTT, kde.RULE_SILVERMAN), default=None)
    p.add_argument("--bandwidths", default=None, help="comma list of fixed per-dim bandwidths")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_kde)

    p = sub.add_parser("benchmark", help="simulate, train, estimate, and score methods")
    p.add_argument("--task", choices=simdata.TASK_NAMES, default=None)
    p.add_argument("--dims", type=_parse_int_list, default=None)
    p.add_argument("--methods", default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--quad-points", type=int, dest="quad_points", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)
    common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("outlier", help="precision@k outlier benchmark")
    p.add_argument("--data", default=None, help="labeled CSV; omit for synthetic data")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--methods", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)
    common(p)
    p.set_defaults(func=cmd_outlier)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
