"""Command-line front end.

Subcommands: ``simulate``, ``fit``, ``evaluate``, ``predict``,
``export-curves``.  Every stochastic command requires an explicit seed;
nothing falls back to the clock, so a command line is a complete record
of its output.  Exit codes: 0 success, 1 numerical failure during
fitting, 2 usage or input errors.

A config file (``--config``, flat ``key = value`` lines, ``#`` comments)
can supply any fit option; explicit flags win over the file, the file
wins over built-in defaults.
"""

import json
import os
import sys

import click
import numpy as np

from . import esfit, multilevel
from .events import (
    aggregate_rows,
    load_events,
    load_labels,
    save_events,
    save_labels,
    single_rows,
)
from .exceptions import CoxmixError, DegenerateClusterError
from .kernels import KERNEL_NAMES
from .metrics import TrialSet, argmax_labels, clustering_consistency, purity
from .modelio import load_model, save_model
from .multilevel import MultilevelFit
from .simulate import simulate_dataset

_METRICS_FORMAT = "coxmix-metrics"
_REPORT_FORMAT = "coxmix-fit-report"


def _fail(code, message):
    click.echo("error: %s" % message, err=True)
    sys.exit(code)


def _guarded(body):
    try:
        body()
    except DegenerateClusterError as exc:
        _fail(1, "numerical failure: %s" % exc)
    except CoxmixError as exc:
        _fail(2, exc)


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.UsageError(
                    "%s:%d: expected key = value" % (path, lineno)
                )
            key, value = line.split("=", 1)
            values[key.strip().replace("_", "-")] = value.strip()
    return values


def _conf(ctx, key, flag_value, default, parse=str):
    """Flag > config file > default."""
    if flag_value is not None:
        return flag_value
    stored = (ctx.obj or {}).get(key)
    if stored is not None:
        try:
            return parse(stored)
        except ValueError:
            raise click.UsageError(
                "config value %s=%r is not valid" % (key, stored)
            )
    return default


def _require_seed(ctx, seed):
    seed = _conf(ctx, "seed", seed, None, int)
    if seed is None:
        raise click.UsageError(
            "--seed is required (no clock-derived default)"
        )
    return seed


def _parse_bandwidths(text):
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        if piece:
            out.append(float(piece))
    if not out:
        raise ValueError("empty bandwidth list")
    return out


def _parse_cluster_range(text):
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise click.UsageError("empty cluster range %r" % text)
        return list(range(lo, hi + 1))
    values = [int(p) for p in text.split(",") if p.strip()]
    if not values or min(values) < 1:
        raise click.UsageError("invalid cluster list %r" % text)
    return values


def _fit_config(ctx, seed, grid_size, energy, tol, max_iter, restarts,
                paths, bandwidths, kernel, workers):
    kernel = _conf(ctx, "kernel", kernel, "epanechnikov")
    if kernel not in KERNEL_NAMES:
        raise click.UsageError(
            "unknown kernel %r (choices: %s)" % (kernel, ", ".join(KERNEL_NAMES))
        )
    if bandwidths is not None:
        # the flag arrives as raw text; config-file values go through _conf
        try:
            bandwidths = _parse_bandwidths(bandwidths)
        except ValueError:
            raise click.UsageError("invalid --bandwidths %r" % bandwidths)
    return esfit.FitConfig(
        seed=_require_seed(ctx, seed),
        grid_size=_conf(ctx, "grid-size", grid_size, 51, int),
        kernel=kernel,
        bandwidths=_conf(ctx, "bandwidths", bandwidths, None, _parse_bandwidths),
        mc_paths=_conf(ctx, "paths", paths, 500, int),
        energy=_conf(ctx, "energy", energy, 0.95, float),
        tol=_conf(ctx, "tol", tol, 1e-4, float),
        max_iter=_conf(ctx, "max-iter", max_iter, 200, int),
        restarts=_conf(ctx, "restarts", restarts, 1, int),
        workers=_conf(ctx, "workers", workers, 1, int),
    )


def _fit_one(matrix, C, config):
    if matrix.m == 1:
        return esfit.fit(single_rows(matrix), C, config)
    return multilevel.fit_multilevel(matrix, C, config)


def _model_bic(fit):
    return fit.model.bic if isinstance(fit, MultilevelFit) else fit.bic


def _model_loglik(fit):
    return fit.model.loglik if isinstance(fit, MultilevelFit) else fit.loglik


def _write_json(doc, path):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


# shared fit-parameter options
def _fit_options(fn):
    decorators = [
        click.option("--seed", type=int, default=None, help="RNG seed (required)."),
        click.option("--grid-size", type=click.IntRange(min=2), default=None,
                     help="Evaluation grid size [51]."),
        click.option("--energy", type=float, default=None,
                     help="Spectral energy kept by truncation [0.95]."),
        click.option("--tol", type=float, default=None,
                     help="Posterior-change stopping tolerance [1e-4]."),
        click.option("--max-iter", type=click.IntRange(min=1), default=None,
                     help="Iteration cap [200]."),
        click.option("--restarts", type=click.IntRange(min=1), default=None,
                     help="Independent initializations [1]."),
        click.option("--paths", type=click.IntRange(min=1), default=None,
                     help="Monte-Carlo paths per cluster [500]."),
        click.option("--bandwidths", type=str, default=None,
                     help="Comma-separated bandwidth candidates "
                          "[0.05,0.1,0.2,0.4 of half the horizon]."),
        click.option("--kernel", type=str, default=None,
                     help="Smoothing kernel: epanechnikov or gaussian."),
        click.option("--workers", type=click.IntRange(min=1), default=None,
                     help="Worker count (evaluation is sequential) [1]."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Flat key = value option file.")
@click.version_option(package_name="coxmix")
@click.pass_context
def main(ctx, config_path):
    """Cluster repeated event sequences with log-Gaussian mixture models."""
    ctx.obj = _read_config_file(config_path) if config_path else {}


@main.command()
@click.option("--clusters", type=click.IntRange(min=1), required=True,
              help="Number of clusters.")
@click.option("--n-per", type=click.IntRange(min=1), required=True,
              help="Accounts per cluster.")
@click.option("--days", type=click.IntRange(min=1), required=True,
              help="Observation slots per account.")
@click.option("--marks", type=click.IntRange(min=1), required=True,
              help="Event types.")
@click.option("--seed", type=int, default=None, help="RNG seed (required).")
@click.option("--horizon", type=float, default=2.0, show_default=True,
              help="Observation window length.")
@click.option("--grid-size", type=click.IntRange(min=2), default=51,
              show_default=True, help="Simulation grid size.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
              help="Output directory (events.tsv, labels.tsv, truth.json).")
@click.pass_context
def simulate(ctx, clusters, n_per, days, marks, seed, horizon, grid_size, out_dir):
    """Generate a labeled synthetic dataset."""

    def body():
        used_seed = _require_seed(ctx, seed)
        ds = simulate_dataset(
            clusters, n_per, days, marks, used_seed,
            horizon=horizon, grid_size=grid_size,
        )
        os.makedirs(out_dir, exist_ok=True)
        save_events(ds.matrix, os.path.join(out_dir, "events.tsv"))
        save_labels(ds.labels, os.path.join(out_dir, "labels.tsv"))
        truth = {key: np.asarray(val).tolist() for key, val in ds.truth.items()}
        truth["seed"] = used_seed
        _write_json(truth, os.path.join(out_dir, "truth.json"))
        click.echo(
            "simulated %d accounts x %d slots, %d events -> %s"
            % (ds.matrix.n, ds.matrix.m, ds.matrix.event_count(), out_dir)
        )

    _guarded(body)


@main.command()
@click.argument("events", type=click.Path(exists=True, dir_okay=False))
@click.option("--clusters", type=str, required=True,
              help="Cluster count, list (2,3), or range (2..4) swept by BIC.")
@click.option("--out", "model_path", type=click.Path(dir_okay=False), required=True,
              help="Model file to write.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON fit report (per-C BIC for sweeps).")
@_fit_options
@click.pass_context
def fit(ctx, events, clusters, model_path, report_path, **kw):
    """Fit the mixture model to an event file."""

    def body():
        config = _fit_config(ctx, **kw)
        matrix = load_events(events)
        values = _parse_cluster_range(clusters)
        results = {}
        for C in values:
            fitted = _fit_one(matrix, C, config)
            results[C] = fitted
            click.echo(
                "C=%d loglik=%.4f bic=%.4f" % (C, _model_loglik(fitted), _model_bic(fitted)),
                err=True,
            )
        best_C = min(values, key=lambda C: (_model_bic(results[C]), C))
        save_model(results[best_C], model_path)
        if report_path is not None:
            _write_json(
                {
                    "format": _REPORT_FORMAT,
                    "version": 1,
                    "seed": config.seed,
                    "candidates": values,
                    "bic": {str(C): _model_bic(results[C]) for C in values},
                    "loglik": {str(C): _model_loglik(results[C]) for C in values},
                    "selected": best_C,
                },
                report_path,
            )
        click.echo("selected C=%d -> %s" % (best_C, model_path))

    _guarded(body)


@main.command()
@click.argument("events", type=click.Path(exists=True, dir_okay=False))
@click.option("--clusters", type=click.IntRange(min=1), required=True,
              help="Cluster count for the fitted models.")
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Ground-truth labels; reports purity.")
@click.option("--trials", type=click.IntRange(min=2), default=None,
              help="Cross-validation trial count; reports consistency.")
@click.option("--out", "report_path", type=click.Path(dir_okay=False), required=True,
              help="Metrics JSON report to write.")
@_fit_options
@click.pass_context
def evaluate(ctx, events, clusters, labels_path, trials, report_path, **kw):
    """Score clustering quality: purity (with truth) or consistency."""

    def body():
        config = _fit_config(ctx, **kw)
        matrix = load_events(events)
        if labels_path is None and trials is None:
            raise click.UsageError("need --labels (purity) or --trials (consistency)")
        doc = {
            "format": _METRICS_FORMAT,
            "version": 1,
            "seed": config.seed,
            "accounts": matrix.n,
            "clusters": clusters,
        }
        if labels_path is not None:
            truth = load_labels(labels_path, matrix.n)
            fitted = _fit_one(matrix, clusters, config)
            pred = argmax_labels(fitted.posterior)
            doc["metric"] = "purity"
            doc["value"] = purity(pred, truth)
            doc["trials"] = None
        else:
            rng = np.random.default_rng(np.random.SeedSequence(config.seed))
            all_labels = []
            test_sets = []
            rows_full = (
                single_rows(matrix) if matrix.m == 1 else aggregate_rows(matrix)
            )
            for k in range(trials):
                perm = rng.permutation(matrix.n)
                n_train = max(2, int(round(0.8 * matrix.n)))
                train_idx = np.sort(perm[:n_train])
                test_idx = np.sort(perm[n_train:])
                sub = matrix.subset(train_idx)
                fitted = _fit_one(sub, clusters, config)
                model = fitted.model if isinstance(fitted, MultilevelFit) else fitted
                post_all, labels_all = esfit.predict(model, rows_full, config.seed)
                train_post = (
                    fitted.posterior
                    if not isinstance(fitted, MultilevelFit)
                    else fitted.model.posterior
                )
                labels_k = labels_all.copy()
                labels_k[train_idx] = argmax_labels(train_post)
                all_labels.append(labels_k)
                test_sets.append(test_idx)
                click.echo("trial %d/%d done" % (k + 1, trials), err=True)
            doc["metric"] = "clustering_consistency"
            doc["value"] = clustering_consistency(TrialSet(np.stack(all_labels), test_sets))
            doc["trials"] = trials
        _write_json(doc, report_path)
        click.echo("%s = %.6f -> %s" % (doc["metric"], doc["value"], report_path))

    _guarded(body)


@main.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("events", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Posterior/label TSV to write.")
@click.option("--seed", type=int, default=None,
              help="Path-sampling seed [model's training seed].")
@click.pass_context
def predict(ctx, model, events, out_path, seed):
    """Score new accounts with a saved model."""

    def body():
        fitted = load_model(model)
        matrix = load_events(events)
        post, labels = multilevel.predict_membership(
            fitted, matrix, _conf(ctx, "seed", seed, None, int)
        )
        with open(out_path, "w", encoding="ascii") as fh:
            header = ["account", "label"] + [
                "p%d" % (c + 1) for c in range(post.shape[1])
            ]
            fh.write("\t".join(header) + "\n")
            for i in range(post.shape[0]):
                row = [str(i), str(int(labels[i]))] + [repr(float(v)) for v in post[i]]
                fh.write("\t".join(row) + "\n")
        click.echo("wrote %d predictions -> %s" % (post.shape[0], out_path))

    _guarded(body)


@main.command(name="export-curves")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
              help="Directory for CSV curve files.")
@click.option("--sweep", "sweeps", type=click.Path(exists=True, dir_okay=False),
              multiple=True, help="Fit report(s); adds a selected-C histogram.")
def export_curves(model, out_dir, sweeps):
    """Write per-(cluster, mark) mean and variance curves as CSV."""

    def body():
        fitted = load_model(model)
        if isinstance(fitted, MultilevelFit):
            mu = fitted.mu_x
            gamma = fitted.gamma_x
            grid = fitted.model.params.grid
        else:
            mu = fitted.params.mu
            gamma = fitted.params.gamma
            grid = fitted.params.grid
        os.makedirs(out_dir, exist_ok=True)
        count = 0
        for c in range(mu.shape[0]):
            for r in range(mu.shape[1]):
                for stem, curve in (
                    ("mu_c%d_r%d" % (c + 1, r + 1), mu[c, r]),
                    ("gamma_diag_c%d_r%d" % (c + 1, r + 1), np.diagonal(gamma[c, r, r])),
                ):
                    path = os.path.join(out_dir, stem + ".csv")
                    with open(path, "w", encoding="ascii") as fh:
                        fh.write("t,value\n")
                        for t, v in zip(grid.points, curve):
                            fh.write("%s,%s\n" % (repr(float(t)), repr(float(v))))
                    count += 1
        if sweeps:
            selected = []
            for path in sweeps:
                with open(path, "r", encoding="ascii") as fh:
                    doc = json.load(fh)
                if doc.get("format") != _REPORT_FORMAT or "selected" not in doc:
                    raise CoxmixError("%s is not a fit report" % path)
                selected.append(int(doc["selected"]))
            values, counts = np.unique(selected, return_counts=True)
            with open(os.path.join(out_dir, "selected_clusters_hist.csv"), "w",
                      encoding="ascii") as fh:
                fh.write("clusters,count\n")
                for v, ct in zip(values, counts):
                    fh.write("%d,%d\n" % (v, ct))
            count += 1
        click.echo("wrote %d files -> %s" % (count, out_dir))

    _guarded(body)


if __name__ == "__main__":
    main()
