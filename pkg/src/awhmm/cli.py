"""Command-line interface (``awhmm``).

Exit codes: 0 success, 2 usage error, 3 bad input data, 4 numerical failure.
"""

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from ._rng import DEFAULT_SEED
from .distance import iaw, kl_hmm_mc, maw
from .errors import NumericalError
from .evaluation import DistanceMatrix, knn1_accuracy, pairwise_distance_matrix, precision_recall
from .experiments import PerturbationConfig, run_perturbation_experiment, toy_gaussian_experiment
from .hmm import baum_welch
from .io import (load_model, load_sequence, read_labels, read_matrix, save_model, write_matrix,
                 write_table)

EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (NumericalError, ArithmeticError, FloatingPointError) as exc:
            click.echo(f"error: numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (ValueError, OSError, KeyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)
    return wrapper


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Transport-based distances between Gaussian HMMs."""


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--states", "-m", type=click.IntRange(min=1), required=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--max-iter", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
@_guard
def estimate(inputs, states, seed, max_iter, tol, out):
    """Fit a GMM-HMM to one or more CSV sequences by Baum-Welch."""
    seqs = [load_sequence(p) for p in inputs]
    model = baum_welch(seqs, states, seed=seed, max_iter=max_iter, tol=tol)
    meta = dict(model.metadata, inputs=[os.path.basename(p) for p in inputs])
    save_model(model, out, meta)
    click.echo(f"wrote {out} (log-likelihood {model.metadata['log_likelihood']:.6f}, "
               f"{model.metadata['n_iter']} iterations)")


def _method_option(f):
    return click.option("--method", type=click.Choice(["maw", "iaw", "kl"], case_sensitive=False),
                        default="maw", show_default=True)(f)


def _distance_options(f):
    f = click.option("--p", "p", type=click.FloatRange(0, 2, min_open=True), default=1.0,
                     show_default=True)(f)
    f = click.option("--alpha", type=click.FloatRange(0, 1), default=0.5, show_default=True)(f)
    f = click.option("--samples", type=click.IntRange(min=2), default=1000, show_default=True,
                     help="IAW samples per model, or KL sequence length.")(f)
    f = click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)(f)
    return f


@main.command()
@_method_option
@click.option("--a", "path_a", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--b", "path_b", type=click.Path(exists=True, dir_okay=False), required=True)
@_distance_options
@click.option("--json", "as_json", is_flag=True, help="Print the full report as JSON.")
@_guard
def dist(method, path_a, path_b, p, alpha, samples, seed, as_json):
    """Distance between two model files."""
    h1, h2 = load_model(path_a), load_model(path_b)
    method = method.lower()
    if method == "maw":
        rep = maw(h1, h2, p=p, alpha=alpha)
    elif method == "iaw":
        rep = iaw(h1, h2, p=p, alpha=alpha, n=samples, seed=seed)
    else:
        rep = kl_hmm_mc(h1, h2, length=samples, seed=seed)
    if as_json:
        click.echo(json.dumps(rep.to_dict(), indent=2))
    else:
        click.echo(repr(rep.value))


def _method_params(method, p, alpha, samples):
    if method == "KL":
        return {"length": samples}
    if method == "IAW":
        return {"p": p, "alpha": alpha, "n": samples}
    return {"p": p, "alpha": alpha}


@main.command()
@click.option("--dir", "model_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False))
@_method_option
@_distance_options
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Worker threads (default: AWHMM_THREADS or 1).")
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
@_guard
def distmat(model_dir, labels_path, method, p, alpha, samples, seed, threads, out):
    """Pairwise distance matrix over every *.json model in a directory."""
    paths = sorted(Path(model_dir).glob("*.json"))
    if len(paths) < 2:
        raise click.UsageError(f"need at least two *.json models in {model_dir}")
    names = [q.stem for q in paths]
    models = [load_model(q) for q in paths]
    labels = None
    if labels_path:
        table = read_labels(labels_path)
        missing = [n for n in names if n not in table]
        if missing:
            raise ValueError(f"{labels_path}: no label for {', '.join(missing)}")
        labels = [table[n] for n in names]
    method = method.upper()
    params = _method_params(method, p, alpha, samples)
    dm = pairwise_distance_matrix(models, labels, method, params, base_seed=seed, n_jobs=threads)
    write_matrix(out, dm.values, names, method=method, params=params, seed=seed)
    meta = {"method": method, "params": params, "seed": seed, "names": names,
            "labels": labels, "mean_wall_time": float(np.mean(dm.wall_times[np.triu_indices(len(names), 1)]))}
    with open(out + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    click.echo(f"wrote {out}")


@main.command(name="eval")
@click.option("--distmat", "matrix_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["pr", "knn1"]), default="pr", show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False))
@_guard
def evaluate(matrix_path, labels_path, mode, out):
    """Retrieval precision-recall or 1-NN accuracy from a matrix CSV."""
    meta, names, values = read_matrix(matrix_path)
    if labels_path:
        table = read_labels(labels_path)
        labels = [table[n] for n in names]
    else:
        side = matrix_path + ".meta.json"
        labels = None
        if os.path.exists(side):
            with open(side, encoding="utf-8") as fh:
                labels = json.load(fh).get("labels")
    if labels is None:
        raise click.UsageError("labels are required (--labels or a .meta.json sidecar)")
    dm = DistanceMatrix(values, np.asarray(labels), meta.get("method", "?"), meta.get("params", {}))
    if mode == "knn1":
        acc = knn1_accuracy(dm)
        click.echo(repr(float(acc)))
        if out:
            write_table(out, ["knn1_accuracy"], [[float(acc)]], source=os.path.basename(matrix_path))
        return
    curve = precision_recall(dm)
    click.echo(f"mean average precision {curve.mean_average_precision:.6f}")
    if out:
        write_table(out, ["recall", "precision"], zip(curve.recall, curve.precision),
                    source=os.path.basename(matrix_path), method=dm.method,
                    mean_average_precision=curve.mean_average_precision)


@main.command()
@click.option("--exp", "experiment", type=click.Choice(["mu", "sigma", "transition"]), required=True)
@click.option("--delta", type=click.FloatRange(0, min_open=True), default=0.2, show_default=True)
@click.option("--methods", default="MAW,IAW,KL", show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--alpha", type=click.FloatRange(0, 1), default=None,
              help="Fixed alpha; by default chosen on a pilot replicate.")
@click.option("--iaw-samples", type=click.IntRange(min=2), default=300, show_default=True)
@click.option("--kl-length", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=None)
@click.option("--out", "-o", type=click.Path(file_okay=False), required=True)
@_guard
def synth(experiment, delta, methods, seed, alpha, iaw_samples, kl_length, threads, out):
    """Run one replicate of a synthetic perturbation retrieval study."""
    methods = tuple(m.strip().upper() for m in methods.split(",") if m.strip())
    bad = [m for m in methods if m not in ("MAW", "IAW", "KL")]
    if bad or not methods:
        raise click.UsageError(f"--methods must list MAW, IAW and/or KL (got {bad or 'nothing'})")
    cfg = PerturbationConfig(experiment, delta, seed=seed)
    res = run_perturbation_experiment(cfg, methods, iaw_samples=iaw_samples, kl_length=kl_length,
                                      alpha=alpha, n_jobs=threads)
    os.makedirs(out, exist_ok=True)
    names = [f"c{c}_{k}" for k, c in enumerate(res.labels)]
    common = {"experiment": experiment, "delta": delta, "seed": seed}
    summary_rows = []
    for method in methods:
        dm, curve = res.matrices[method], res.curves[method]
        tag = method.lower()
        write_matrix(os.path.join(out, f"distmat_{tag}.csv"), dm.values, names,
                     method=method, params=dm.params, **common)
        write_table(os.path.join(out, f"pr_{tag}.csv"), ["recall", "precision"],
                    zip(curve.recall, curve.precision), method=method,
                    mean_average_precision=curve.mean_average_precision, **common)
        for c, (mean, sd) in res.summary[method].items():
            summary_rows.append([method, c, mean, sd])
    write_table(os.path.join(out, "summary.csv"), ["method", "target_class", "mean", "sd"],
                summary_rows, query_class=0, **common)
    with open(os.path.join(out, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(dict(res.metadata(), labels=res.labels.tolist()), fh, indent=2, default=float)
        fh.write("\n")
    for method in methods:
        click.echo(f"{method}: mean average precision {res.mean_average_precision[method]:.4f}")


@main.command()
@click.option("--varying", type=click.Choice(["mu", "sigma"]), default="mu", show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
@_guard
def toy(varying, seed, out):
    """Spread of W2 and KL estimates against a fitted reference Gaussian."""
    rows = toy_gaussian_experiment(varying, seed)
    keys = ["i", "w2_mean", "w2_sd", "kl_mean", "kl_sd"]
    write_table(out, keys, ([r[k] for k in keys] for r in rows), varying=varying, seed=seed)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
