"""Model file reading and writing.

A fitted model is stored as one self-describing JSON document with
sorted keys and no timestamps, so the same fit always produces the same
bytes.  Floats go through Python's shortest round-trip repr, which
preserves IEEE double values exactly; a saved model predicts new
accounts identically to the in-memory fit.
"""

import json

import numpy as np

from .esfit import ClusterRepresentation, FittedModel, MixtureParams
from .exceptions import ModelFormatError
from .fpca import FpcaBasis, ScoreCovariance
from .grid import Grid
from .multilevel import MultilevelFit, NuisanceParams

__all__ = ["save_model", "load_model", "model_to_dict", "model_from_dict"]

_FORMAT = "coxmix-model"
_VERSION = 1


def _clusters_to_dict(model):
    out = []
    for rep in model.clusters:
        out.append(
            {
                "bases": [
                    {
                        "eigenvalues": basis.eigenvalues.tolist(),
                        "functions": basis.functions.tolist(),
                    }
                    for basis in rep.bases
                ],
                "score_cov": rep.score_cov.matrix.tolist(),
            }
        )
    return out


def model_to_dict(fit):
    """Plain-dict form of a FittedModel or MultilevelFit."""
    if isinstance(fit, MultilevelFit):
        doc = model_to_dict(fit.model)
        doc["kind"] = "multilevel"
        doc["slots"] = int(fit.m)
        doc["mu_x"] = fit.mu_x.tolist()
        doc["nuisance"] = {
            "gamma_y": fit.nuisance.gamma_y.tolist(),
            "gamma_z": fit.nuisance.gamma_z.tolist(),
            "bandwidth": float(fit.nuisance.bandwidth),
        }
        return doc
    if not isinstance(fit, FittedModel):
        raise ModelFormatError("cannot serialize %r" % type(fit).__name__)
    model = fit
    params = model.params
    return {
        "format": _FORMAT,
        "version": _VERSION,
        "kind": "single",
        "header": {
            "clusters": params.C,
            "marks": params.R,
            "grid_size": params.grid.size,
            "horizon": params.grid.horizon,
            "bandwidth": float(model.bandwidth),
            "seed": model.config["seed"],
        },
        "pi": params.pi.tolist(),
        "mu": params.mu.tolist(),
        "gamma": params.gamma.tolist(),
        "cluster_bases": _clusters_to_dict(model),
        "posterior": model.posterior.tolist(),
        "trace": [list(map(float, row)) for row in model.trace],
        "loglik": float(model.loglik),
        "param_count": int(model.param_count),
        "bic": float(model.bic),
        "config": model.config,
        "accounts": int(model.n),
        "pooled_slots": int(model.pooled_slots),
    }


def save_model(fit, dest):
    """Write a fit as canonical JSON (sorted keys, fixed separators)."""
    doc = model_to_dict(fit)
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    if hasattr(dest, "write"):
        dest.write(text)
        dest.write("\n")
    else:
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(text)
            fh.write("\n")


def _require(doc, key, kind=None):
    if key not in doc:
        raise ModelFormatError("model file is missing key %r" % key)
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ModelFormatError("model key %r has the wrong type" % key)
    return value


def _array(doc, key, shape):
    arr = np.asarray(_require(doc, key), dtype=float)
    if arr.shape != shape:
        raise ModelFormatError(
            "model key %r has shape %r, expected %r" % (key, arr.shape, shape)
        )
    return arr


def model_from_dict(doc):
    """Rebuild the fit object serialized by model_to_dict."""
    if _require(doc, "format") != _FORMAT:
        raise ModelFormatError("not a model file (format marker mismatch)")
    if _require(doc, "version") != _VERSION:
        raise ModelFormatError(
            "unsupported model version %r" % doc["version"]
        )
    kind = _require(doc, "kind")
    header = _require(doc, "header", dict)
    C = int(_require(header, "clusters"))
    R = int(_require(header, "marks"))
    G = int(_require(header, "grid_size"))
    grid = Grid(G, float(_require(header, "horizon")))
    pi = _array(doc, "pi", (C,))
    mu = _array(doc, "mu", (C, R, G))
    gamma = _array(doc, "gamma", (C, R, R, G, G))
    params = MixtureParams(pi, mu, gamma, grid)
    clusters = []
    for entry in _require(doc, "cluster_bases", list):
        bases = []
        for raw in _require(entry, "bases", list):
            evals = np.asarray(_require(raw, "eigenvalues"), dtype=float)
            funcs = np.asarray(_require(raw, "functions"), dtype=float)
            if funcs.ndim != 2 or funcs.shape != (evals.size, G):
                raise ModelFormatError("basis functions have the wrong shape")
            bases.append(FpcaBasis(evals, funcs, grid))
        total = sum(b.rank for b in bases)
        cov = np.asarray(_require(entry, "score_cov"), dtype=float)
        if cov.shape != (total, total):
            raise ModelFormatError("score covariance has the wrong shape")
        clusters.append(
            ClusterRepresentation(bases, ScoreCovariance(cov, [b.rank for b in bases]))
        )
    if len(clusters) != C:
        raise ModelFormatError("cluster count disagrees with bases")
    config = dict(_require(doc, "config", dict))
    n = int(_require(doc, "accounts"))
    posterior = _array(doc, "posterior", (n, C))
    trace = [tuple(row) for row in _require(doc, "trace", list)]
    model = FittedModel(
        params=params,
        posterior=posterior,
        bandwidth=float(_require(header, "bandwidth")),
        clusters=clusters,
        trace=trace,
        loglik=float(_require(doc, "loglik")),
        param_count=int(_require(doc, "param_count")),
        bic=float(_require(doc, "bic")),
        config=config,
        n=n,
        pooled_slots=int(_require(doc, "pooled_slots")),
    )
    if kind == "single":
        return model
    if kind != "multilevel":
        raise ModelFormatError("unknown model kind %r" % kind)
    m = int(_require(doc, "slots"))
    raw = _require(doc, "nuisance", dict)
    nuisance = NuisanceParams(
        _array(raw, "gamma_y", (R, R, G, G)),
        _array(raw, "gamma_z", (R, R, G, G)),
        grid,
        float(_require(raw, "bandwidth")),
    )
    mu_x = _array(doc, "mu_x", (C, R, G))
    return MultilevelFit(nuisance, model, mu_x, m)


def load_model(source):
    """Read a model file; malformed input raises with a location."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            "model file is not valid JSON at offset %d: %s" % (exc.pos, exc.msg)
        ) from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must hold a JSON object")
    return model_from_dict(doc)
