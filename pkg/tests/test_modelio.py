import io
import json

import numpy as np
import pytest

from coxmix.esfit import FitConfig, fit, predict
from coxmix.events import single_rows
from coxmix.exceptions import ModelFormatError
from coxmix.modelio import load_model, model_from_dict, model_to_dict, save_model
from coxmix.multilevel import fit_multilevel, predict_membership
from coxmix.simulate import simulate_dataset


@pytest.fixture(scope="module")
def single_fit():
    data = simulate_dataset(C=2, n_per_cluster=8, m=1, R=2, seed=3)
    rows = single_rows(data.matrix)
    cfg = FitConfig(
        seed=11, grid_size=15, bandwidths=(0.5,), mc_paths=64, max_iter=3
    )
    return rows, fit(rows, 2, cfg)


@pytest.fixture(scope="module")
def multi_fit():
    data = simulate_dataset(C=2, n_per_cluster=6, m=4, R=1, seed=30)
    cfg = FitConfig(
        seed=11, grid_size=15, bandwidths=(0.4,), mc_paths=64, max_iter=3
    )
    return data.matrix, fit_multilevel(data.matrix, 2, cfg)


def test_single_model_round_trip(single_fit, tmp_path):
    rows, model = single_fit
    path = tmp_path / "model.json"
    save_model(model, str(path))
    back = load_model(str(path))
    assert np.array_equal(back.params.pi, model.params.pi)
    assert np.array_equal(back.params.mu, model.params.mu)
    assert np.array_equal(back.params.gamma, model.params.gamma)
    assert np.array_equal(back.posterior, model.posterior)
    assert back.loglik == model.loglik
    assert back.bic == model.bic
    assert back.param_count == model.param_count
    assert back.config == model.config
    assert back.bandwidth == model.bandwidth
    assert back.n == model.n and back.pooled_slots == model.pooled_slots
    assert back.trace == [tuple(map(float, row)) for row in model.trace]
    for mine, theirs in zip(model.clusters, back.clusters):
        assert np.array_equal(mine.score_cov.matrix, theirs.score_cov.matrix)
        for b1, b2 in zip(mine.bases, theirs.bases):
            assert np.array_equal(b1.eigenvalues, b2.eigenvalues)
            assert np.array_equal(b1.functions, b2.functions)


def test_loaded_model_predicts_identically(single_fit, tmp_path):
    rows, model = single_fit
    path = tmp_path / "model.json"
    save_model(model, str(path))
    back = load_model(str(path))
    post_a, lab_a = predict(model, rows, seed=99)
    post_b, lab_b = predict(back, rows, seed=99)
    assert np.array_equal(post_a, post_b)
    assert np.array_equal(lab_a, lab_b)


def test_save_is_byte_stable(single_fit, tmp_path):
    _, model = single_fit
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(model, str(a))
    save_model(load_model(str(a)), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_save_accepts_file_objects(single_fit):
    _, model = single_fit
    buf = io.StringIO()
    save_model(model, buf)
    text = buf.getvalue()
    assert text.endswith("\n")
    back = load_model(io.StringIO(text))
    assert back.loglik == model.loglik


def test_multilevel_round_trip(multi_fit, tmp_path):
    matrix, ml = multi_fit
    path = tmp_path / "ml.json"
    save_model(ml, str(path))
    back = load_model(str(path))
    assert back.m == ml.m
    assert np.array_equal(back.mu_x, ml.mu_x)
    assert np.array_equal(back.nuisance.gamma_y, ml.nuisance.gamma_y)
    assert np.array_equal(back.nuisance.gamma_z, ml.nuisance.gamma_z)
    assert back.nuisance.bandwidth == ml.nuisance.bandwidth
    assert np.array_equal(back.posterior, ml.posterior)
    post_a, lab_a = predict_membership(ml, matrix, seed=5)
    post_b, lab_b = predict_membership(back, matrix, seed=5)
    assert np.array_equal(post_a, post_b)
    assert np.array_equal(lab_a, lab_b)


def test_dict_round_trip_without_files(single_fit):
    _, model = single_fit
    doc = json.loads(json.dumps(model_to_dict(model)))
    back = model_from_dict(doc)
    assert np.array_equal(back.params.mu, model.params.mu)


def test_serialize_rejects_foreign_objects():
    with pytest.raises(ModelFormatError):
        model_to_dict({"pi": [1.0]})


def test_load_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "coxmix-model", ')
    with pytest.raises(ModelFormatError, match="offset"):
        load_model(str(path))


def test_load_rejects_non_object(tmp_path):
    path = tmp_path / "arr.json"
    path.write_text("[1, 2, 3]")
    with pytest.raises(ModelFormatError):
        load_model(str(path))


def test_load_rejects_wrong_marker(single_fit):
    _, model = single_fit
    doc = model_to_dict(model)
    doc["format"] = "something-else"
    with pytest.raises(ModelFormatError, match="format"):
        model_from_dict(doc)
    doc = model_to_dict(model)
    doc["version"] = 99
    with pytest.raises(ModelFormatError, match="version"):
        model_from_dict(doc)


@pytest.mark.parametrize(
    "key", ["pi", "mu", "gamma", "posterior", "loglik", "config", "cluster_bases"]
)
def test_load_rejects_missing_keys(single_fit, key):
    _, model = single_fit
    doc = model_to_dict(model)
    del doc[key]
    with pytest.raises(ModelFormatError, match=key):
        model_from_dict(doc)


def test_load_rejects_shape_mismatch(single_fit):
    _, model = single_fit
    doc = model_to_dict(model)
    doc["pi"] = [1.0, 0.0, 0.0]
    with pytest.raises(ModelFormatError, match="shape"):
        model_from_dict(doc)
    doc = model_to_dict(model)
    doc["header"]["clusters"] = 3
    with pytest.raises(ModelFormatError):
        model_from_dict(doc)
