import logging

import numpy as np
import pytest

from elevatorcodes.errors import CodeFormatError, FitError
from elevatorcodes.fitting import (
    PUBLISHED_MODELS,
    FitModel,
    eval_model,
    fit_power_law,
    load_models,
    model_registry,
    published_model,
    save_models,
    surface_regime,
)

GRID = [(p, d) for p in (1e-3, 2e-3, 5e-3, 1e-2) for d in (3, 5, 7, 9)]


def _points(model, **kwargs):
    return [(p, d, eval_model(model, p, d, **kwargs)) for p, d in GRID]


@pytest.mark.parametrize(
    "model, extra",
    [
        pytest.param(FitModel("rep_z", 0.13, 25.02, 0.99), {}, id="rep_z"),
        pytest.param(FitModel("concat_x", 37.18, 1.94, 2.33), {}, id="concat_x"),
        pytest.param(
            FitModel("concat_z", 0.12, 34.4, 0.94), {"n_b": 17, "k": 6}, id="concat_z"
        ),
        pytest.param(FitModel("surface_z", 0.16, 84.69, 0.94), {}, id="surface_z"),
        pytest.param(FitModel("surface_x", 1.19, 19.30, 2.97), {}, id="surface_x"),
    ],
)
def test_fit_recovers_generating_parameters(model, extra):
    fitted = fit_power_law(_points(model, **extra), model.family, **extra)
    assert fitted.a == pytest.approx(model.a, rel=1e-6)
    assert fitted.b == pytest.approx(model.b, rel=1e-6)
    assert fitted.c == pytest.approx(model.c, rel=1e-6)
    assert fitted.residual == pytest.approx(0.0, abs=1e-9)
    if model.family == "concat_z":
        assert (fitted.n_b, fitted.k) == (17, 6)


def test_rep_x_uses_the_mean_ratio():
    points = [(1e-3, 3, 3.0 * 1e-3 * 3), (1e-3, 5, 5.0 * 1e-3 * 5)]
    fitted = fit_power_law(points, "rep_x")
    # geometric mean of the per-point coefficients
    assert fitted.a == pytest.approx(np.sqrt(15.0))
    assert fitted.residual > 0


def test_fit_copies_labels(caplog):
    model = published_model("concat_x", outer="15_6_5", ancillae=2)
    with caplog.at_level(logging.INFO):
        fitted = fit_power_law(_points(model), "concat_x", outer="15_6_5", ancillae=2)
    assert fitted.key == ("concat_x", "15_6_5", 2, None, None)
    assert "Fitted concat_x: a=8.84700e+01" in caplog.text


@pytest.mark.parametrize(
    "points, family, message",
    [
        pytest.param([], "rep_z", "needs", id="empty"),
        pytest.param(
            [(1e-3, 3, 1e-4), (2e-3, 5, 1e-4)], "rep_z", "at least 3", id="few"
        ),
        pytest.param(
            [(1e-3, 3, 1e-4), (1e-3, 5, 1e-5), (1e-3, 7, 1e-6)],
            "rep_z",
            "physical error rate",
            id="fixed-rate",
        ),
        pytest.param(
            [(1e-3, 3, 1e-4), (2e-3, 3, 1e-5), (3e-3, 3, 1e-6)],
            "concat_x",
            "distance",
            id="fixed-distance",
        ),
        pytest.param(
            [(3e-4, 3, 1e-4), (5e-4, 5, 1e-5), (7e-4, 7, 1e-6)],
            "concat_x",
            "vary together",
            id="collinear",
        ),
        pytest.param([(1e-3, 3, 0.0)] * 3, "rep_z", "positive", id="zero-rate"),
        pytest.param(
            [(1e-3, 3, 1e-4), (2e-3, 5, 1e-5), (3e-3, 7, 1e-6)],
            "concat_z",
            "n_b",
            id="concat-z-needs-block-count",
        ),
    ],
)
def test_fit_errors(points, family, message):
    with pytest.raises(FitError, match=message):
        fit_power_law(points, family)


def test_unknown_family():
    with pytest.raises(ValueError):
        fit_power_law([(1e-3, 3, 1e-4)] * 3, "color_code")
    with pytest.raises(ValueError):
        FitModel("color_code", 1.0)


def test_eval_model_forms():
    assert eval_model(published_model("rep_x"), 1e-3, 5) == pytest.approx(3.88 * 5e-3)
    rep_z = published_model("rep_z")
    assert eval_model(rep_z, 1e-3, 3) == pytest.approx(0.13 * (25.02e-3) ** 1.98)
    values = eval_model(rep_z, np.array([1e-3, 2e-3]), 5)
    assert values.shape == (2,)
    assert values[0] < values[1]
    concat_z = published_model("concat_z")
    with pytest.raises(FitError, match="n_b"):
        eval_model(concat_z, 1e-2, 9)
    assert eval_model(concat_z, 1e-2, 9, n_b=16, k=9) == pytest.approx(
        0.12 * (34.4e-2) ** (0.94 * 5)
    )


def test_published_models():
    assert len(PUBLISHED_MODELS) == 17
    assert published_model("concat_x", outer="16_3_8").n_b == 17
    with pytest.raises(KeyError, match="no published fit"):
        published_model("concat_x", outer="16_3_8", ancillae=2)


@pytest.mark.parametrize(
    "kind, p_z, regime",
    [
        pytest.param("rotated", 1e-3, "rotated", id="rotated-low"),
        pytest.param("rotated", 1e-2, "rotated_high", id="rotated-high"),
        pytest.param("xzzx", 1e-2, "xzzx", id="xzzx"),
    ],
)
def test_surface_regime(kind, p_z, regime):
    assert surface_regime(kind, p_z) == regime


def test_save_and_load(tmp_path):
    models = [
        published_model("rep_z"),
        FitModel("concat_z", 0.1, 30.0, 0.9, n_b=16, k=9),
    ]
    path = save_models(models, tmp_path / "fits" / "models.json")
    assert load_models(path) == models
    assert '"regime"' not in path.read_text()


@pytest.mark.parametrize(
    "text",
    [
        pytest.param("{", id="json"),
        pytest.param("{}", id="no-models"),
        pytest.param('{"models": [{"family": "rep_z", "a": 1, "z": 2}]}', id="field"),
        pytest.param('{"models": [{"family": "hex", "a": 1}]}', id="family"),
    ],
)
def test_load_errors(tmp_path, text):
    path = tmp_path / "models.json"
    path.write_text(text)
    with pytest.raises(CodeFormatError, match="Reading fit models failed"):
        load_models(path)


def test_registry_overrides():
    rep_z = FitModel("rep_z", 0.2, 30.0, 1.0)
    concat_z = FitModel("concat_z", 0.1, 30.0, 0.9, outer="15_6_5", n_b=16, k=6)
    registry = model_registry([rep_z, concat_z])
    assert registry[("rep_z", None, 1, None, None)] is rep_z
    assert registry[("concat_z", None, 1, None, None)] is concat_z
    assert len(registry) == len(PUBLISHED_MODELS)
    assert model_registry() == PUBLISHED_MODELS
