import numpy as np
import pytest
from numpy.testing import assert_allclose

from cadsi.models.scoring import PredictorParams, fm_semantic_intent, predict
from cadsi.utils.errors import ConfigError, DimensionError


def test_fm_with_unit_contexts_is_elementwise_product():
    rng = np.random.default_rng(0)
    uu, ii = rng.standard_normal(5), rng.standard_normal(5)
    ones = np.ones(5)
    assert_allclose(fm_semantic_intent(uu, ii, ones, ones), uu * ii)


def test_fm_broadcasts_rows():
    rng = np.random.default_rng(1)
    uu, ii, cu, ci = (rng.standard_normal((3, 4)) for _ in range(4))
    e = fm_semantic_intent(uu, ii, cu, ci)
    for row in range(3):
        assert_allclose(e[row], fm_semantic_intent(uu[row], ii[row], cu[row], ci[row]))


def test_fm_rejects_width_mismatch():
    with pytest.raises(DimensionError):
        fm_semantic_intent(np.ones(4), np.ones(4), np.ones(3), np.ones(4))


def test_predict_blends_id_and_semantic_terms():
    u, i, e = np.array([1.0, 2.0]), np.array([3.0, -1.0]), np.array([0.5, 0.5])
    assert predict(u, i, e, PredictorParams(1.0)) == pytest.approx(1.0)
    assert predict(u, i, e, PredictorParams(0.0)) == pytest.approx(1.0)
    assert predict(u, i, np.zeros(2), PredictorParams(0.25)) == pytest.approx(0.25)


def test_predict_rejects_width_mismatch():
    with pytest.raises(DimensionError):
        predict(np.ones(3), np.ones(3), np.ones(2), PredictorParams())


@pytest.mark.parametrize("delta", [-0.1, 1.5])
def test_delta_must_lie_in_unit_interval(delta):
    with pytest.raises(ConfigError):
        PredictorParams(delta)
