import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from collisim.estimators import CollisionModel, NonMarkovianityMeasure, check_angles


def test_check_angles():
    np.testing.assert_array_equal(check_angles([[0.0], [1.0]]), [0.0, 1.0])
    np.testing.assert_array_equal(check_angles([0.5]), [0.5])
    with pytest.raises(ValueError):
        check_angles([[0.0, 1.0]])
    with pytest.raises(ValueError):
        check_angles([[np.nan]])


def test_params_and_clone():
    m = CollisionModel(gamma=0.1, steps=50)
    assert m.get_params()["gamma"] == 0.1
    c = clone(m.set_params(delta=0.3))
    assert c.delta == 0.3 and c.steps == 50
    assert not hasattr(c, "system_states_")
    assert clone(NonMarkovianityMeasure(grid=8, pairs="all")).get_params()["pairs"] == "all"


def test_collision_model_transform():
    m = CollisionModel(delta=0.0, steps=2000).fit([[math.pi / 2], [0.0]])
    assert m.system_states_.shape == (2, 2001, 2, 2)
    fid = m.transform([[math.pi / 2], [0.0]])
    assert fid.shape == (2, 2001)
    assert fid[0, 0] == pytest.approx(0.0, abs=1e-15) and fid[0, -1] >= 0.99
    np.testing.assert_allclose(fid[1], 1.0, atol=1e-12)
    other = m.transform([[math.pi / 4]])
    assert other.shape == (1, 2001)
    assert m.predict([[0.0]]).shape == (1, 2, 2)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        CollisionModel().transform([[0.0]])
    with pytest.raises(NotFittedError):
        NonMarkovianityMeasure().score()


def test_measure_estimator():
    est = NonMarkovianityMeasure(steps=1000, grid=8).fit()
    n = np.arange(1001)
    expected = np.clip(np.diff(np.cos(n * 0.05) ** 2), 0, None).sum()
    assert est.score() == pytest.approx(expected, abs=1e-9)
    assert est.best_pair_ == (0.0, pytest.approx(math.pi / 2))
    assert len(est.series_) == 1001 and est.increase_intervals_
