import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pbds.engine import Policy
from pbds.estimator import PBDSPolicy
from pbds.manifolds import ChartPoint, Sphere
from pbds.scenario import latlon
from pbds.tasks import make_attractor_task, make_damping_task


def sample_states(rng, n=20):
    return np.hstack([rng.normal(size=(n, 2)) * 0.6, rng.normal(size=(n, 2))])


def test_predict_matches_policy(rng):
    goal = latlon(30.0, 60.0)
    est = PBDSPolicy({"kind": "sphere2"}, goal=goal, damping=4.0)
    X = sample_states(rng)
    est.fit(X)
    sphere = Sphere(2)
    ref = Policy([make_attractor_task(goal, sphere), make_damping_task(sphere, 4.0)], sphere)
    pred = est.predict(X)
    assert pred.shape == (len(X), 2)
    for row, a in zip(X, pred):
        np.testing.assert_allclose(a, ref.acceleration(ChartPoint(0, row[:2]), row[2:]), atol=1e-12)
    assert np.all(est.lyapunov(X) >= 0)


def test_assumption_report(rng):
    est = PBDSPolicy(goal=latlon(30.0, 60.0)).fit(sample_states(rng))
    assert est.assumption_report_.ok
    assert est.assumption_report_.passed == {"A1": True, "A2": True, "A3": True}


def test_params_and_clone():
    est = PBDSPolicy(goal=[0.0, 0.0, 1.0], damping=2.5, obstacles=(([1.0, 0.0, 0.0], 0.1),))
    params = est.get_params()
    assert params["damping"] == 2.5 and params["engine"] == "pbds"
    twin = clone(est)
    assert twin.get_params()["damping"] == 2.5 and not hasattr(twin, "policy_")
    est.set_params(damping=1.0)
    assert est.damping == 1.0


def test_column_checks(rng):
    est = PBDSPolicy(goal=[0.0, 0.0, 1.0])
    with pytest.raises(NotFittedError):
        est.predict(sample_states(rng, 2))
    with pytest.raises(ValueError):
        est.fit(rng.normal(size=(3, 3)))
    est.fit(sample_states(rng, 3))
    with pytest.raises(ValueError):
        est.predict(rng.normal(size=(2, 5)))
