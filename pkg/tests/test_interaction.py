import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidsphere.geometry import SpherePoint, uniform_points
from sidsphere.interaction import (
    FeatureMap,
    OccupationState,
    check_feature_map,
    coordinate_test,
    drift,
    identity_features,
    product_test,
    resolve_test,
    update_occupation,
)

e0 = SpherePoint([1.0, 0.0])


def test_drift_vanishes_without_interaction():
    f = identity_features(1)
    x = SpherePoint([0.6, 0.8])
    assert np.allclose(drift(OccupationState(1.0, np.zeros(2)), x, 3.0, f).components, 0.0)
    assert np.allclose(drift(OccupationState(1.0, np.array([0.3, 0.1])), x, 0.0, f).components, 0.0)


def test_drift_hand_value():
    state = OccupationState(2.0, np.array([0.0, 1.0]))
    assert np.allclose(drift(state, e0, 1.0, identity_features(1)).components, [0.0, -1.0])


def test_general_feature_path_matches_identity_fast_path():
    f = identity_features(2)
    slow = FeatureMap(N=3, evaluate=f.evaluate, gradient=f.gradient, name="copy")
    x = SpherePoint([0.2, -0.5, 0.7])
    state = OccupationState(4.0, np.array([0.1, 0.3, -0.2]))
    assert np.allclose(drift(state, x, 1.7, f).components, drift(state, x, 1.7, slow).components, atol=1e-15)


def test_update_two_mass_average():
    s = update_occupation(OccupationState(1.0, np.zeros(2)), e0, 1.0, identity_features(1))
    assert s.t == 2.0
    assert np.allclose(s.m, [0.5, 0.0])


def test_update_hand_arithmetic():
    s = update_occupation(OccupationState(3.0, np.array([0.5, 0.0])), SpherePoint([-1.0, 0.0]), 1.0,
                          identity_features(1))
    assert np.allclose(s.m, [0.125, 0.0], atol=1e-15)


def test_update_small_step_is_continuous():
    s0 = OccupationState(3.0, np.array([0.5, 0.0]))
    s = update_occupation(s0, SpherePoint([-1.0, 0.0]), 1e-12, identity_features(1))
    assert np.allclose(s.m, s0.m, atol=1e-12)


def test_update_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        update_occupation(OccupationState(1.0, np.zeros(2)), e0, 0.0, identity_features(1))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_running_mean_equals_brute_force_average(n, k, seed):
    rng = np.random.default_rng(seed)
    pts = uniform_points(rng, k, n + 1)
    hs = rng.uniform(1e-3, 0.5, k)
    tests = (coordinate_test(0), product_test(0, 1, n))
    state = OccupationState.initial(n + 1, tests, t_init=1.0)
    for p, h in zip(pts, hs):
        state = update_occupation(state, SpherePoint(p), h, identity_features(n), tests)
    total = 1.0 + hs.sum()
    assert state.t == pytest.approx(total, rel=1e-14)
    assert np.allclose(state.m, (hs[:, None] * pts).sum(axis=0) / total, atol=1e-12)
    brute_prod = (1.0 * 0.0 + (hs * pts[:, 0] * pts[:, 1]).sum()) / total
    assert state.test_means[1] == pytest.approx(brute_prod, abs=1e-12)


def test_identity_features_are_normalized_and_centered():
    chk = check_feature_map(identity_features(3), 3, n_samples=5000)
    assert chk.normalized and chk.centered


def test_uncentered_feature_is_detected():
    shifted = FeatureMap(N=1, evaluate=lambda x: np.array([0.5 + 0.5 * x.coords[0]]),
                         gradient=lambda x, i: None, name="shifted")
    assert not check_feature_map(shifted, 1, n_samples=2000).centered


def test_feature_map_sup_norm_must_be_one():
    with pytest.raises(ValueError):
        FeatureMap(N=1, evaluate=lambda x: x, gradient=lambda x, i: x, sup_norm=2.0)


def test_test_function_registry():
    f = resolve_test("x0x1", 2)
    assert f.uniform_mean == 0.0
    assert resolve_test("x1x1", 2).uniform_mean == pytest.approx(1 / 3)
    assert resolve_test("x2", 2).coordinate == 2
    with pytest.raises(KeyError):
        resolve_test("x3", 2)
    with pytest.raises(KeyError):
        resolve_test("cos", 2)
