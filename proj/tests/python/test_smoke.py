import numpy as np
import pytest

import vfalign


def test_identity_network_is_identity():
    net = vfalign.IResNet.identity_init(2, layers=4, seed=1)
    x = np.random.default_rng(0).normal(size=(10, 2))
    np.testing.assert_array_equal(net.forward(x), x)


def test_inverse_round_trip():
    net = vfalign.IResNet.random_warp(3, layers=5, seed=2)
    x = np.random.default_rng(1).normal(size=(50, 3))
    np.testing.assert_allclose(net.inverse(net.forward(x)), x, atol=1e-8)


def test_fields_accept_column_major_arrays():
    f = vfalign.van_der_pol(1.5)
    x = np.asfortranarray(np.array([[1.0, 2.0], [0.5, -1.0]]))
    v = f(x)
    np.testing.assert_allclose(v[0], [2.0, 1.5 * (1 - 1.0) * 2.0 - 1.0])
    assert v.shape == (2, 2)


def test_exact_conjugacy_scores_one():
    f = vfalign.pitchfork(2.0)
    Q = vfalign.random_gaussian_positive_det(2, 3)
    g = vfalign.conjugate(f, Q)
    x = vfalign.Sampler.pitchfork_box(2.0, 1).draw(20)
    # The conjugate field at Qx is Q f(x).
    np.testing.assert_allclose(g(x @ Q.T), f(x) @ Q.T, atol=1e-10)


def test_identical_fields_similarity_one():
    f = vfalign.field_from_spec({"kind": "vdp", "mu": 1.0})
    net = vfalign.IResNet.identity_init(2, layers=2)
    p = vfalign.Sampler.vdp_box(1)
    report = vfalign.similarity(f, f, net, net, p, p.reseeded(2), samples=500)
    assert report["similarity"] == pytest.approx(1.0, abs=1e-12)


def test_short_training_run_is_deterministic():
    f = vfalign.pitchfork(2.0)
    g = vfalign.conjugate(f, vfalign.random_gaussian_positive_det(2, 4))
    p = vfalign.Sampler.pitchfork_box(2.0, 1)
    q = vfalign.Sampler.standard_normal(2, 2)
    runs = [vfalign.train(f, g, p, q, include_timing=False, batches=10, restarts=1, eval_samples=200, seed=5)
            for _ in range(2)]
    assert runs[0][2] == runs[1][2]
    assert -1.0 <= runs[0][2]["final"]["similarity"] <= 1.0


def test_experiment_returns_csv_and_summary():
    result, csv = vfalign.run_experiment(
        {"experiment": "invert-check", "random": {"dim": 3}, "points": 10}, include_timing=False)
    assert csv.splitlines()[0].startswith("experiment,i,j,seed")
    assert result["summary"]["max_error"] < 1e-6


def test_errors_map_to_python_exceptions():
    with pytest.raises(vfalign.ConfigError):
        vfalign.run_experiment({"experiment": "no-such-thing"})
    with pytest.raises(ValueError):
        vfalign.field_from_spec({"kind": "vdp"})


def test_cca_of_identical_data_is_one():
    a = np.random.default_rng(3).normal(size=(2000, 3))
    mean, corr, rank = vfalign.cca(a, a)
    assert rank == 3
    assert mean == pytest.approx(1.0, abs=1e-9)
