import numpy as np

from shared_cacc.validation import (DEFAULT_SEED, TOLERANCES, random_instance, run_suites,
                                    stacked_suite, reaction_suite)


def test_instances_are_reproducible():
    a, b = random_instance(7, 3), random_instance(7, 3)
    assert a.describe() == b.describe()
    np.testing.assert_array_equal(a.U_m, b.U_m)
    assert random_instance(7, 4).describe() != a.describe()


def test_instance_family_ranges():
    for i in range(100):
        inst = random_instance(DEFAULT_SEED, i)
        assert 2 <= inst.K <= 8 and inst.dt in (0.05, 0.1, 0.2)
        assert all(0.0 < a.alpha_h <= 1.0 for a in inst.auth)
        assert np.all((inst.weights_h.r > 0.1) & (inst.weights_h.r < 10.0))


def test_default_suites_pass():
    for r in run_suites(n=60, n_leader=20):
        assert r.passed, r.line()
        assert r.line().startswith("PASS")


def test_perturbed_gain_is_caught():
    assert not reaction_suite(n=20, perturb=1e-3).passed
    res = stacked_suite(n=20, perturb=1e-3)
    assert not res.passed and "seed=" in res.worst_instance
    assert res.worst > TOLERANCES["stacked"]


def test_suites_deterministic_per_seed():
    a = reaction_suite(n=30, seed=5)
    b = reaction_suite(n=30, seed=5)
    assert (a.worst, a.worst_instance) == (b.worst, b.worst_instance)
