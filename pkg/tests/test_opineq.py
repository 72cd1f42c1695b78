import numpy as np
import pytest

from maglt.core.opineq import (
    BlockInstance,
    inverse,
    lemma_xy_gap,
    lemma_xy_sweep,
    pullin_counterexample,
    pullup_difference,
    pullup_gap,
    pullup_sweep,
    random_block_instance,
    random_spd,
    random_xy_instance,
    reweight_kernels,
    reweight_sweep,
    run_suite,
)


def test_single_block_with_unit_weight_is_equality(rng):
    instance = BlockInstance(np.ones((1, 4)), random_spd(rng, 4)[None])

    assert abs(pullup_gap(instance)) <= 1e-12


def test_pullup_holds_on_random_instances():
    summary = pullup_sweep(1000, seed=7)

    assert summary.count == 1000
    assert summary.passed
    assert summary.worst_gap >= -1e-10


def test_pullup_on_diagonal_family_matches_scalar_oracle():
    g = np.array([[1.0, 0.5, 0.2], [0.3, 1.0, 0.7]])
    a = np.array([np.diag([1.0, 2.0, 3.0]), np.diag([2.0, 2.0, 5.0])])

    diff = pullup_difference(BlockInstance(g, a), inverse)

    diag_a = np.array([[1.0, 2.0, 3.0], [2.0, 2.0, 5.0]])
    outer = np.sum(g * g, axis=0)
    expected = np.sum(g * g / diag_a, axis=0) - outer**2 / np.sum(g * g * diag_a, axis=0)
    assert np.allclose(diff, np.diag(expected), atol=1e-13)
    assert expected[1] == pytest.approx(0.0, abs=1e-15)
    assert np.all(expected[[0, 2]] > 0.0)


def test_pullup_gap_is_unitarily_invariant_with_scalar_weights(rng):
    instance = random_block_instance(rng, k=3, n=4, scalar_weights=True)
    z = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    unitary, _ = np.linalg.qr(z)

    assert pullup_gap(instance.conjugated(unitary)) == pytest.approx(pullup_gap(instance), abs=1e-12)


def test_block_instance_validation():
    with pytest.raises(ValueError, match="positive definite"):
        BlockInstance(np.ones((1, 2)), np.array([[[1.0, 2.0], [2.0, 1.0]]]))
    with pytest.raises(ValueError, match="vanish"):
        BlockInstance(np.array([[1.0, 0.0]]), np.eye(2)[None])
    with pytest.raises(ValueError, match=">= 0"):
        BlockInstance(np.array([[1.0, -1.0]]), np.eye(2)[None])
    with pytest.raises(ValueError, match="Hermitian"):
        BlockInstance(np.ones((1, 2)), np.array([[[2.0, 1.0], [0.0, 2.0]]]))


def test_pullin_counterexample_is_confirmed():
    report = pullin_counterexample()

    expected = np.array([[55.0 / 36.0, -61.0 / 72.0], [-61.0 / 72.0, 67.0 / 144.0]])
    assert np.allclose(report.difference, expected, atol=1e-12)
    assert np.linalg.det(report.difference.real) == pytest.approx(-1.0 / 144.0, rel=1e-9)
    assert report.min_eig == pytest.approx(-0.003478, rel=1e-2)
    assert report.normalized < -1e-3
    assert report.confirmed


def test_pullin_with_inverse_satisfies_pullup():
    assert pullin_counterexample(inverse).min_eig >= -1e-12


def test_pullin_with_equal_blocks_is_equality():
    a = np.array([[1.0, 1.0], [1.0, 2.0]])

    report = pullin_counterexample(a1=a, a2=a)

    assert np.max(np.abs(report.difference)) <= 1e-12


def test_lemma_xy_trivial_instance():
    gaps = lemma_xy_gap(np.zeros((2, 2)), np.zeros((2, 2)), 1.0)

    assert gaps.first == pytest.approx(3.75)
    assert gaps.second == pytest.approx(0.0, abs=1e-14)


def test_lemma_xy_with_opposite_y():
    x = np.diag([0.5, 1.0])

    gaps = lemma_xy_gap(x, -x, 1.0)

    assert gaps.first == pytest.approx(0.75)
    assert gaps.worst >= -1e-12


def test_lemma_xy_holds_on_random_instances():
    summary = lemma_xy_sweep(1000, seed=11)

    assert summary.passed
    assert summary.worst_seed[0] == 11


def test_random_xy_instance_is_admissible(rng):
    for _ in range(20):
        x, y, m = random_xy_instance(rng)

        assert np.linalg.eigvalsh(x + y)[0] >= -1e-12
        assert np.linalg.norm(y, 2) <= m * (1.0 + 1e-12)


def test_lemma_xy_checks_preconditions():
    eye = np.eye(2)
    with pytest.raises(ValueError, match="X must be"):
        lemma_xy_gap(-eye, 0 * eye, 1.0)
    with pytest.raises(ValueError, match="<= M"):
        lemma_xy_gap(eye, 2.0 * eye, 1.0)
    with pytest.raises(ValueError, match="X \\+ Y"):
        lemma_xy_gap(0 * eye, -0.5 * eye, 1.0)
    with pytest.raises(ValueError, match="M must be"):
        lemma_xy_gap(eye, eye, 0.0)


def test_reweight_with_unit_weights_is_identity(rng):
    kernel = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))

    report = reweight_kernels(kernel, np.ones(5))

    assert report.c_f == 1.0
    assert report.kernel_defect == 0.0
    assert report.spectrum == pytest.approx((report.alpha, report.beta), rel=1e-12)
    assert report.ok()


def test_reweight_sandwich_on_random_kernels():
    reports = reweight_sweep(50, seed=3)

    assert all(r.ok() for r in reports)
    assert all(r.c_f <= 4.0 for r in reports)


def test_reweight_of_diagonal_kernel():
    report = reweight_kernels(np.diag([1.0, 2.0, 3.0]), np.array([0.5, 1.0, 2.0]))

    assert report.diagonal_defect == 0.0
    assert report.c_f == pytest.approx(4.0)
    assert report.ok()


def test_reweight_rejects_nonpositive_weights():
    with pytest.raises(ValueError, match="F must be"):
        reweight_kernels(np.eye(2), np.array([1.0, 0.0]))


def test_suite_summary():
    summary = run_suite(50, seed=1)
    payload = summary.to_dict()

    assert summary.passed
    assert payload["pullup"]["count"] == 50
    assert payload["reweight"] == {"count": 5, "failures": 0}
    assert payload["pullin"]["confirmed"] is True
