import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from landscape_lab.errors import InputError
from landscape_lab.landscape import (
    EnergyLandscape,
    MemorySet,
    energy,
    gaussian_blobs,
    grad_energy,
    hessian_fd,
    hessian_fd_raw,
    load_memory_csv,
    save_memory_csv,
)


def two_memory_1d(beta):
    return EnergyLandscape(MemorySet(np.array([[-1.0], [1.0]]), ("a", "b")), beta)


# ---------------------------------------------------------------------------
# MemorySet construction
# ---------------------------------------------------------------------------

def test_memoryset_validation():
    with pytest.raises(InputError):
        MemorySet(np.empty((0, 2)), ())
    with pytest.raises(InputError):
        MemorySet(np.zeros((2, 2)), ("a",))            # label length mismatch
    with pytest.raises(InputError):
        MemorySet(np.array([[1.0], [1.0]]), ("a", "b"))  # duplicate points
    ms = MemorySet(np.array([[0.0, 1.0], [1.0, 0.0]]), ("a", "b"))
    assert ms.n == 2 and ms.dim == 2
    assert not ms.points.flags.writeable


def test_memoryset_stats():
    ms = MemorySet(np.array([[-1.0], [1.0], [3.0]]), ("a", "a", "b"))
    assert np.allclose(ms.centroid, [1.0])
    assert ms.radius == 2.0
    assert ms.diameter == 4.0
    assert ms.class_proportions() == {"a": 2 / 3, "b": 1 / 3}


# ---------------------------------------------------------------------------
# Energy
# ---------------------------------------------------------------------------

def test_energy_single_memory_is_half_sqdist():
    ms = MemorySet(np.zeros((1, 2)), ("m",))
    for beta in (0.5, 1.0, 7.0):
        ls = EnergyLandscape(ms, beta)
        assert ls.energy(np.zeros(2)) == pytest.approx(0.0, abs=1e-14)
        assert ls.energy(np.array([2.0, 0.0])) == pytest.approx(2.0, abs=1e-12)


def test_energy_two_memories_independent_evaluation():
    # independent one-line evaluation: -(1/4) ln(2 exp(-2)) = 1/2 - ln(2)/4
    expected = 0.5 - math.log(2.0) / 4.0
    assert two_memory_1d(4.0).energy(np.array([0.0])) == pytest.approx(expected, abs=1e-12)
    assert oracles.lse_energy_1d([-1.0, 1.0], 4.0, 0.0) == pytest.approx(expected, abs=1e-12)


def test_energy_dimension_mismatch():
    with pytest.raises(InputError):
        two_memory_1d(1.0).energy(np.zeros(2))
    with pytest.raises(InputError):
        grad_energy(two_memory_1d(1.0), np.zeros(3))


def test_energy_batch_matches_scalar():
    rng = np.random.default_rng(0)
    ls = EnergyLandscape(MemorySet(rng.normal(size=(5, 3)), tuple(range(5))), 2.0)
    xs = rng.normal(size=(7, 3))
    batch = ls.energy(xs)
    for i in range(7):
        assert batch[i] == ls.energy(xs[i])


def test_energy_finite_for_extreme_points():
    ls = two_memory_1d(50.0)
    for x in (1e3, -1e3, 1e6):
        assert math.isfinite(ls.energy(np.array([x])))


def test_sharp_regime_memories_are_local_minima():
    # each memory is a local minimum once beta clears the pairwise merging
    # threshold ~ 1 / (half the closest spacing)^2
    rng = np.random.default_rng(14)
    pts = rng.normal(size=(5, 2))
    gaps = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    delta = gaps[gaps > 0].min()
    beta = 16.0 / delta ** 2
    ls = EnergyLandscape(MemorySet(pts, tuple(range(5))), beta)
    radius = 0.1 * delta
    ring = radius * np.stack([np.cos(np.linspace(0, 2 * np.pi, 16)),
                              np.sin(np.linspace(0, 2 * np.pi, 16))], axis=1)
    for m in pts:
        e0 = ls.energy(m)
        assert (ls.energy(m + ring) >= e0).all()


def test_energy_translation_invariance():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(6, 2))
    x = rng.normal(size=2)
    shift = rng.normal(size=2) * 10
    a = EnergyLandscape(MemorySet(pts, tuple(range(6))), 3.0).energy(x)
    b = EnergyLandscape(MemorySet(pts + shift, tuple(range(6))), 3.0).energy(x + shift)
    assert abs(a - b) < 1e-10


# ---------------------------------------------------------------------------
# Weights and gradient
# ---------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2),
       st.floats(0.1, 20.0))
def test_weights_simplex_property(coords, beta):
    rng = np.random.default_rng(1)
    ls = EnergyLandscape(MemorySet(rng.normal(size=(6, 2)), tuple(range(6))), beta)
    w = ls.weights(np.array(coords))
    assert (w >= 0).all()
    assert abs(float(w.sum()) - 1.0) < 1e-12


def test_grad_single_memory():
    m = np.array([0.3, -0.7])
    ls = EnergyLandscape(MemorySet(m[None, :], ("m",)), 5.0)
    x = np.array([2.0, 1.0])
    assert np.allclose(ls.grad(x), x - m, atol=1e-14)


def test_grad_symmetry_point():
    assert two_memory_1d(3.0).grad(np.array([0.0])) == pytest.approx(0.0, abs=1e-15)


def test_grad_matches_finite_differences_frozen_case():
    ls = EnergyLandscape(MemorySet(np.array([[0.0], [1.0]]), (0, 1)), 2.0)
    x = np.array([0.25])
    fd = (ls.energy(np.array([0.25 + 1e-5])) - ls.energy(np.array([0.25 - 1e-5]))) / 2e-5
    g = ls.grad(x)[0]
    assert abs(g - fd) / abs(fd) < 1e-6


def test_grad_matches_finite_differences_random():
    # d <= 8, 20 seeds, 100 points per landscape
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d = int(rng.choice([1, 2, 4, 8]))
        pts = rng.normal(size=(6, d))
        ls = EnergyLandscape(MemorySet(pts, tuple(range(6))), float(rng.uniform(0.5, 8.0)))
        xs = ls.memories.centroid + rng.normal(size=(100, d))
        grads = ls.grad(xs)
        for x, g in zip(xs, grads):
            fd = oracles.central_diff_gradient(ls.energy, x)
            denom = max(float(np.linalg.norm(g)), 1e-10)
            assert np.linalg.norm(fd - g) / denom < 1e-5


def test_critical_points_in_convex_hull():
    # fixed-point identity: the gradient is the residual x - sum w_i(x) x_i,
    # so any zero-gradient point is a convex combination of the memories
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(5, 2))
    ls = EnergyLandscape(MemorySet(pts, tuple(range(5))), 4.0)
    for x in rng.normal(size=(20, 2)):
        w = ls.weights(x)
        assert np.allclose(ls.grad(x), x - (w[:, None] * pts).sum(axis=0), atol=1e-14)
    x = pts[2] + 0.1
    for _ in range(5000):
        x = x - 0.9 * ls.grad(x)
        if np.linalg.norm(ls.grad(x)) < 1e-9:
            break
    w = ls.weights(x)
    assert np.linalg.norm(x - (w[:, None] * pts).sum(axis=0)) < 1e-8
    assert (w >= 0).all() and abs(w.sum() - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# Finite-difference Hessian
# ---------------------------------------------------------------------------

def test_hessian_single_memory_identity():
    rng = np.random.default_rng(2)
    ls = EnergyLandscape(MemorySet(rng.normal(size=(1, 3)), ("m",)), 2.0)
    h = hessian_fd(ls, rng.normal(size=3))
    assert np.abs(h - np.eye(3)).max() < 1e-4


def test_hessian_merged_regime_flattened():
    # analytic oracle: E''(x) = 1 - beta Var_w; at 0 with memories +-1, 1 - beta
    ls = two_memory_1d(0.5)
    h = hessian_fd(ls, np.array([0.0]))[0, 0]
    assert h < 1.0
    assert h == pytest.approx(0.5, abs=1e-5)
    assert oracles.analytic_hessian([[-1.0], [1.0]], 0.5, [0.0])[0, 0] == pytest.approx(0.5)


def test_hessian_matches_analytic_random():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(5, 2))
        ls = EnergyLandscape(MemorySet(pts, tuple(range(5))), 3.0)
        x = rng.normal(size=2)
        assert np.abs(hessian_fd(ls, x) - oracles.analytic_hessian(pts, 3.0, x)).max() < 1e-5


def test_hessian_asymmetry_tiny():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(6, 4))
    ls = EnergyLandscape(MemorySet(pts, tuple(range(6))), 2.0)
    raw = hessian_fd_raw(ls, rng.normal(size=4))
    assert np.abs(raw - raw.T).max() < 1e-6


def test_hessian_step_validation():
    with pytest.raises(InputError):
        hessian_fd(two_memory_1d(1.0), np.array([0.0]), h=0.0)


def test_functional_wrappers():
    ls = two_memory_1d(4.0)
    assert energy(ls, np.array([0.0])) == ls.energy(np.array([0.0]))
    assert np.array_equal(grad_energy(ls, np.array([0.3])), ls.grad(np.array([0.3])))


# ---------------------------------------------------------------------------
# CSV interchange and synthesis
# ---------------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    ms = gaussian_blobs(dim=3, class_counts=[4, 2], spread=0.5, seed=7,
                        labels=["red", "blue"])
    path = tmp_path / "mem.csv"
    save_memory_csv(ms, path)
    loaded = load_memory_csv(path)
    assert np.array_equal(loaded.points, ms.points)
    assert loaded.labels == ms.labels


def test_csv_header_required(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.0,a\n1.0,b\n", encoding="utf-8")
    with pytest.raises(InputError):
        load_memory_csv(path)


def test_csv_numeric_labels_round_trip(tmp_path):
    ms = MemorySet(np.array([[0.0], [1.0]]), (0, 1))
    path = tmp_path / "mem.csv"
    save_memory_csv(ms, path)
    assert load_memory_csv(path).labels == (0, 1)


def test_blobs_counts_and_determinism():
    a = gaussian_blobs(dim=2, class_counts=[5, 3], seed=11)
    b = gaussian_blobs(dim=2, class_counts=[5, 3], seed=11)
    assert a.labels.count(0) == 5 and a.labels.count(1) == 3
    assert np.array_equal(a.points, b.points)
    c = gaussian_blobs(dim=2, class_counts=[5, 3], seed=12)
    assert not np.array_equal(a.points, c.points)


def test_beta_validation():
    ms = MemorySet(np.array([[0.0]]), ("m",))
    with pytest.raises(InputError):
        EnergyLandscape(ms, 0.0)
    with pytest.raises(InputError):
        EnergyLandscape(ms, -1.0)
