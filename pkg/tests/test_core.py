import numpy as np
import pytest

from genreg.core import ShapeError, as_grid, discrete_gradient, gradient_adjoint, normalized_norm, raw_sq_norm


def test_normalized_norm_examples():
    assert normalized_norm(np.ones((2, 2)), 1) == pytest.approx(1.0)
    assert normalized_norm(np.ones((2, 2)), 2) == pytest.approx(1.0)
    assert normalized_norm(np.array([[3.0, 4.0]]), 2) == pytest.approx(np.sqrt(12.5), abs=1e-12)
    assert normalized_norm(np.zeros((3, 5))) == 0.0


def test_raw_sq_norm_examples():
    assert raw_sq_norm(np.array([[3.0, 4.0]])) == 25.0
    assert raw_sq_norm(np.zeros((2, 2))) == 0.0
    assert raw_sq_norm(np.full((2, 2), 0.5)) == 1.0


def test_gradient_constant_and_tiny():
    assert not discrete_gradient(np.full((4, 5), 2.5)).any()
    g = discrete_gradient(np.array([[7.0]]))
    assert g.shape == (2, 1, 1) and not g.any()


def test_gradient_hand_example():
    u = np.array([[0.0, 1.0], [0.0, 1.0]])
    g = discrete_gradient(u)
    np.testing.assert_array_equal(g[0], np.zeros((2, 2)))
    np.testing.assert_array_equal(g[1], [[1.0, 0.0], [1.0, 0.0]])


def test_gradient_adjoint_identity(rng):
    u = rng.standard_normal((5, 7))
    f = discrete_gradient(rng.standard_normal((5, 7)))
    lhs = np.vdot(discrete_gradient(u), f)
    rhs = np.vdot(u, gradient_adjoint(f))
    assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(f)


def test_gradient_adjoint_brute_force_2x2():
    # dense matrix of the gradient operator, built column by column
    cols = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1
        cols.append(discrete_gradient(e.reshape(2, 2)).ravel())
    G = np.array(cols).T
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1
    f = discrete_gradient(e11)
    np.testing.assert_allclose(gradient_adjoint(f).ravel(), G.T @ f.ravel(), atol=1e-15)
    np.testing.assert_array_equal(gradient_adjoint(np.zeros((2, 3, 3))), np.zeros((3, 3)))


def test_as_grid_rejects_bad_input():
    with pytest.raises(ShapeError):
        as_grid(np.zeros(3))
    with pytest.raises(ValueError):
        as_grid([[np.nan, 1.0]])
