import math

import numpy as np
import pytest
import torch

from hypercodon import ball
from hypercodon.checks import geometry_suite, random_interior, random_tangent
from hypercodon.diffcore import grad_check, tensor


def test_conformal_factor_values():
    assert float(ball.conformal_factor(tensor([0.0, 0.0]), 0.7)) == 2.0
    x = tensor([0.5, 0.5])  # |x|^2 = 0.5
    assert float(ball.conformal_factor(x, 1.0)) == pytest.approx(4.0, abs=1e-12)
    x = tensor([0.6, 0.8])  # |x|^2 = 1
    assert float(ball.conformal_factor(x, 0.2)) == pytest.approx(2.5, abs=1e-12)


def test_project_to_ball():
    np.testing.assert_array_equal(ball.project_to_ball(tensor([0.0, 0.0])).numpy(), [0.0, 0.0])
    out = ball.project_to_ball(tensor([2.0, 0.0]))
    assert float(out.norm()) == pytest.approx(1 - 1e-5, abs=1e-15)
    v = tensor([0.18, 0.24])
    assert torch.equal(ball.project_to_ball(v), v)
    with pytest.raises(ValueError, match="non-finite"):
        ball.project_to_ball(tensor([float("nan"), 0.0]))


def test_dist_values():
    x = tensor([0.2, -0.1])
    assert float(ball.dist(x, x)) == 0.0
    # 2 artanh(0.5) = ln 3
    assert float(ball.dist(tensor([0.0, 0.0]), tensor([0.5, 0.0]))) == pytest.approx(1.0986122886681098, abs=1e-12)


def test_dist_symmetry_and_mismatch():
    gen = torch.Generator().manual_seed(3)
    x, y = random_interior(200, 4, 1.0, gen), random_interior(200, 4, 1.0, gen)
    np.testing.assert_allclose(ball.dist(x, y).numpy(), ball.dist(y, x).numpy(), rtol=0, atol=1e-12)
    with pytest.raises(ValueError, match="dimension mismatch"):
        ball.dist(tensor([0.1, 0.2]), tensor([0.1, 0.2, 0.3]))
    with pytest.raises(ValueError, match="curvature"):
        ball.dist(x, y, c=0.0)


def test_exp_map_at_origin():
    np.testing.assert_array_equal(ball.exp_map(tensor([0.0, 0.0]), tensor([0.0, 0.0])).numpy(), [0.0, 0.0])
    out = ball.exp_map(tensor([0.0, 0.0]), tensor([0.25, 0.0]))
    np.testing.assert_allclose(out.numpy(), [0.24491866240370913, 0.0], atol=1e-15)
    np.testing.assert_allclose(ball.exp_map0(tensor([0.25, 0.0])).numpy(), out.numpy(), atol=1e-15)


def test_log_map_of_self_is_zero():
    x = tensor([0.3, -0.2, 0.1])
    np.testing.assert_array_equal(ball.log_map(x, x).numpy(), np.zeros(3))


def test_exp_of_zero_velocity_is_identity():
    x = tensor([0.3, -0.2, 0.1])
    assert torch.equal(ball.exp_map(x, torch.zeros(3, dtype=torch.float64)), x)


def test_mobius_identities():
    x, y = tensor([0.3, -0.5]), tensor([-0.1, 0.7])
    zero = torch.zeros(2, dtype=torch.float64)
    np.testing.assert_allclose(ball.mobius_add(x, zero).numpy(), x.numpy(), atol=1e-15)
    np.testing.assert_allclose(ball.mobius_add(zero, y).numpy(), y.numpy(), atol=1e-15)
    np.testing.assert_allclose(ball.mobius_add(-x, x).numpy(), [0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("c", [0.2, 0.5, 1.0])
def test_geometry_identities(c):
    res = geometry_suite(c, n=1000, dim=5, seed=11)
    assert not res.failures, res.errors


@pytest.mark.parametrize("c", [0.2, 0.5, 1.0])
def test_outputs_stay_inside(c):
    gen = torch.Generator().manual_seed(5)
    x = random_interior(500, 3, c, gen, max_frac=0.999)
    v = random_tangent(x, c, gen, max_dist=40.0)
    for out in (ball.exp_map(x, v, c), ball.mobius_add(x, x, c), ball.exp_map0(50 * v, c)):
        assert ball.is_inside(out, c)


def test_log_exp_at_origin_inverse():
    gen = torch.Generator().manual_seed(9)
    v = 0.5 * torch.randn(100, 4, generator=gen, dtype=torch.float64)
    np.testing.assert_allclose(ball.log_map0(ball.exp_map0(v, 0.5), 0.5).numpy(), v.numpy(), atol=1e-10)


def test_riemannian_grad_scaling():
    x = tensor([0.5, 0.5])
    np.testing.assert_allclose(ball.riemannian_grad(x, tensor([4.0, 8.0])).numpy(), [0.25, 0.5])


def test_gradients_random_points():
    gen = torch.Generator().manual_seed(21)
    for _ in range(20):
        x, y = random_interior(2, 3, 0.5, gen, 0.8)
        assert grad_check(lambda a, b: ball.dist(a, b, 0.5), [x, y]).max_rel_error < 1e-4
        w = torch.randn(3, generator=gen, dtype=torch.float64)
        assert grad_check(lambda a, b: (ball.log_map(a, b, 0.5) * w).sum(), [x, y]).max_rel_error < 1e-4


def test_poincare_ball_view():
    B = ball.PoincareBall(0.25)
    assert B.radius == pytest.approx(2.0)
    x = tensor([1.0, 0.0])
    assert B.contains(x)
    assert float(B.dist(x, B.expmap(x, B.logmap(x, tensor([0.0, 1.0]))))) == pytest.approx(
        float(B.dist(x, tensor([0.0, 1.0]))), abs=1e-9
    )
    with pytest.raises(ValueError):
        ball.PoincareBall(-1.0)
