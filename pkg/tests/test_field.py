import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import circle_sdf
from lsnucleate.field import (FieldError, apply_filter, build_filter, eval_field,
                              extract_interface, interface_length_gradient, smoothed_delta,
                              smoothed_heaviside)
from lsnucleate.grid import build_grid
from lsnucleate.opt.problem import smeared_perimeter


def dense_filter(grid, r_f):
    X = grid.coords
    D = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    W = np.maximum(r_f - D, 0.0)
    return W / W.sum(axis=1, keepdims=True)


def test_filter_matches_dense_oracle():
    g = build_grid(9, 7, 0.5)
    op = build_filter(g, 1.6 * g.h)
    assert np.allclose(op.W.toarray(), dense_filter(g, 1.6 * g.h), atol=1e-14)
    assert np.allclose(np.asarray(op.W.sum(axis=1)).ravel(), 1.0, atol=1e-12)


def test_filter_examples():
    g = build_grid(8, 6, 1.0)
    assert np.allclose(build_filter(g, 0.5).W.toarray(), np.eye(g.node_count))
    op = build_filter(g, 1.6)
    assert np.allclose(apply_filter(op, np.full(g.node_count, 0.4)), 0.4)
    spike = np.zeros(g.node_count)
    c = g.node_index(4, 3)
    spike[c] = 1.0
    out = apply_filter(op, spike)
    assert np.count_nonzero(out) == 9
    assert out[c] == pytest.approx(dense_filter(g, 1.6)[c, c])
    with pytest.raises(FieldError):
        build_filter(g, 0.0)
    with pytest.raises(FieldError):
        apply_filter(op, np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_filter_preserves_bounds(seed):
    g = build_grid(6, 5, 1.0)
    s = np.random.default_rng(seed).uniform(-2.5, 2.5, g.node_count)
    out = apply_filter(build_filter(g, 1.6), s)
    assert out.min() >= -2.5 - 1e-12 and out.max() <= 2.5 + 1e-12


def test_eval_field():
    g = build_grid(3, 2, 1.0)
    assert eval_field(g, np.full(g.node_count, 1.7), 2.3, 0.4) == pytest.approx(1.7)
    v = np.random.default_rng(0).normal(size=g.node_count)
    assert eval_field(g, v, 1.5, 0.5) == pytest.approx(v[g.elements[1]].mean())
    u = build_grid(1, 1, 1.0)
    # nodes (0,0), (1,0), (0,1), (1,1) carry 0, 1, 0, 1, so the interpolant is x
    vals = np.array([0.0, 1.0, 0.0, 1.0])
    assert eval_field(u, vals, 0.25, 0.5) == pytest.approx(0.25)
    with pytest.raises(FieldError):
        eval_field(g, v, -1.0, 0.5)


def test_heaviside_values():
    eps = 0.5
    assert smoothed_heaviside(0.0, eps) == 0.5
    assert smoothed_heaviside(2 * eps, eps) == 1.0
    assert smoothed_heaviside(-2 * eps, eps) == 0.0
    x = 0.5
    assert smoothed_heaviside(0.5 * eps, eps) == pytest.approx(
        0.5 + 15 / 16 * x - 10 / 16 * x**3 + 3 / 16 * x**5, abs=1e-15)


def test_heaviside_derivative_fd():
    eps = 0.7
    rng = np.random.default_rng(5)
    phi = rng.uniform(-1, 1, 100) * eps
    step = 1e-6 * eps
    fd = (smoothed_heaviside(phi + step, eps) - smoothed_heaviside(phi - step, eps)) / (2 * step)
    assert np.max(np.abs(fd - smoothed_delta(phi, eps))) <= 1e-6


def test_heaviside_monotone():
    phi = np.linspace(-2, 2, 2001)
    assert np.all(np.diff(smoothed_heaviside(phi, 1.0)) >= 0)


def test_interface_empty_and_linear():
    g = build_grid(12, 8, 0.5)
    assert extract_interface(g, np.ones(g.node_count)).total_length == 0.0
    x = g.coords[:, 0]
    poly = extract_interface(g, x - 2.3)
    assert poly.total_length == pytest.approx(g.height, abs=1e-10)
    assert np.allclose(poly.segments[..., 0], 2.3)


def test_circle_perimeter(circle_grid):
    g = circle_grid
    phi = circle_sdf(g)
    exact = 2 * math.pi * 10
    assert abs(extract_interface(g, phi).total_length - exact) / exact < 0.01
    smeared = smeared_perimeter(g, phi, g.h) * g.boundary_length
    assert abs(smeared - exact) / exact < 0.05


def test_saddle_segments_do_not_cross():
    g = build_grid(1, 1, 1.0)
    poly = extract_interface(g, np.array([1.0, -1.0, -1.0, 1.0]))
    assert len(poly) == 2


def test_interface_length_gradient_fd():
    g = build_grid(30, 20, 1.0)
    phi = circle_sdf(g, (15.3, 10.1), 6.2)
    grad = interface_length_gradient(g, phi)
    rng = np.random.default_rng(2)
    near = np.flatnonzero(np.abs(phi) < 1.5)
    for n in rng.choice(near, 20, replace=False):
        d = np.zeros_like(phi)
        d[n] = 1e-6
        fd = (extract_interface(g, phi + d).total_length
              - extract_interface(g, phi - d).total_length) / 2e-6
        assert fd == pytest.approx(grad[n], rel=1e-5, abs=1e-8)


def test_smeared_perimeter_gradient_fd():
    g = build_grid(20, 14, 1.0)
    phi = circle_sdf(g, (10.2, 7.1), 4.0)
    _, grad = smeared_perimeter(g, phi, g.h, return_grad=True)
    for n in np.flatnonzero(np.abs(phi) < 1.5)[:20]:
        d = np.zeros_like(phi)
        d[n] = 1e-6
        fd = (smeared_perimeter(g, phi + d, g.h) - smeared_perimeter(g, phi - d, g.h)) / 2e-6
        assert fd == pytest.approx(grad[n], rel=1e-5, abs=1e-9)
