import math

import numpy as np
import pytest

from lsnucleate.couple import MaterialModel
from lsnucleate.fixtures import ex1_fixture
from lsnucleate.grid import GAUSS_N, build_grid
from lsnucleate.solve import (BoundaryConditions, assemble_and_solve, connected_components,
                              element_stiffness_scale, gauss_interp, mass, modulus_partials,
                              von_mises, von_mises_and_smooth, void_components)

MAT = MaterialModel()


def bar(nx=8, ny=3, h=0.5, T=7.0):
    g = build_grid(nx, ny, h)
    fixed = {2 * n: 0.0 for n in g.nodes_where(lambda x, y: x < 1e-12)}
    fixed[1] = 0.0  # bottom-left node pinned vertically
    bc = BoundaryConditions(fixed, [(g.boundary_edges("right"), (T, 0.0))])
    return g, bc


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def uf_partition(grid, mask):
    """Edge-adjacency components of the flagged elements as a set of frozensets."""
    uf = UnionFind(grid.element_count)
    for e in np.flatnonzero(mask):
        ey, ex = divmod(int(e), grid.nx)
        if ex + 1 < grid.nx and mask[e + 1]:
            uf.union(e, e + 1)
        if ey + 1 < grid.ny and mask[e + grid.nx]:
            uf.union(e, e + grid.nx)
    groups = {}
    for e in np.flatnonzero(mask):
        groups.setdefault(uf.find(int(e)), set()).add(int(e))
    return {frozenset(v) for v in groups.values()}


def test_stiffness_scale_examples():
    eps = 0.5
    full = element_stiffness_scale(np.full(4, eps), np.ones(4), MAT, eps)
    assert np.allclose(full, MAT.E0)
    void = element_stiffness_scale(np.full(4, -eps), np.ones(4), MAT, eps)
    assert np.allclose(void, MAT.E_void)
    # phi vanishing at every Gauss point
    half = element_stiffness_scale(np.zeros(4), np.ones(4), MAT, eps)
    assert np.allclose(half, MAT.E_void + 0.5 * (MAT.E0 - MAT.E_void))
    # a penalized indicator leaves the solid and void limits untouched
    pen = MaterialModel(heaviside_power=3.0)
    assert np.allclose(element_stiffness_scale(np.full(4, eps), np.ones(4), pen, eps), pen.E0)
    assert np.allclose(element_stiffness_scale(np.zeros(4), np.ones(4), pen, eps),
                       pen.E_void + 0.125 * (pen.E0 - pen.E_void))


@pytest.mark.parametrize("q", [1.0, 3.0])
def test_modulus_partials_fd(q):
    mat = MaterialModel(heaviside_power=q)
    rng = np.random.default_rng(1)
    phi = rng.uniform(-1, 1, (30, 4))
    rho = rng.uniform(0.1, 1.0, (30, 4))
    dphi, drho = modulus_partials(phi, rho, mat, 1.0)
    h = 1e-7
    E = lambda p, r: element_stiffness_scale(p @ np.linalg.pinv(GAUSS_N).T, r @ np.linalg.pinv(GAUSS_N).T, mat, 1.0)
    assert np.allclose((E(phi + h, rho) - E(phi - h, rho)) / (2 * h), dphi, rtol=1e-5, atol=1e-5)
    assert np.allclose((E(phi, rho + h) - E(phi, rho - h)) / (2 * h), drho, rtol=1e-5, atol=1e-5)


def test_bar_patch():
    g, bc = bar()
    n = g.node_count
    sol = assemble_and_solve(g, np.full(n, 1.0), np.ones(n), MAT, bc, eps=g.h)
    x = g.coords[:, 0]
    right = x > g.width - 1e-12
    expected = 7.0 * g.width / MAT.E0
    assert np.max(np.abs(sol.u[2 * np.flatnonzero(right)] - expected)) <= 1e-8 * expected
    assert float(sol.f @ sol.u) == pytest.approx(2 * sol.strain_energy, rel=1e-8)


def test_bar_stress_patch():
    g, bc = bar(12, 6)
    n = g.node_count
    sol = assemble_and_solve(g, np.full(n, 1.0), np.ones(n), MAT, bc, eps=g.h)
    vm, tau = von_mises_and_smooth(sol, g, MAT.nu)
    assert np.allclose(vm, 7.0, rtol=1e-8)
    assert np.allclose(tau, 7.0, rtol=1e-6)


def test_zero_traction():
    g, bc = bar(T=0.0)
    n = g.node_count
    sol = assemble_and_solve(g, np.ones(n), np.ones(n), MAT, bc)
    assert not np.any(sol.u) and sol.strain_energy == 0.0


def test_example1_fixture_solve():
    fx = ex1_fixture()
    g = fx.grid
    n = g.node_count
    sol = assemble_and_solve(g, np.full(n, 0.625), np.full(n, 0.4), fx.material, fx.bc)
    assert sol.strain_energy > 0 and sol.residual_norm <= 1e-9
    assert float(sol.f @ sol.u) == pytest.approx(2 * sol.strain_energy, rel=1e-8)
    K = sol.K
    assert abs(K - K.T).max() <= 1e-9 * abs(K).max()


def test_compliance_identity_random_design():
    fx = ex1_fixture(30, 20, 2.0)
    g = fx.grid
    rng = np.random.default_rng(7)
    phi = rng.uniform(-2, 2, g.node_count)
    sol = assemble_and_solve(g, phi, rng.uniform(0, 1, g.node_count), fx.material, fx.bc)
    assert float(sol.f @ sol.u) == pytest.approx(2 * sol.strain_energy, rel=1e-8)


def test_bar_refinement_converges():
    # a tapered bar: coarse grids are stiffer than the limit
    errs = []
    ref = None
    for nx in (32, 16, 8):
        g, bc = bar(nx, nx // 4, 4.0 / nx)
        x, y = g.coords.T
        phi = 0.9 - y + 0.1 * x
        sol = assemble_and_solve(g, phi, np.ones(g.node_count), MAT, bc, eps=g.h)
        tip = sol.u[2 * (g.node_count - 1)]
        if ref is None:
            ref = tip
        else:
            errs.append(abs(tip - ref))
    assert errs[0] < errs[1]


def test_mass_examples():
    g = build_grid(40, 20, 0.5)
    n = g.node_count
    assert mass(g, np.full(n, 2 * g.h), np.ones(n), MAT) == pytest.approx(g.area, rel=1e-12)
    assert mass(g, np.full(n, -2 * g.h), np.ones(n), MAT) == 0.0
    x = g.coords[:, 0]
    half = mass(g, g.width / 2 - x, np.ones(n), MAT)
    assert half == pytest.approx(g.area / 2, rel=0.02)


def test_mass_gradient_fd():
    g = build_grid(8, 6, 1.0)
    rng = np.random.default_rng(2)
    phi = rng.uniform(-1, 1, g.node_count)
    rho = rng.uniform(0, 1, g.node_count)
    _, dphi, drho = mass(g, phi, rho, MAT, return_grad=True)
    for k in range(0, g.node_count, 5):
        d = np.zeros(g.node_count)
        d[k] = 1e-6
        assert (mass(g, phi + d, rho, MAT) - mass(g, phi - d, rho, MAT)) / 2e-6 == pytest.approx(dphi[k], abs=1e-8)
        assert (mass(g, phi, rho + d, MAT) - mass(g, phi, rho - d, MAT)) / 2e-6 == pytest.approx(drho[k], abs=1e-8)


def test_von_mises_identities():
    assert von_mises(np.array([3.0, 0.0, 0.0])) == pytest.approx(3.0)
    assert von_mises(np.array([-3.0, 0.0, 0.0])) == pytest.approx(3.0)
    assert von_mises(np.array([0.0, 0.0, 2.0])) == pytest.approx(2.0 * math.sqrt(3.0))


def test_components_examples():
    g = build_grid(10, 6, 1.0)
    x, y = g.coords.T
    support = g.nodes_where(lambda x, y: (x < 1e-9) & (y < 1e-9))
    labels, floating = connected_components(g, np.full(g.node_count, 1.0), support)
    assert labels.max() == 1 and not floating
    # two blobs split by a void column; only the left one touches the support
    phi = np.where(np.abs(x - 5.0) < 1.5, -1.0, 1.0)
    labels, floating = connected_components(g, phi, support)
    assert labels.max() == 2 and len(floating) == 1


def test_components_union_find_oracle():
    g = build_grid(30, 30, 1.0)
    rng = np.random.default_rng(11)
    for trial in range(50):
        if trial % 2:
            phi = rng.normal(size=g.node_count)
        else:
            i, j = np.divmod(np.arange(g.node_count), g.nx + 1)
            phi = np.where((i + j) % 2 == 0, 1.0, -1.0) + 0.1 * rng.normal(size=g.node_count)
        labels, _ = connected_components(g, phi)
        solid = phi[g.elements].mean(axis=1) > 0
        mine = {frozenset(np.flatnonzero(labels == k).tolist()) for k in range(1, labels.max() + 1)}
        assert mine == uf_partition(g, solid)

        voids = uf_partition(g, ~solid)
        open_rim = set(range(g.nx)) | set(range(g.element_count - g.nx, g.element_count))
        open_rim |= set(range(0, g.element_count, g.nx))  # bottom, top, left
        rim = open_rim | set(range(g.nx - 1, g.element_count, g.nx))
        assert void_components(g, phi, interior_only=False) == len(voids)
        assert void_components(g, phi) == sum(1 for v in voids if not v & rim)
        assert void_components(g, phi, mirror_sides=("right",)) == sum(
            1 for v in voids if not v & open_rim)


def test_void_components_bad_side():
    g = build_grid(4, 4, 1.0)
    with pytest.raises(ValueError):
        void_components(g, np.ones(g.node_count), mirror_sides=("front",))


def test_floating_component_gets_springs():
    fx = ex1_fixture(20, 14, 3.0)
    g = fx.grid
    x, y = g.coords.T
    # an island detached from the clamp and the load band
    phi = np.where((np.abs(x - 30) < 8) & (np.abs(y - 18) < 6), 1.0, -1.0)
    phi[fx.passive] = 1.0
    sol = assemble_and_solve(g, phi, np.ones(g.node_count), fx.material, fx.bc)
    assert sol.floating and sol.spring_nodes.size > 0
    assert np.all(np.isfinite(sol.u))


def test_gauss_interp_constant():
    g = build_grid(3, 3, 1.0)
    assert np.allclose(gauss_interp(g, np.full(g.node_count, 2.5)), 2.5)
