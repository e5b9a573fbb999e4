import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadnls import spectral_core as sc
from quadnls.errors import GridError


def test_grid_rejects_bad_sizes():
    with pytest.raises(GridError):
        sc.Grid(1, 100, 10.0)
    with pytest.raises(GridError):
        sc.Grid(4, 16, 10.0)
    with pytest.raises(GridError):
        sc.Grid(1, 4, 10.0)
    with pytest.raises(GridError):
        sc.RadialGrid(5, 64, 10.0)
    with pytest.raises(GridError):
        sc.RadialGrid(4, 64, -1.0)


def test_grid_geometry():
    g = sc.Grid(2, 64, 8.0)
    assert g.shape == (64, 64)
    assert g.h == pytest.approx(0.125)
    assert g.x1[0] == -4.0
    assert g.volume == pytest.approx(64.0)
    assert g.dealias_mask.sum() < g.dealias_mask.size
    rg = sc.RadialGrid(4, 16, 2.0)
    assert np.allclose(rg.r, (np.arange(16) + 0.5) / 8)
    assert rg.sigma == pytest.approx(2 * math.pi ** 2)
    assert rg.G.shape == (17, 16)


def test_sphere_area():
    assert sc.sphere_area(1) == pytest.approx(2.0)
    assert sc.sphere_area(2) == pytest.approx(2 * math.pi)
    assert sc.sphere_area(3) == pytest.approx(4 * math.pi)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_periodic_gaussian_integrals(d):
    g = sc.Grid(d, 64 if d < 3 else 32, 16.0)
    f = np.exp(-g.rsq)
    assert sc.integrate(f, g) == pytest.approx(math.pi ** (d / 2), rel=1e-12)
    # |grad e^{-x^2/2}|^2 = |x|^2 e^{-|x|^2}, integral d/2 pi^{d/2}
    h = np.exp(-g.rsq / 2)
    assert sc.grad_norm_sq(h, g) == pytest.approx(0.5 * d * math.pi ** (d / 2), rel=1e-11)
    assert sc.grad_norm_sq(h.astype(complex), g) == pytest.approx(sc.grad_norm_sq(h, g), rel=1e-13)


def test_periodic_laplacian_exact_on_gaussian():
    g = sc.Grid(2, 128, 20.0)
    f = np.exp(-g.rsq)
    want = (4 * g.rsq - 4) * f
    assert np.abs(sc.laplacian(f, g) - want).max() < 1e-10
    assert np.abs(sc.laplacian(f.astype(complex), g) - want).max() < 1e-10


def test_radial_quadrature_d4():
    rg = sc.RadialGrid(4, 4096, 12.0)
    f = np.exp(-rg.r ** 2)
    assert sc.integrate(f, rg) == pytest.approx(math.pi ** 2, rel=1e-10)
    assert sc.integrate(rg.r ** 2 * f, rg) == pytest.approx(2 * math.pi ** 2, rel=1e-10)


def test_radial_dirichlet_form_fourth_order():
    # int |grad e^{-r^2}|^2 d^4x = pi^2
    errs = []
    for nr in (256, 512):
        rg = sc.RadialGrid(4, nr, 8.0)
        errs.append(abs(sc.grad_norm_sq(np.exp(-rg.r ** 2), rg) - math.pi ** 2))
    assert errs[0] / errs[1] > 14
    assert errs[1] < 1e-7


def test_radial_operator_fourth_order_away_from_origin():
    errs = []
    for nr in (512, 1024):
        rg = sc.RadialGrid(4, nr, 8.0)
        f = np.exp(-rg.r ** 2)
        e = sc.radial_laplacian(f, rg) - (4 * rg.r ** 2 - 8) * f
        errs.append(np.abs(e[rg.r > 1]).max())
    assert errs[0] / errs[1] > 13


def test_radial_operator_symmetric_and_dirichlet_form():
    rg = sc.RadialGrid(3, 128, 6.0)
    W = np.diag(rg.weights)
    S = W @ rg.L.toarray()
    assert np.abs(S - S.T).max() < 1e-12 * np.abs(S).max()
    f = np.exp(-rg.r ** 2) * (1 + rg.r)
    assert -np.real(sc.inner(sc.radial_laplacian(f, rg), f, rg)) == pytest.approx(sc.grad_norm_sq(f, rg), rel=1e-12)


def test_cayley_is_unitary():
    rg = sc.RadialGrid(4, 512, 10.0)
    f = np.exp(-rg.r ** 2) * np.exp(1j * rg.r)
    out = f
    for _ in range(20):
        out = sc.cayley(out, rg, 0.01)
    assert sc.norm_sq(out, rg) == pytest.approx(sc.norm_sq(f, rg), rel=1e-13)
    assert np.array_equal(sc.cayley(f, rg, 0.0), f)


@pytest.mark.parametrize("grid", [sc.Grid(1, 128, 20.0), sc.RadialGrid(4, 256, 10.0)])
def test_resolvent_inverts(grid):
    f = np.exp(-(grid.r ** 2 if isinstance(grid, sc.RadialGrid) else grid.rsq))
    w = sc.resolvent(f, grid, 2.0, 0.5)
    back = 2.0 * w - 0.5 * sc.laplacian(w, grid)
    assert np.abs(back - f).max() < 1e-11
    wc = sc.resolvent(f * (1 + 1j), grid, 2.0, 0.5)
    assert np.abs(wc - (1 + 1j) * w).max() < 1e-12


def test_spectral_radial_laplacian():
    rg = sc.RadialGrid(4, 512, 12.0)
    f = np.exp(-rg.r ** 2)
    assert np.abs(sc.spectral_radial_laplacian(f, rg) - (4 * rg.r ** 2 - 8) * f).max() < 1e-9


def test_translate():
    g = sc.Grid(1, 128, 16.0)
    f = np.exp(-g.rsq)
    assert np.abs(sc.translate(f, 4 * g.h, g) - np.roll(f, 4)).max() < 1e-13
    y = 0.3172
    assert np.abs(sc.translate(f, y, g) - np.exp(-(g.x1 - y) ** 2)).max() < 1e-12


def test_dealias_removes_high_modes():
    g = sc.Grid(1, 64, 2 * math.pi)
    f = np.cos(30 * g.x1) + np.cos(3 * g.x1)
    assert np.abs(sc.dealias(f, g) - np.cos(3 * g.x1)).max() < 1e-13


def test_boundary_decay():
    g = sc.Grid(1, 64, 40.0)
    assert sc.boundary_decay(np.exp(-g.rsq), g) < 1e-100
    assert sc.boundary_decay(np.ones(64), g) == 1.0
    assert sc.boundary_decay(np.zeros(64), g) == 0.0


def test_threads(monkeypatch):
    sc.set_threads(None)
    monkeypatch.setenv("QUADNLS_THREADS", "3")
    assert sc.get_threads() == 3
    monkeypatch.setenv("QUADNLS_THREADS", "junk")
    assert sc.get_threads() == 1
    sc.set_threads(2)
    assert sc.get_threads() == 2
    sc.set_threads(None)


def test_check_on_shape():
    g = sc.Grid(1, 16, 1.0)
    with pytest.raises(GridError):
        sc.check_on(np.zeros(8), g)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10))
def test_laplacian_linear(a, b, seed):
    g = sc.Grid(1, 64, 10.0)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(64)
    h = rng.standard_normal(64)
    lhs = sc.laplacian(a * f + b * h, g)
    rhs = a * sc.laplacian(f, g) + b * sc.laplacian(h, g)
    assert np.abs(lhs - rhs).max() <= 1e-10 * (1 + np.abs(rhs).max())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000))
def test_inner_hermitian(seed):
    rg = sc.RadialGrid(2, 32, 3.0)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    h = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    assert sc.inner(f, h, rg) == pytest.approx(np.conj(sc.inner(h, f, rg)), rel=1e-13, abs=1e-13)
