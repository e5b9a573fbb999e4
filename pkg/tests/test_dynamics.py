import numpy as np
import pytest

from quadnls import spectral_core as sc
from quadnls import dynamics as dyn
from quadnls.errors import BoundaryDecayError, InsufficientGrowth, NonFinite
from quadnls.functionals import FieldPair, PhysicalParams, mass, energy

P = PhysicalParams(0.5)
G1 = sc.Grid(1, 256, 32.0)


def data(g=G1, a=0.5, b=0.25, w2=8.0):
    q = g.r ** 2 if isinstance(g, sc.RadialGrid) else g.rsq
    e = np.exp(-q / w2)
    return FieldPair(a * e.astype(complex), b * e.astype(complex), g)


def run_to(fp, t, dt, scheme):
    n = int(round(t / dt))
    for _ in range(n):
        fp = dyn.step(fp, dt, P, scheme)
    return fp


def _err(a, b):
    return np.sqrt(sc.norm_sq(a.u - b.u, a.grid) + sc.norm_sq(a.v - b.v, a.grid))


def test_config_validation():
    with pytest.raises(ValueError):
        dyn.EvolveConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        dyn.EvolveConfig(dt=0.1, t_end=1.0, scheme="euler")
    with pytest.raises(ValueError):
        dyn.EvolveConfig(dt=0.1, t_end=1.0, nonlinear="rk2")
    with pytest.raises(ValueError):
        dyn.EvolveConfig(dt=1e-10, t_end=1.0)


@pytest.mark.parametrize("scheme,order", [("strang", 2), ("yoshida4", 4)])
def test_convergence_order(scheme, order):
    fp = data(a=1.5, b=1.0, w2=2.0)
    ref = run_to(fp, 0.5, 0.5 / 512, "yoshida4")
    e1 = _err(run_to(fp, 0.5, 0.5 / 16, scheme), ref)
    e2 = _err(run_to(fp, 0.5, 0.5 / 32, scheme), ref)
    assert np.log2(e1 / e2) == pytest.approx(order, abs=0.4)


def test_substeps_preserve_mass():
    fp = data(a=2.0, b=1.0)
    m0 = mass(fp)
    assert mass(dyn.kinetic_substep(fp, 0.1, P)) == pytest.approx(m0, rel=1e-13)
    assert mass(dyn.nonlinear_substep(fp, 0.05, "midpoint")) == pytest.approx(m0, rel=1e-13)
    assert mass(dyn.nonlinear_substep(fp, 0.05, "rk4")) == pytest.approx(m0, rel=1e-6)
    rg = sc.RadialGrid(4, 256, 10.0)
    rfp = data(rg, 1.0, 1.0, 2.0)
    assert mass(dyn.kinetic_substep(rfp, 0.1, P)) == pytest.approx(mass(rfp), rel=1e-13)


def test_reversible():
    fp = data(a=1.0, b=0.7, w2=2.0)
    back = dyn.step(dyn.step(fp, 1e-3, P), -1e-3, P)
    assert np.abs(back.u - fp.u).max() < 1e-11
    back = dyn.step(dyn.step(fp, 1e-3, P, nonlinear="midpoint"), -1e-3, P, nonlinear="midpoint")
    assert np.abs(back.u - fp.u).max() < 1e-13


def test_evolve_conserves_and_is_deterministic():
    cfg = dyn.EvolveConfig(dt=1e-2, t_end=1.0, diag_stride=10)
    f1, d1, s1 = dyn.evolve(data(), P, cfg)
    f2, d2, s2 = dyn.evolve(data(), P, cfg)
    assert s1.kind == "Completed" and s1.steps == 100
    assert [r.K for r in d1] == [r.K for r in d2]
    assert np.array_equal(f1.u, f2.u)
    assert max(abs(r.M - d1[0].M) for r in d1) / d1[0].M < 1e-10
    assert len(d1) == 11


def test_callbacks_receive_copies():
    seen = []

    def cb(t, fp, rec):
        fp.u[:] = 0
        seen.append((t, rec.M))

    _, diags, _ = dyn.evolve(data(), P, dyn.EvolveConfig(dt=1e-2, t_end=0.1, diag_stride=5), callbacks=[cb])
    assert len(seen) == len(diags) == 3
    assert diags[-1].M == pytest.approx(diags[0].M, rel=1e-10)


def test_boundary_check():
    g = sc.Grid(1, 64, 8.0)
    with pytest.raises(BoundaryDecayError):
        dyn.evolve(data(g, 1.0, 1.0, 50.0), P, dyn.EvolveConfig(dt=1e-2, t_end=0.1))
    cfg = dyn.EvolveConfig(dt=1e-2, t_end=0.1, check_boundary=False)
    assert dyn.evolve(data(g, 1.0, 1.0, 50.0), P, cfg)[2].kind == "Completed"


def test_nonfinite_reports_last_record():
    g = sc.Grid(1, 128, 20.0)
    with pytest.raises(NonFinite) as exc:
        dyn.evolve(data(g, 1e60, 1e60, 1.0), P, dyn.EvolveConfig(dt=1.0, t_end=50.0))
    assert exc.value.last_record.t == 0.0


def test_radial_blowup_flag_and_step_floor():
    from quadnls.blowup import negative_energy_seed
    rg = sc.RadialGrid(4, 1024, 12.0)
    seed = negative_energy_seed(rg, P, 0.1)
    _, _, st = dyn.evolve(seed, P, dyn.EvolveConfig(dt=2e-3, t_end=5.0, blowup_K_factor=50))
    assert st.kind == "BlowupDetected"
    assert st.t < 5.0
    _, _, st = dyn.evolve(seed, P, dyn.EvolveConfig(dt=2e-3, t_end=5.0, dt_floor=1.5e-3, blowup_K_factor=1e9))
    assert st.kind == "StepFloorReached"


def _synthetic(T=1.0, p=-2.0, n=400, tmax=0.995):
    t = np.linspace(0, tmax, n)
    return [dyn.DiagnosticsRecord(t=x, M=1.0, E=0.0, K=3.0 * (T - x) ** p + 0.5, P=0.0) for x in t]


def test_blowup_detect_recovers_rate():
    T, slope = dyn.blowup_detect(_synthetic())
    assert T == pytest.approx(1.0, abs=5e-3)
    assert slope == pytest.approx(-2.0, abs=0.05)
    assert dyn.blowup_detect(_synthetic(tmax=0.5)) is None
    with pytest.raises(InsufficientGrowth):
        dyn.blowup_detect(_synthetic(n=10))


def test_stability_experiment_small():
    from quadnls.ground_state import minimize_J, SolverOptions
    g = sc.Grid(1, 256, 64.0)
    gs = minimize_J(4.0, g, P, SolverOptions(tol_residual=1e-11))
    cfg = dyn.EvolveConfig(dt=2e-3, t_end=1.0, diag_stride=50)
    r0 = dyn.stability_experiment(gs, 0.0, cfg, P)
    assert r0.max_distance < 1e-6
    r1 = dyn.stability_experiment(gs, 1e-3, cfg, P)
    assert r1.initial_distance == pytest.approx(1e-3, rel=0.2)
    assert r1.max_distance < 10 * r1.initial_distance
