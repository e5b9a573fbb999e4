"""Split-step evolution of i u_t + Lap u = -2 v conj(u), i v_t + k Lap v = -u^2.

Linear part: exact Fourier propagator on tensor grids, Crank-Nicolson on radial
grids. Nonlinear part: the pointwise ODE u' = 2i v conj(u), v' = i u^2, by RK4
(or implicit midpoint, which keeps |u|^2 + 2|v|^2 exactly). Steps are composed
as Strang kin(dt/2) nl(dt) kin(dt/2) or as the symmetric 4th-order triple jump
of Strang steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import spectral_core as sc
from .errors import NonFinite, InsufficientGrowth, BoundaryDecayError, GridError
from .functionals import FieldPair, PhysicalParams, energy, mass_in_ball, modulated_distance, h1_norm_sq
from . import virial

SCHEMES = ("strang", "yoshida4")
_Y1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_Y0 = 1.0 - 2.0 * _Y1


@dataclass
class EvolveConfig:
    dt: float
    t_end: float
    scheme: str = "strang"
    diag_stride: int = 10
    blowup_K_factor: float = 1e4
    dt_floor: float = 1e-9
    adaptive: bool = True
    nonlinear: str = "rk4"
    track_variance: bool = True
    track_virial: bool = True
    ball_radius: Optional[float] = None
    boundary_tol: float = 1e-10
    check_boundary: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.nonlinear not in ("rk4", "midpoint"):
            raise ValueError("nonlinear must be 'rk4' or 'midpoint'")
        if self.diag_stride < 1:
            raise ValueError("diag_stride must be >= 1")
        if not self.dt_floor < self.dt:
            raise ValueError("dt_floor must be smaller than dt")


@dataclass
class DiagnosticsRecord:
    t: float
    M: float
    E: float
    K: float
    P: float
    variance: Optional[float] = None
    virial_first: Optional[float] = None
    ball_mass: Optional[float] = None
    dt: Optional[float] = None


CSV_COLUMNS = ("t", "M", "E", "K", "P", "variance", "virial_first", "ball_mass")


@dataclass
class EvolveStatus:
    kind: str                  # Completed | BlowupDetected | StepFloorReached
    t: float
    t_est: Optional[float] = None
    exponent: Optional[float] = None
    boundary_decay: Optional[float] = None
    steps: int = 0

    def __str__(self):
        if self.kind == "BlowupDetected":
            return f"BlowupDetected(t_est={self.t_est!r})"
        return f"{self.kind}(t={self.t!r})"


# ----------------------------------------------------------------- substeps

def _kin(u, v, g, dt, kappa):
    if dt == 0:
        return u, v
    if isinstance(g, sc.RadialGrid):
        return sc.cayley(u, g, 0.5 * dt), sc.cayley(v, g, 0.5 * kappa * dt)
    cache = sc._cached(g, "kin", dict)
    key = (dt, kappa)
    ph = cache.get(key)
    if ph is None:
        if len(cache) > 16:
            cache.clear()
        ph = cache[key] = (np.exp(-1j * g.ksq * dt), np.exp(-1j * kappa * g.ksq * dt))
    return sc.ifft(ph[0] * sc.fft(u, g), g), sc.ifft(ph[1] * sc.fft(v, g), g)


def _rhs(u, v):
    return 2j * v * np.conj(u), 1j * u * u


def _rk4(u, v, dt):
    a1, b1 = _rhs(u, v)
    a2, b2 = _rhs(u + 0.5 * dt * a1, v + 0.5 * dt * b1)
    a3, b3 = _rhs(u + 0.5 * dt * a2, v + 0.5 * dt * b2)
    a4, b4 = _rhs(u + dt * a3, v + dt * b3)
    return (u + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4),
            v + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4))


def _midpoint(u, v, dt, maxit=60):
    mu, mv = u, v
    for _ in range(maxit):
        a, b = _rhs(mu, mv)
        nu, nv = u + 0.5 * dt * a, v + 0.5 * dt * b
        err = max(np.abs(nu - mu).max(), np.abs(nv - mv).max())
        mu, mv = nu, nv
        if err <= 1e-15 * max(1.0, np.abs(mu).max(), np.abs(mv).max()):
            break
    return 2 * mu - u, 2 * mv - v


def kinetic_substep(fp: FieldPair, dt: float, params: PhysicalParams) -> FieldPair:
    u, v = _kin(fp.u.astype(complex), fp.v.astype(complex), fp.grid, dt, params.kappa)
    return FieldPair(u, v, fp.grid)


def nonlinear_substep(fp: FieldPair, dt: float, method: str = "rk4") -> FieldPair:
    g = fp.grid
    u, v = fp.u.astype(complex), fp.v.astype(complex)
    if dt != 0:
        u, v = (_rk4 if method == "rk4" else _midpoint)(u, v, dt)
        if not isinstance(g, sc.RadialGrid):
            u, v = sc.dealias(u, g), sc.dealias(v, g)
    return FieldPair(u, v, g)


def _strang(u, v, g, dt, kappa, nl):
    u, v = _kin(u, v, g, 0.5 * dt, kappa)
    u, v = (_rk4 if nl == "rk4" else _midpoint)(u, v, dt)
    if not isinstance(g, sc.RadialGrid):
        u, v = sc.dealias(u, g), sc.dealias(v, g)
    return _kin(u, v, g, 0.5 * dt, kappa)


def _step(u, v, g, dt, kappa, scheme, nl):
    if scheme == "strang":
        return _strang(u, v, g, dt, kappa, nl)
    u, v = _strang(u, v, g, _Y1 * dt, kappa, nl)
    u, v = _strang(u, v, g, _Y0 * dt, kappa, nl)
    return _strang(u, v, g, _Y1 * dt, kappa, nl)


def step(fp: FieldPair, dt: float, params: PhysicalParams, scheme: str = "strang",
         nonlinear: str = "rk4") -> FieldPair:
    """One composed step; step(., -dt) is its adjoint."""
    u, v = _step(fp.u.astype(complex), fp.v.astype(complex), fp.grid, dt, params.kappa, scheme, nonlinear)
    return FieldPair(u, v, fp.grid)


# ----------------------------------------------------------------- evolution

def record(fp: FieldPair, t: float, params: PhysicalParams, cfg: EvolveConfig, dt=None) -> DiagnosticsRecord:
    rep = energy(fp, params)
    var = virial.variance(fp) if cfg.track_variance else None
    vf = virial.virial_first(fp, None, params.kappa) if cfg.track_virial else None
    bm = mass_in_ball(fp, cfg.ball_radius) if cfg.ball_radius is not None else None
    return DiagnosticsRecord(t=t, M=rep.M, E=rep.E, K=rep.K, P=rep.P, variance=var,
                             virial_first=vf, ball_mass=bm, dt=dt)


def evolve(fp0: FieldPair, params: PhysicalParams, cfg: EvolveConfig,
           callbacks: Sequence[Callable] = ()):
    """Integrate to cfg.t_end. Returns (final FieldPair, list of DiagnosticsRecord, EvolveStatus).

    Every diagnostic record is passed to each callback as cb(t, fp, rec); the
    FieldPair handed over is a copy.
    """
    g = fp0.grid
    if g.d == 4 and not isinstance(g, sc.RadialGrid):
        raise GridError("d = 4 evolution is radial only")
    decay = max(sc.boundary_decay(fp0.u, g), sc.boundary_decay(fp0.v, g))
    if cfg.check_boundary and decay > cfg.boundary_tol:
        raise BoundaryDecayError(f"boundary decay {decay:.3e} exceeds {cfg.boundary_tol:.1e}; enlarge the domain")
    u, v = fp0.u.astype(complex), fp0.v.astype(complex)
    if not isinstance(g, sc.RadialGrid):
        u, v = sc.dealias(u, g), sc.dealias(v, g)
    t, dt, nstep = 0.0, cfg.dt, 0
    rec = record(FieldPair(u, v, g), t, params, cfg, dt)
    diags = [rec]
    for cb in callbacks:
        cb(t, FieldPair(u.copy(), v.copy(), g), rec)
    K0 = Kref = rec.K
    status = None
    tend = cfg.t_end
    while t < tend * (1 - 1e-15) and t < tend - 1e-300:
        h = min(dt, tend - t)
        with np.errstate(over="ignore", invalid="ignore"):     # overflow is reported as NonFinite below
            u, v = _step(u, v, g, h, params.kappa, cfg.scheme, cfg.nonlinear)
        t_new = t + h
        nstep += 1
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise NonFinite(f"non-finite field at t = {t_new!r}", t_last=t, last_record=diags[-1])
        t = t_new
        if nstep % cfg.diag_stride == 0 or t >= tend * (1 - 1e-15):
            fp = FieldPair(u, v, g)
            rec = record(fp, t, params, cfg, dt)
            diags.append(rec)
            for cb in callbacks:
                cb(t, FieldPair(u.copy(), v.copy(), g), rec)
            if rec.K > cfg.blowup_K_factor * K0:
                fit = _try_fit(diags)
                status = EvolveStatus("BlowupDetected", t, t_est=fit[0] if fit else t,
                                      exponent=fit[1] if fit else None)
                break
            if cfg.adaptive and rec.K > 2 * Kref:
                dt *= 0.5
                Kref = rec.K
                if dt < cfg.dt_floor:
                    status = EvolveStatus("StepFloorReached", t)
                    break
    if status is None:
        status = EvolveStatus("Completed", t)
    status.boundary_decay = decay
    status.steps = nstep
    return FieldPair(u, v, g), diags, status


def _try_fit(diags):
    try:
        return blowup_detect(diags, min_growth=10.0)
    except InsufficientGrowth:
        return None


def blowup_detect(diags: Sequence[DiagnosticsRecord], min_growth: float = 1e3,
                  min_records: int = 20, decades: float = 1.0):
    """Fit log K = c + p log(T - t) over the last `decades` of growth, T free.

    Returns None for runs whose K never grows by min_growth, else (T_est, p).
    """
    if len(diags) < min_records:
        raise InsufficientGrowth(f"need at least {min_records} diagnostic records, got {len(diags)}")
    t = np.array([d.t for d in diags], dtype=float)
    K = np.array([d.K for d in diags], dtype=float)
    if not K[-1] >= min_growth * K[0]:
        return None
    sel = K >= K[-1] / 10 ** decades
    # keep only the final contiguous stretch
    idx = np.nonzero(~sel)[0]
    start = idx[-1] + 1 if idx.size else 0
    tt, lk = t[start:], np.log(K[start:])
    if tt.size < 5:
        tt, lk = t[-5:], np.log(K[-5:])
    span = tt[-1] - tt[0]

    def sse(T):
        x = np.log(T - tt)
        A = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(A, lk, rcond=None)
        return float(np.sum((A @ coef - lk) ** 2)), coef

    lo, hi = tt[-1] + 1e-9 * max(span, 1e-300), tt[-1] + 20 * span
    # coarse log scan for a bracket, then bounded refinement
    grid = tt[-1] + np.geomspace(1e-6 * span, 20 * span, 200)
    vals = [sse(T)[0] for T in grid]
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)] if i > 0 else lo
    b = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda T: sse(T)[0], bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(b))})
    T = float(res.x)
    _, coef = sse(T)
    return T, float(coef[1])


# ----------------------------------------------------------------- stability

def default_bump(g, center=0.5):
    if isinstance(g, sc.RadialGrid):
        b = np.exp(-(g.r - center) ** 2)
    else:
        x = g.coords()
        b = np.exp(-sum((xx - center) ** 2 for xx in x))
    return b / math.sqrt(h1_norm_sq(b, g))


@dataclass
class StabilityResult:
    max_distance: float
    initial_distance: float
    times: list
    distances: list
    status: EvolveStatus = None

    def __float__(self):
        return self.max_distance


def stability_experiment(gs, eps: float, cfg: EvolveConfig, params: PhysicalParams,
                         bump=None, flip_sign: bool = False) -> StabilityResult:
    """Perturb u -> u + eps*bump (|bump|_H1 = 1), evolve, track the modulated distance to gs."""
    ref = gs.fields if hasattr(gs, "fields") else gs
    g = ref.grid
    if g.d > 3:
        raise GridError("stability experiments are for d <= 3")
    b = default_bump(g) if bump is None else bump
    u0 = (-ref.u if flip_sign else ref.u) + eps * b
    fp0 = FieldPair(u0.astype(complex), ref.v.astype(complex), g)
    times, dists = [], []

    def cb(t, fp, rec):
        times.append(t)
        dists.append(modulated_distance(fp, ref)[0])

    _, _, status = evolve(fp0, params, cfg, callbacks=[cb])
    return StabilityResult(max_distance=float(max(dists)), initial_distance=float(dists[0]),
                           times=times, distances=dists, status=status)
