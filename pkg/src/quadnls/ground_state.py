"""Constrained ground states, the stationary elliptic system and the sharp GN constant.

Gradient flows
--------------
Both I(a, b) and J(c) are computed with a multiplier-shifted semi-implicit flow

    u <- (1 + tau*s1 - tau*Lap)^{-1} (u + tau*(2 v conj(u) - (w1 - s1) u))

(and the analogue for v), followed by rescaling onto the constraint set. The
multipliers w1, w2 are re-estimated every step, s = max(w, 0), so a fixed point
of the step is an exact discrete solution of the elliptic system and the
rescaling factor tends to one. A step that raises the energy is rejected and
tau halved.

For J(c) the v-update uses metric weight 2 (the weight of |v|^2 in M) so the
single multiplier w = (3P - K)/M drives both components.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from . import spectral_core as sc
from .errors import (NoDescent, NotConverged, PositiveEnergy, ZeroMassComponent,
                     NegativeInteraction, GridError, KappaMismatch)
from .functionals import (FieldPair, PhysicalParams, FunctionalReport, energy, interaction,
                          mass, weinstein)


@dataclass(frozen=True)
class TwoMass:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("TwoMass constraint needs a > 0 and b > 0")


@dataclass(frozen=True)
class TotalMass:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("TotalMass constraint needs c > 0")


ConstraintSpec = Union[TwoMass, TotalMass]


@dataclass
class SolverOptions:
    tau: float = 1.0
    tau_max: float = 50.0
    tau_min: float = 1e-10
    tol_energy: float = 1e-12
    tol_residual: float = 1e-8
    max_iter: int = 50000
    width: float = 1.0
    raise_on_fail: bool = True


@dataclass
class GroundStateResult:
    fields: FieldPair
    omega1: float
    omega2: float
    energy_value: float
    functionals: FunctionalReport
    residual_inf: float
    pohozaev_defects: tuple
    iterations: int
    constraint: object = None
    omega: Optional[float] = None
    converged: bool = True


@dataclass
class GNReport:
    M_gs: float
    C_opt: float
    ground_pair: FieldPair
    J_value: float = float("nan")
    residual_inf: float = float("nan")
    seed_masses: tuple = ()
    info: dict = field(default_factory=dict)


# ----------------------------------------------------------------- helpers

def _gaussian(g, width):
    if isinstance(g, sc.RadialGrid):
        r2 = g.r ** 2
    else:
        r2 = g.rsq
    return np.exp(-r2 / (2 * width ** 2))


def _norm2(f, g):
    return sc.integrate(np.abs(f) ** 2, g)


def extract_multipliers(fp: FieldPair, params: PhysicalParams):
    g = fp.grid
    nu, nv = _norm2(fp.u, g), _norm2(fp.v, g)
    if nu == 0 or nv == 0:
        raise ZeroMassComponent("a component has zero mass; multipliers undefined")
    P = interaction(fp)
    w1 = (2 * P - sc.grad_norm_sq(fp.u, g)) / nu
    w2 = (P - params.kappa * sc.grad_norm_sq(fp.v, g)) / nv
    return float(w1), float(w2)


def elliptic_residual(fp: FieldPair, omega1, omega2, params, which="strong"):
    """Sup norm of the residual of -Lap u + w1 u = 2 v conj(u), -k Lap v + w2 v = u^2.

    which="strong": the residual itself. which="preconditioned": the fixed-point
    defect |u - (w1 - Lap)^{-1}(2 v conj u)|, |v - (w2 - k Lap)^{-1} u^2|.
    """
    g, u, v, k = fp.grid, fp.u, fp.v, params.kappa
    nl_u, nl_v = 2 * v * np.conj(u), u * u
    if which == "strong":
        ru = -sc.laplacian(u, g) + omega1 * u - nl_u
        rv = -k * sc.laplacian(v, g) + omega2 * v - nl_v
    else:
        ru = u - sc.resolvent(nl_u, g, omega1, 1.0)
        rv = v - sc.resolvent(nl_v, g, omega2, k)
    return float(max(np.abs(ru).max(), np.abs(rv).max()))


def pohozaev_report(fp: FieldPair, omega: float, params: PhysicalParams, d: Optional[int] = None,
                    omega2: Optional[float] = None):
    """Relative defects of K + N = 3P, K = d S, N = (6 - d) S.

    N = w1 |u|^2 + w2 |v|^2 and S = K/2 - P + N/2; a single omega means
    (w1, w2) = (omega, 2 omega), where N = omega M.
    """
    d = fp.grid.d if d is None else d
    r = energy(fp, params)
    w2 = 2 * omega if omega2 is None else omega2
    g = fp.grid
    wM = omega * sc.norm_sq(fp.u, g) + w2 * sc.norm_sq(fp.v, g)
    S = r.E + 0.5 * wM
    K, P = r.K, r.P
    scale = max(abs(K), abs(wM), abs(P), abs(S))
    if scale == 0:
        return (0.0, 0.0, 0.0)
    return (abs(K + wM - 3 * P) / scale, abs(K - d * S) / scale, abs(wM - (6 - d) * S) / scale)


def _refuse_d4(g):
    if g.d >= 4:
        raise GridError("constrained minimisation is only defined for d <= 3; use solve_elliptic for d = 4")


# ----------------------------------------------------------------- flows

def _flow(g, params, opts, u, v, project, multipliers):
    k = params.kappa
    u, v = project(u, v)
    fp = FieldPair(u, v, g)
    E = energy(fp, params).E
    tau = opts.tau
    it = 0
    res = np.inf
    for it in range(1, opts.max_iter + 1):
        w1, w2, wv = multipliers(fp)
        s1, s2 = max(w1, 0.0), max(w2, 0.0)
        while True:
            nu = sc.resolvent(u + tau * (2 * v * np.conj(u) - (w1 - s1) * u), g, 1 + tau * s1, tau)
            # wv is the weight of the v-equation in the flow metric (2 for J, 1 for I)
            a = tau / wv
            nv = sc.resolvent(v + a * (u * u - (w2 - s2) * v), g, 1 + a * s2, a * k)
            nu, nv = project(nu, nv)
            nfp = FieldPair(nu, nv, g)
            rep = energy(nfp, params)
            if rep.E <= E + 1e-14 * (abs(E) + rep.K):
                break
            tau *= 0.5
            if tau < opts.tau_min:
                raise NoDescent(f"step size underflow at iteration {it}")
        dE = E - rep.E
        u, v, fp, E = nu, nv, nfp, rep.E
        tau = min(tau * 1.5, opts.tau_max)
        if dE < opts.tol_energy:
            w1, w2, _ = multipliers(fp)
            res = elliptic_residual(fp, w1, w2, params)
            if res < opts.tol_residual:
                return fp, it, res, True
    w1, w2, _ = multipliers(fp)
    return fp, it, elliptic_residual(fp, w1, w2, params), False


def _finish(fp, params, it, res, ok, constraint, opts, omega=None):
    w1, w2 = extract_multipliers(fp, params)
    rep = energy(fp, params)
    om, om2 = (omega, None) if omega is not None else (w1, w2)
    res_obj = GroundStateResult(fields=fp, omega1=w1, omega2=w2, energy_value=rep.E,
                                functionals=rep, residual_inf=res,
                                pohozaev_defects=pohozaev_report(fp, om, params, omega2=om2),
                                iterations=it, constraint=constraint, omega=omega, converged=ok)
    if not ok and opts.raise_on_fail:
        raise NotConverged(f"not converged after {it} iterations (residual {res:.3e})", res_obj)
    if rep.E >= 0:
        raise PositiveEnergy(f"minimum energy {rep.E!r} is not negative; enlarge the box or refine the grid")
    return res_obj


def minimize_I(a: float, b: float, grid, params: PhysicalParams, opts: Optional[SolverOptions] = None):
    opts = opts or SolverOptions()
    _refuse_d4(grid)
    cons = TwoMass(a, b)
    G0 = _gaussian(grid, opts.width)

    def project(u, v):
        return u * math.sqrt(a / _norm2(u, grid)), v * math.sqrt(b / _norm2(v, grid))

    def mult(fp):
        w1, w2 = extract_multipliers(fp, params)
        return w1, w2, 1.0

    fp, it, res, ok = _flow(grid, params, opts, G0.copy(), G0.copy(), project, mult)
    return _finish(fp, params, it, res, ok, cons, opts)


def minimize_J(c: float, grid, params: PhysicalParams, opts: Optional[SolverOptions] = None):
    opts = opts or SolverOptions()
    _refuse_d4(grid)
    cons = TotalMass(c)
    G0 = _gaussian(grid, opts.width)

    def project(u, v):
        s = math.sqrt(c / (_norm2(u, grid) + 2 * _norm2(v, grid)))
        return s * u, s * v

    def mult(fp):
        rep = energy(fp, params)
        w = (3 * rep.P - rep.K) / rep.M
        return w, 2 * w, 2.0

    fp, it, res, ok = _flow(grid, params, opts, G0.copy(), G0.copy(), project, mult)
    rep = energy(fp, params)
    omega = (3 * rep.P - rep.K) / rep.M
    return _finish(fp, params, it, res, ok, cons, opts, omega=omega)


def split_sweep(c, grid, params, a_fracs=tuple(np.arange(1, 10) / 10), opts=None, workers=None):
    """I(a, (c - a)/2) over a = frac * c."""
    def one(fr):
        a = fr * c
        return a, minimize_I(a, (c - a) / 2, grid, params, opts).energy_value
    return _map(one, a_fracs, workers)


def split_minimum(c, grid, params, opts=None, xatol=1e-5, workers=None):
    """min over a of I(a, (c - a)/2): coarse sweep, then bounded Brent around the best point.

    Returns (a_star, I_min, sweep)."""
    sweep = split_sweep(c, grid, params, opts=opts, workers=workers)
    j = int(np.argmin([v for _, v in sweep]))
    lo = sweep[j - 1][0] if j > 0 else 0.5 * sweep[0][0]
    hi = sweep[j + 1][0] if j + 1 < len(sweep) else 0.5 * (sweep[-1][0] + c)
    res = minimize_scalar(lambda a: minimize_I(a, (c - a) / 2, grid, params, opts).energy_value,
                          bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    return float(res.x), float(res.fun), sweep


def _map(fn, items, workers):
    workers = workers or sc.get_threads()
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def subadditivity_scan(pairs, grid, params, opts=None, workers=None):
    """Gap I(a1+a2, b1+b2) - (I(a1,b1) + I(a2,b2)) for each ((a1,b1),(a2,b2)) in pairs."""
    pairs = [(tuple(map(float, p1)), tuple(map(float, p2))) for p1, p2 in pairs]
    for p1, p2 in pairs:
        for a, b in (p1, p2):
            if a <= 0 or b <= 0:
                raise ValueError(f"subadditivity scan needs positive masses, got ({a}, {b})")
    need = set()
    for p1, p2 in pairs:
        need.update([p1, p2, (p1[0] + p2[0], p1[1] + p2[1])])
    need = sorted(need)
    vals = dict(zip(need, _map(lambda p: minimize_I(p[0], p[1], grid, params, opts).energy_value,
                                need, workers)))
    rows = []
    for p1, p2 in pairs:
        s = (p1[0] + p2[0], p1[1] + p2[1])
        rows.append(dict(p1=p1, p2=p2, I1=vals[p1], I2=vals[p2], I12=vals[s],
                         gap=vals[s] - (vals[p1] + vals[p2])))
    return rows


# ----------------------------------------------------------------- elliptic system

def solve_elliptic(omega1: float, omega2: float, params: PhysicalParams, rgrid, tol: float = 1e-11,
                   max_iter: int = 2000, width: float = 1.0, return_info: bool = False):
    """Real positive solution of -Lap u + w1 u = 2 v u, -k Lap v + w2 v = u^2.

    Petviashvili iteration with one stabilising factor per equation,
    s1 = <(w1 - Lap) u, u> / (2P), s2 = <(w2 - k Lap) v, v> / P, and update
    u <- s1^{3/2} s2^{1/2} (w1 - Lap)^{-1}(2 v u), v <- s1 s2 (w2 - k Lap)^{-1}(u^2).
    Both factors equal one at a solution.
    """
    if not (omega1 > 0 and omega2 > 0):
        raise ValueError("solve_elliptic needs omega1, omega2 > 0")
    g, k = rgrid, params.kappa
    G0 = _gaussian(g, width)
    u, v = 3.0 * G0, 2.0 * G0
    res, s1, s2 = np.inf, np.nan, np.nan
    history = []
    for it in range(1, max_iter + 1):
        P = float(sc.integrate(v * u * u, g))
        if not P > 0:
            raise NegativeInteraction(f"P <= 0 at iteration {it}; restart from another seed")
        Au = omega1 * _norm2(u, g) + sc.grad_norm_sq(u, g)
        Av = omega2 * _norm2(v, g) + k * sc.grad_norm_sq(v, g)
        s1, s2 = Au / (2 * P), Av / P
        Tu = sc.resolvent(2 * v * u, g, omega1, 1.0)
        Tv = sc.resolvent(u * u, g, omega2, k)
        res = max(np.abs(u - Tu).max(), np.abs(v - Tv).max())
        history.append(res)
        if res < tol and abs(s1 - 1) < tol and abs(s2 - 1) < tol:
            break
        u, v = s1 ** 1.5 * s2 ** 0.5 * Tu, s1 * s2 * Tv
    else:
        raise NotConverged(f"Petviashvili did not converge in {max_iter} iterations (residual {res:.3e})")
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    fp = FieldPair(u, v, g)
    if return_info:
        s_common = (Au + Av) / (3 * P)
        info = dict(iterations=it, residual=res, s1=s1, s2=s2, s_common=s_common,
                    strong_residual=elliptic_residual(fp, omega1, omega2, params, "strong"))
        return fp, info
    return fp


def gn_constant(rgrid, params: PhysicalParams, seeds=(1.0,), tol: float = 1e-11):
    """M_gs and C_opt = 1/(2 sqrt(M_gs)) from the d = 4, kappa = 1/2 elliptic system with w = 1."""
    if not isinstance(rgrid, sc.RadialGrid) or rgrid.d != 4:
        raise GridError("gn_constant needs a d = 4 RadialGrid")
    if abs(params.kappa - 0.5) > 1e-15:
        raise KappaMismatch(f"gn_constant needs kappa = 1/2, got {params.kappa}")
    fp, info = solve_elliptic(1.0, 2.0, params, rgrid, tol=tol, width=seeds[0], return_info=True)
    M_gs = mass(fp)
    masses = [M_gs]
    for w in seeds[1:]:
        masses.append(mass(solve_elliptic(1.0, 2.0, params, rgrid, tol=tol, width=w)))
    return GNReport(M_gs=M_gs, C_opt=1.0 / (2.0 * math.sqrt(M_gs)), ground_pair=fp,
                    J_value=weinstein(fp, params), residual_inf=info["residual"],
                    seed_masses=tuple(masses), info=info)
