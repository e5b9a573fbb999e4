"""d = 4 mass-resonant apparatus: pseudo-conformal family, cutoffs, Banica check, blow-up experiments.

Everything here assumes radial data on a ``RadialGrid`` with d = 4 and kappa = 1/2
unless stated otherwise.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.fft import dct
from scipy.optimize import brentq

from . import spectral_core as sc
from .errors import (TooCloseToBlowup, CannotAchieve, MassNotMinimal, KappaMismatch,
                     GridError, QuadNLSError)
from .functionals import FieldPair, PhysicalParams, energy, mass, mass_in_ball
from .ground_state import solve_elliptic, elliptic_residual
from .virial import (RadialProfile, quadratic_profile, virial_V, variance,   # noqa: F401
                     virial_first, virial_second_rhs, chi_values)
from . import dynamics as dyn

HALF = PhysicalParams(0.5)
PHASE_LIMIT = np.pi / 4
AMP_FLOOR = 1e-12


def _need_d4(g, what):
    if not isinstance(g, sc.RadialGrid) or g.d != 4:
        raise GridError(f"{what} needs a d = 4 RadialGrid")


def _need_half(params, what):
    if params is not None and abs(params.kappa - 0.5) > 1e-15:
        raise KappaMismatch(f"{what} needs kappa = 1/2, got {params.kappa}")


# ------------------------------------------------------------ ground profiles

def _cosine_laplacian(rg):
    """Dense Laplacian in the cosine basis on cell-centred nodes (even extension)."""
    N = rg.nr
    R = N * rg.dr
    k = np.pi * np.arange(N) / R
    A = dct(np.eye(N), type=2, axis=0) / N
    A[0] *= 0.5
    C = np.cos(np.outer(rg.r, k))
    S = np.sin(np.outer(rg.r, k))
    return (-C * k ** 2 - (rg.d - 1) / rg.r[:, None] * S * k) @ A


def spectral_refine(fp, omega1=1.0, omega2=2.0, params=HALF, tol=1e-11, max_iter=8):
    """Newton polish of an elliptic solution under the spectral (cosine) Laplacian.

    The finite-difference solution is accurate in every integral norm but its
    second derivative is off by O(1) at the first few nodes; analytic families
    built from it inherit that defect.  Dense, so keep nr <= 2048.
    """
    rg = fp.grid
    if not isinstance(rg, sc.RadialGrid):
        raise GridError("spectral_refine needs a RadialGrid")
    if rg.nr > 2048:
        raise GridError("spectral_refine is dense; use nr <= 2048")
    lap = _cosine_laplacian(rg)
    N = rg.nr
    I = np.eye(N)
    u, v = fp.u.real.copy(), fp.v.real.copy()
    best = None
    for _ in range(max_iter):
        F1 = -lap @ u + omega1 * u - 2 * u * v
        F2 = -params.kappa * (lap @ v) + omega2 * v - u * u
        res = max(np.abs(F1).max(), np.abs(F2).max())
        if best is None or res < best[0]:
            best = (res, u.copy(), v.copy())
        if res < tol:
            break
        J = np.block([[-lap + omega1 * I - 2 * np.diag(v), -2 * np.diag(u)],
                      [-2 * np.diag(u), -params.kappa * lap + omega2 * I]])
        dx = np.linalg.solve(J, -np.concatenate([F1, F2]))
        u += dx[:N]
        v += dx[N:]
    return FieldPair(best[1], best[2], rg)


def spectral_ground_state(nr=512, R=40.0, params=HALF):
    """The omega = 1 ground state of the resonant system, polished spectrally."""
    rg = sc.RadialGrid(4, nr, R)
    return spectral_refine(solve_elliptic(1.0, 2.0, params, rg), 1.0, 2.0, params)


class _CosineInterp:
    """Evaluate a cell-centred radial sample through its cosine series."""

    def __init__(self, f, rg):
        self.R = rg.nr * rg.dr
        c = dct(np.asarray(f, dtype=float), type=2) / f.size
        c[0] *= 0.5
        self.c = c
        self.k = np.pi * np.arange(f.size) / self.R

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        m = y < self.R
        for s in range(0, int(m.sum()), 4096):   # chunk to keep the cos matrix small
            idx = np.flatnonzero(m)[s:s + 4096]
            out[idx] = np.cos(np.outer(y[idx], self.k)) @ self.c
        return out


# ------------------------------------------------------------ pseudo-conformal family

@dataclass
class PseudoConformalSpec:
    T: float
    ground: FieldPair
    rho: float = 1.0
    theta1: Optional[float] = None     # default -1/T
    theta2: Optional[float] = None     # default -2/T
    residual_tol: float = 1e-8
    _interp: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        _need_d4(self.ground.grid, "PseudoConformalSpec")
        if self.theta1 is None:
            self.theta1 = -1.0 / self.T
        if self.theta2 is None:
            self.theta2 = -2.0 / self.T
        res = ground_residual(self.ground)
        if res > self.residual_tol:
            raise ValueError(f"ground pair is not a resonant ground state (residual {res:.2e})")
        self._interp = (_CosineInterp(self.ground.u.real, self.ground.grid),
                        _CosineInterp(self.ground.v.real, self.ground.grid))

    def sample_ground(self, grid) -> FieldPair:
        """The (real) ground profile resampled on another radial grid."""
        iu, iv = self._interp
        return FieldPair(iu(grid.r), iv(grid.r), grid)


def ground_residual(fp, params=HALF):
    """Residual of the omega = 1 resonant system, best of the grid and spectral operators."""
    g = fp.grid
    fd = elliptic_residual(fp, 1.0, 2.0, params, which="strong")
    lu = sc.spectral_radial_laplacian(fp.u, g)
    lv = sc.spectral_radial_laplacian(fp.v, g)
    spec = max(np.abs(-lu + fp.u - 2 * fp.u * fp.v).max(),
               np.abs(-0.5 * lv + 2 * fp.v - fp.u ** 2).max())
    return float(min(fd, spec))


def pseudo_conformal(spec: PseudoConformalSpec, t: float, grid, check=True,
                     _v_phase=2.0) -> FieldPair:
    """The explicit blow-up solution at time t < T, sampled on a d = 4 radial grid."""
    _need_d4(grid, "pseudo_conformal")
    s = spec.T - t
    if not s > 0:
        raise TooCloseToBlowup(f"t = {t} is not before T = {spec.T}")
    r = grid.r
    y = spec.rho * r / s
    amp = (spec.rho / s) ** 2
    iu, iv = spec._interp
    pu, pv = amp * iu(y), amp * iv(y)
    if check:
        big = (np.abs(pu) >= AMP_FLOOR * np.abs(pu).max()) | (np.abs(pv) >= AMP_FLOOR * np.abs(pv).max())
        if big.any():
            worst = grid.dr * r[big].max() / s       # v phase gradient r/s dominates
            if worst >= PHASE_LIMIT:
                raise TooCloseToBlowup(f"phase gradient unresolved at t = {t}: h|grad phase| = {worst:.3f}")
    rr = spec.rho ** 2 / s
    u = np.exp(1j * (spec.theta1 + rr - r ** 2 / (4 * s))) * pu
    v = np.exp(1j * (spec.theta2 + _v_phase * rr - r ** 2 / (2 * s))) * pv
    return FieldPair(u, v, grid)


def phase_resolved(spec, t, grid) -> bool:
    try:
        pseudo_conformal(spec, t, grid)
    except TooCloseToBlowup:
        return False
    return True


def _fine(spec, nr=16384):
    """The ground profile resampled on a fine grid (coarse profile grids under-resolve the quadrature)."""
    g = spec.ground.grid
    return spec.sample_ground(sc.RadialGrid(4, nr, g.nr * g.dr))


def family_constants(spec):
    """Closed forms: K(t) = A/s^2 + B, M constant, E = V_ground/(8 rho^2), variance = s^2 V_ground/rho^2."""
    g = _fine(spec)
    rep = energy(g, HALF)
    V = variance(g)
    return dict(A=spec.rho ** 2 * rep.K, B=V / (4 * spec.rho ** 2), M=rep.M,
                E=V / (8 * spec.rho ** 2), V=V / spec.rho ** 2, P=rep.P)


def _operator(op, g):
    if not isinstance(g, sc.RadialGrid):
        return lambda f: sc.laplacian(f, g)
    if op == "spectral":
        return lambda f: sc.spectral_radial_laplacian(f, g)
    if op == "grid":
        return lambda f: sc.laplacian(f, g)
    raise ValueError("operator must be 'spectral' or 'grid'")


def pde_residual(snapshots, dt, params, operator="spectral") -> float:
    """Sup-norm defect of a sampled candidate in the evolution equations.

    With three snapshots (t-dt, t, t+dt) the time derivative is centred at the
    middle one; with two, everything is averaged at the midpoint.  ``operator``
    picks the radial Laplacian: "spectral" for analytic families, "grid" for
    data produced by the finite-difference solvers.
    """
    fps = list(snapshots)
    if len(fps) not in (2, 3):
        raise ValueError("pde_residual takes two or three snapshots")
    g = fps[0].grid
    lap = _operator(operator, g)
    k = params.kappa

    def N(fp):
        return (lap(fp.u) + 2 * fp.v * np.conj(fp.u),
                k * lap(fp.v) + fp.u ** 2)

    if len(fps) == 3:
        a, b, c = fps
        nu, nv = N(b)
        ru = 1j * (c.u - a.u) / (2 * dt) + nu
        rv = 1j * (c.v - a.v) / (2 * dt) + nv
    else:
        a, b = fps
        na, nb = N(a), N(b)
        ru = 1j * (b.u - a.u) / dt + 0.5 * (na[0] + nb[0])
        rv = 1j * (b.v - a.v) / dt + 0.5 * (na[1] + nb[1])
    return float(max(np.abs(ru).max(), np.abs(rv).max()))


def gauged_energy(fp, t, params=HALF):
    """E(e^{i|x|^2/4t} u, e^{i|x|^2/2t} v)."""
    q = chi_values(None, fp.grid)
    gfp = FieldPair(np.exp(1j * q / (4 * t)) * fp.u, np.exp(1j * q / (2 * t)) * fp.v, fp.grid)
    return energy(gfp, params).E


# ------------------------------------------------------------ cutoffs

THETA2CAP, EXPLICIT = "Theta2Cap", "ExplicitVartheta"
RHO1 = 1 + 1 / np.sqrt(3)
VT1 = 2 + 4 / (3 * np.sqrt(3))          # vartheta at RHO1


@dataclass(frozen=True)
class CutoffSpec:
    R: float
    kind: str = EXPLICIT
    epsilon: float = 1e-3
    C_const: float = 1.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.kind not in (THETA2CAP, EXPLICIT):
            raise ValueError(f"kind must be {THETA2CAP!r} or {EXPLICIT!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def _sig(g):
    return 0.5 * (1 + np.tanh(0.5 * g))


def _smooth_step(tau):
    """C-infinity step S and S', S'', S''' on [0, 1] (0 below, 1 above)."""
    tau = np.asarray(tau, dtype=float)
    S = np.where(tau >= 1, 1.0, 0.0)
    d1, d2, d3 = (np.zeros_like(tau) for _ in range(3))
    m = (tau > 2e-3) & (tau < 1 - 2e-3)
    mid = (tau > 0) & (tau < 1)
    t = tau[mid]
    S[mid] = _sig(1 / (1 - t) - 1 / t)
    t = tau[m]
    g1 = 1 / (1 - t) ** 2 + 1 / t ** 2
    g2 = 2 / (1 - t) ** 3 - 2 / t ** 3
    g3 = 6 / (1 - t) ** 4 + 6 / t ** 4
    s = _sig(1 / (1 - t) - 1 / t)
    s1 = s * (1 - s)
    s2 = s1 * (1 - 2 * s)
    s3 = s1 * (1 - 6 * s + 6 * s * s)
    d1[m] = s1 * g1
    d2[m] = s2 * g1 ** 2 + s1 * g2
    d3[m] = s3 * g1 ** 3 + 3 * s2 * g1 * g2 + s1 * g3
    return S, d1, d2, d3


_GL = np.polynomial.legendre.leggauss(64)
_W_CAP = None


def _cap_width():
    """Width w with theta(1 + w) = 2: w + 2 w^2 X = 1, X = int_0^1 tau (1 - S) dtau."""
    global _W_CAP
    if _W_CAP is None:
        x, wq = _GL
        tau = 0.5 * (x + 1)
        X = 0.5 * np.sum(wq * tau * (1 - _smooth_step(tau)[0]))
        _W_CAP = (-1 + np.sqrt(1 + 8 * X)) / (4 * X)
    return _W_CAP


def _cap_vartheta(rho):
    """Theta2Cap: vartheta = 2 rho (1 - S((rho-1)/w)) and three derivatives."""
    w = _cap_width()
    S, s1, s2, s3 = _smooth_step((rho - 1) / w)
    q = 1 - S
    f0 = 2 * rho * q
    f1 = 2 * q - 2 * rho * s1 / w
    f2 = -4 * s1 / w - 2 * rho * s2 / w ** 2
    f3 = -6 * s2 / w ** 2 - 2 * rho * s3 / w ** 3
    return f0, f1, f2, f3


def _cap_theta(rho):
    w = _cap_width()
    rho = np.asarray(rho, dtype=float)
    out = np.where(rho <= 1, rho ** 2, 2.0)
    m = (rho > 1) & (rho < 1 + w)
    if m.any():
        x, wq = _GL
        a = rho[m]
        pts = 1 + 0.5 * (a[:, None] - 1) * (x[None, :] + 1)
        out[m] = 1 + 0.5 * (a - 1) * np.sum(wq * _cap_vartheta(pts)[0], axis=1)
    return out


def _explicit_vartheta(rho):
    """The piecewise vartheta: 2 rho, 2[rho - (rho-1)^3], a smoothstep decay to 0 on (RHO1, 2).

    Third derivatives are the piecewise values; the jumps of vartheta'' at 1,
    RHO1 and 2 are not represented.
    """
    rho = np.asarray(rho, dtype=float)
    f0, f1, f2, f3 = (np.zeros_like(rho) for _ in range(4))
    a = rho <= 1
    f0[a], f1[a] = 2 * rho[a], 2.0
    b = (rho > 1) & (rho <= RHO1)
    x = rho[b] - 1
    f0[b], f1[b], f2[b], f3[b] = 2 * (rho[b] - x ** 3), 2 - 6 * x ** 2, -12 * x, -12.0
    c = (rho > RHO1) & (rho < 2)
    L = 2 - RHO1
    x = (rho[c] - RHO1) / L
    f0[c] = VT1 * (1 - 3 * x ** 2 + 2 * x ** 3)
    f1[c] = -VT1 * 6 * x * (1 - x) / L
    f2[c] = -VT1 * (6 - 12 * x) / L ** 2
    f3[c] = VT1 * 12 / L ** 3
    return f0, f1, f2, f3


def _explicit_theta(rho):
    rho = np.asarray(rho, dtype=float)
    out = np.empty_like(rho)
    a = rho <= 1
    out[a] = rho[a] ** 2
    b = (rho > 1) & (rho <= RHO1)
    x = rho[b] - 1
    out[b] = rho[b] ** 2 - 0.5 * x ** 4
    th1 = RHO1 ** 2 - 0.5 * (RHO1 - 1) ** 4
    L = 2 - RHO1
    c = rho > RHO1
    x = np.minimum((rho[c] - RHO1) / L, 1.0)
    out[c] = th1 + VT1 * L * (x - x ** 3 + 0.5 * x ** 4)
    return out


def explicit_plateau():
    """theta(2) for the explicit construction (about 3.018, not 2)."""
    return float(_explicit_theta(np.array([2.0]))[0])


def cutoff_profile(spec: CutoffSpec) -> RadialProfile:
    """chi_R(r) = R^2 theta(r/R) with derivatives, as a RadialProfile."""
    R = spec.R
    th, vt = (_cap_theta, _cap_vartheta) if spec.kind == THETA2CAP else (_explicit_theta, _explicit_vartheta)

    def part(i, scale):
        return lambda r: scale * vt(np.asarray(r, float) / R)[i]

    return RadialProfile(f=lambda r: R * R * th(np.asarray(r, float) / R),
                         d1=part(0, R), d2=part(1, 1.0), d3=part(2, 1 / R), d4=part(3, 1 / R ** 2),
                         name=f"{spec.kind}(R={R:g})")


@dataclass
class CutoffProfiles:
    r: np.ndarray
    chi: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    lap: np.ndarray
    chi1: np.ndarray
    chi2: np.ndarray
    profile: RadialProfile


def _slope_ratio(spec, r):
    """chi'(r)/r = vartheta(rho)/rho, exact (= 2) in the inner region."""
    rho = np.asarray(r, dtype=float) / spec.R
    vt = (_cap_vartheta if spec.kind == THETA2CAP else _explicit_vartheta)(rho)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rho > 0, vt / np.where(rho > 0, rho, 1.0), 2.0)


def make_cutoffs(spec: CutoffSpec, rgrid, d=4) -> CutoffProfiles:
    """Sample chi_R, chi_R', chi_R'', the Laplacian, chi_1 = 2 - chi'' and chi_2 = 2d - Lap chi."""
    if isinstance(rgrid, sc.RadialGrid):
        r, d = rgrid.r, rgrid.d
    else:
        r = np.asarray(rgrid, dtype=float)
    prof = cutoff_profile(spec)
    chi, d1, d2 = prof.f(r), prof.d1(r), prof.d2(r)
    lap = d2 + (d - 1) * _slope_ratio(spec, r)
    return CutoffProfiles(r=r, chi=chi, d1=d1, d2=d2, lap=lap, chi1=2 - d2, chi2=2 * d - lap, profile=prof)


def cutoff_inequalities(spec, rgrid, d=4):
    """min over samples of 2 - chi'', 2 - chi'/r, 2d - Lap chi (all must be >= 0)."""
    cp = make_cutoffs(spec, rgrid, d)
    ratio = _slope_ratio(spec, cp.r)
    return float(cp.chi1.min()), float((2 - ratio).min()), float(cp.chi2.min())


def positivity_check(spec: CutoffSpec, rgrid):
    """min_r chi_1 - C eps chi_2^2 over the samples; holds iff the minimum is >= 0."""
    cp = make_cutoffs(spec, rgrid)
    margin = float(np.min(cp.chi1 - spec.C_const * spec.epsilon * cp.chi2 ** 2))
    return margin >= 0, margin


STRAUSS_D4 = 1 / np.pi     # sup r^{3/2}|f| <= C (||f|| ||f'||)^{1/2}, C = (2/sigma_4)^{1/2}


def virial_constant(M):
    """The C of the positivity condition from the radial Strauss estimate at mass M.

    Outside the ball of radius R the interaction term is bounded by
    sup_{|x|>R} |v| * ||u||^2_{L2(|x|>R)}; the Strauss estimate controls sup |v|
    by C_S R^{-3/2} (||v|| ||grad v||)^{1/2}, and Young's inequality splits the
    product between the kinetic term and a mass remainder. Both u and v
    contribute at most M, which gives C = 2 C_S M.
    """
    return 2 * STRAUSS_D4 * M


def largest_epsilon(C, R=1.0, n=10000, r_max_factor=3.0):
    """Largest eps with positivity_check passing for the explicit cutoff (bisection on samples)."""
    r = np.linspace(0, r_max_factor * R, n)
    cp = make_cutoffs(CutoffSpec(R, EXPLICIT, 1.0, C), r)
    pos = cp.chi2 > 1e-12
    return float(np.min(cp.chi1[pos] / (C * cp.chi2[pos] ** 2)))


def recommended_cutoff(M, R=1.0):
    """(C, eps) with eps half of the largest passing value."""
    C = virial_constant(M)
    return C, 0.5 * largest_epsilon(C, R)


# ------------------------------------------------------------ Banica inequality

def banica_check(fp, varphi=None, M_gs=None, rtol=1e-6, params=HALF):
    """Both sides of |int grad phi . Im(grad u u* + grad v v*)| <= sqrt(2E) (int |grad phi|^2 (|u|^2+2|v|^2))^{1/2}."""
    if M_gs is None:
        raise ValueError("banica_check needs the ground-state mass M_gs")
    _need_half(params, "banica_check")
    g = fp.grid
    M = mass(fp)
    if abs(M - M_gs) > rtol * M_gs:
        raise MassNotMinimal(f"M = {M!r} differs from M_gs = {M_gs!r} by more than {rtol:g} relative")
    prof = quadratic_profile() if varphi is None else varphi
    if not isinstance(prof, RadialProfile) or not isinstance(g, sc.RadialGrid):
        raise GridError("banica_check needs a RadialProfile on a RadialGrid")
    lhs = 0.5 * abs(virial_first(fp, prof, kappa=0.5))
    E = max(energy(fp, params).E, 0.0)
    grad2 = prof.d1(g.r) ** 2
    rhs = np.sqrt(2 * E) * np.sqrt(sc.integrate(grad2 * (np.abs(fp.u) ** 2 + 2 * np.abs(fp.v) ** 2), g))
    return float(lhs), float(rhs)


# ------------------------------------------------------------ blow-up experiments

def gaussian_pair(rg, width=1.0, a=1.0, b=1.0):
    e = np.exp(-rg.r ** 2 / (2 * width ** 2))
    return FieldPair(a * e, b * e, rg)


def negative_energy_seed(rgrid, params=HALF, margin=0.1, profile=None):
    """Amplitude-scale a positive radial bump pair until E < -margin.

    E(lam u, lam v) = lam^2 K/2 - lam^3 P, so any bump with P > 0 works; lam is
    taken as the root of E = -2 margin above the energy maximum.
    """
    _need_d4(rgrid, "negative_energy_seed")
    _need_half(params, "negative_energy_seed")
    fp = gaussian_pair(rgrid) if profile is None else profile
    rep = energy(fp, params)
    if not rep.P > 0:
        raise CannotAchieve(f"profile has P = {rep.P!r} <= 0")

    def E(lam):
        return lam * lam * rep.K / 2 - lam ** 3 * rep.P

    lo = rep.K / (3 * rep.P)      # E is decreasing past this point
    hi = max(2 * lo, 1.0)
    while E(hi) > -2 * margin:
        hi *= 2
    lam = brentq(lambda x: E(x) + 2 * margin, lo, hi, xtol=1e-14)
    return fp.scaled(lam)


def subcritical_seeds(rgrid, M_gs, frac=0.9, params=HALF):
    """Five radial pairs of mass frac*M_gs with assorted widths, phases and energy signs."""
    out = []
    specs = [(1.0, 1.0, 1.0, 0.0), (0.5, 1.0, 0.5, 0.0), (2.0, 0.3, 1.0, 0.0),
             (1.0, 1.0, 1.0, 1.5), (0.7, 1.0, 2.0, -0.8)]
    for width, a, b, chirp in specs:
        e = np.exp(-rgrid.r ** 2 / (2 * width ** 2))
        ph = np.exp(1j * chirp * rgrid.r ** 2)
        fp = FieldPair(a * e * ph, b * e * ph ** 2, rgrid)
        out.append(fp.scaled(np.sqrt(frac * M_gs / mass(fp))))
    return out


@dataclass
class MinimalMassReport:
    T: float
    M_gs: float
    mass_error: float
    mass_drift: float
    exponent: Optional[float]
    T_fit: Optional[float]
    tracking_error: float
    variance_residual: float
    K_ratio: float
    t_stop: float
    ball_radius: float
    ball_curve: list
    ball_final: float
    ball_monotone: bool
    resolved_until: float
    status: object
    diags: list
    runtime: float
    coeff_tail: tuple = (np.nan, np.nan)

    def lines(self):
        return [f"T = {self.T!r}", f"M_gs = {self.M_gs!r}",
                f"mass_error = {self.mass_error:.3e}", f"mass_drift = {self.mass_drift:.3e}",
                f"exponent = {self.exponent!r}", f"T_fit = {self.T_fit!r}",
                f"tracking_error = {self.tracking_error:.3e}",
                f"variance_identity_residual = {self.variance_residual:.3e}",
                f"K_ratio = {self.K_ratio:.4g}", f"t_stop = {self.t_stop!r}",
                f"ball_radius = {self.ball_radius!r}", f"ball_final_over_M_gs = {self.ball_final:.6f}",
                f"ball_monotone = {self.ball_monotone}", f"resolved_until = {self.resolved_until!r}",
                f"status = {self.status}", f"runtime_s = {self.runtime:.1f}",
                f"cosine_tail_initial = {self.coeff_tail[0]:.3e}", f"cosine_tail_final = {self.coeff_tail[1]:.3e}"]


def coefficient_tail(fp, frac=0.1):
    """Largest cosine coefficient in the top ``frac`` of the spectrum, relative to the largest one.

    A smoothness record for radial fields (recorded, not asserted)."""
    out = 0.0
    for f in (fp.u, fp.v):
        c = np.abs(dct(f, type=2, norm="ortho"))
        k = int((1 - frac) * c.size)
        out = max(out, float(c[k:].max() / c.max()))
    return out


def minimal_mass_experiment(gnr, T, cfg, rgrid=None, ground=None, K_growth=100.0,
                            ball_radius=0.2, min_growth=50.0, track_stride=1):
    """Evolve the explicit minimal-mass blow-up solution and compare with the formula.

    ``gnr`` supplies M_gs; the analytic family is built from ``ground`` (default:
    a spectrally polished ground state).  The run stops once K has grown by
    ``K_growth``; only the window where the phase is resolved is used.
    """
    t0 = time.time()
    rg = rgrid if rgrid is not None else sc.RadialGrid(4, 8192, 20.0)
    _need_d4(rg, "minimal_mass_experiment")
    if ground is None:
        ground = spectral_ground_state()
    spec = PseudoConformalSpec(T=T, ground=ground)
    M_gs = gnr.M_gs
    fp0 = pseudo_conformal(spec, 0.0, rg)
    errs, vres, balls = [], [], []
    count = [0]

    def cb(t, fp, rec):
        count[0] += 1
        if count[0] % track_stride:
            return
        try:
            ex = pseudo_conformal(spec, t, rg)
        except TooCloseToBlowup:
            return
        d = np.sqrt(sc.norm_sq(fp.u - ex.u, rg) + 2 * sc.norm_sq(fp.v - ex.v, rg))
        errs.append(d / np.sqrt(M_gs))
        if t > 0:
            lhs, rhs = variance(fp), 8 * t * t * gauged_energy(fp0, t)
            vres.append(abs(lhs - rhs) / max(abs(rhs), 1e-300))
        balls.append((t, mass_in_ball(fp, ball_radius) / M_gs))

    c = dyn.EvolveConfig(**{**cfg.__dict__, "blowup_K_factor": K_growth,
                            "t_end": min(cfg.t_end, T), "ball_radius": ball_radius})
    final, diags, status = dyn.evolve(fp0, PhysicalParams(0.5), c, callbacks=[cb])
    Ms = np.array([r.M for r in diags])
    fit = None
    try:
        fit = dyn.blowup_detect(diags, min_growth=min_growth)
    except QuadNLSError:
        fit = None
    bv = np.array([b for _, b in balls])
    # resolved window end: last t at which the analytic family passes the phase check
    lo, hi = 0.0, T
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if phase_resolved(spec, mid, rg) else (lo, mid)
    return MinimalMassReport(
        T=T, M_gs=M_gs, mass_error=float(np.max(np.abs(Ms - M_gs)) / M_gs),
        mass_drift=float(np.max(np.abs(Ms - Ms[0])) / Ms[0]),
        exponent=None if fit is None else fit[1], T_fit=None if fit is None else fit[0],
        tracking_error=float(max(errs)) if errs else np.nan,
        variance_residual=float(max(vres)) if vres else np.nan,
        K_ratio=diags[-1].K / diags[0].K, t_stop=diags[-1].t, ball_radius=ball_radius,
        ball_curve=balls, ball_final=float(bv[-1]) if bv.size else np.nan,
        ball_monotone=bool(np.all(np.diff(bv) >= -1e-9)) if bv.size else False,
        resolved_until=lo, status=status, diags=diags, runtime=time.time() - t0,
        coeff_tail=(coefficient_tail(fp0), coefficient_tail(final)))
