"""Conserved quantities, action, Weinstein quotient, modulated distance."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import spectral_core as sc
from .errors import GridError, NonpositiveInteraction, MassConditionViolated


@dataclass
class FieldPair:
    u: np.ndarray
    v: np.ndarray
    grid: object

    def __post_init__(self):
        self.u = sc.check_on(self.u, self.grid)
        self.v = sc.check_on(self.v, self.grid)
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise FloatingPointError("FieldPair with non-finite entries")

    def copy(self) -> "FieldPair":
        return FieldPair(self.u.copy(), self.v.copy(), self.grid)

    def gauge(self, theta: float) -> "FieldPair":
        return FieldPair(np.exp(1j * theta) * self.u, np.exp(2j * theta) * self.v, self.grid)

    def scaled(self, s: float) -> "FieldPair":
        return FieldPair(s * self.u, s * self.v, self.grid)

    def astype_complex(self) -> "FieldPair":
        return FieldPair(self.u.astype(complex), self.v.astype(complex), self.grid)


@dataclass(frozen=True)
class PhysicalParams:
    kappa: float
    m: Optional[float] = None
    M: Optional[float] = None
    lam: Optional[complex] = None
    mu: Optional[complex] = None
    c: Optional[float] = None

    def __post_init__(self):
        if not (self.kappa > 0):
            raise ValueError("kappa must be positive")
        raw = (self.m, self.M, self.lam, self.mu, self.c)
        if any(x is not None for x in raw):
            if any(x is None for x in raw):
                raise MassConditionViolated("raw constants must be given together (m, M, lam, mu, c)")
            check_mass_condition(self.lam, self.mu, self.c)
            if not (self.m > 0 and self.M > 0):
                raise MassConditionViolated("m and M must be positive")
            if abs(self.kappa - self.m / self.M) > 1e-14 * max(1.0, self.kappa):
                raise MassConditionViolated("kappa must equal m/M")

    @classmethod
    def from_raw(cls, m, M, lam, mu, c):
        return cls(kappa=m / M, m=m, M=M, lam=lam, mu=mu, c=c)


def check_mass_condition(lam, mu, c):
    if lam == 0 or mu == 0:
        raise MassConditionViolated("lambda and mu must be nonzero")
    if not (np.isreal(c) and c > 0):
        raise MassConditionViolated("c must be real and positive")
    if abs(lam - c * np.conj(mu)) > 1e-12 * max(1.0, abs(lam)):
        raise MassConditionViolated("lambda = c conj(mu) does not hold")


@dataclass
class FunctionalReport:
    M: float
    K: float
    P: float
    E: float


def _grid_check(fp, ref):
    if fp.grid is not ref.grid:
        raise GridError("pairs live on different grids")


def mass(fp: FieldPair) -> float:
    g = fp.grid
    return sc.norm_sq(fp.u, g) + 2.0 * sc.norm_sq(fp.v, g)


def kinetic(fp: FieldPair, params: PhysicalParams) -> float:
    g = fp.grid
    return sc.grad_norm_sq(fp.u, g) + params.kappa * sc.grad_norm_sq(fp.v, g)


def interaction(fp: FieldPair) -> float:
    """Re integral of v conj(u)^2."""
    return float(np.real(sc.integrate(fp.v * np.conj(fp.u) ** 2, fp.grid)))


def energy(fp: FieldPair, params: PhysicalParams) -> FunctionalReport:
    M = mass(fp)
    K = kinetic(fp, params)
    P = interaction(fp)
    return FunctionalReport(M=M, K=K, P=P, E=0.5 * K - P)


def action(fp: FieldPair, omega: float, params: PhysicalParams) -> float:
    r = energy(fp, params)
    return r.E + 0.5 * omega * r.M


def weinstein(fp: FieldPair, params: PhysicalParams) -> float:
    r = energy(fp, params)
    if not r.P > 0:
        raise NonpositiveInteraction(f"P = {r.P!r} <= 0, pair is outside the admissible set")
    return r.K * np.sqrt(r.M) / r.P


def h1_norm_sq(f, g) -> float:
    return sc.norm_sq(f, g) + sc.grad_norm_sq(f, g)


def h1_distance(fp: FieldPair, ref: FieldPair) -> float:
    g = fp.grid
    return float(np.sqrt(h1_norm_sq(fp.u - ref.u, g) + h1_norm_sq(fp.v - ref.v, g)))


def mass_in_ball(fp: FieldPair, radius: float, center=None) -> float:
    g = fp.grid
    dens = np.abs(fp.u) ** 2 + 2 * np.abs(fp.v) ** 2
    if isinstance(g, sc.RadialGrid):
        if center is not None and np.any(np.asarray(center) != 0):
            raise GridError("radial grids only support balls centred at the origin")
        return sc.integrate(np.where(g.r < radius, dens, 0.0), g)
    c = np.zeros(g.d) if center is None else np.broadcast_to(np.asarray(center, float), (g.d,))
    d2 = 0.0
    for x, cc in zip(g.coords(), c):
        dx = (x - cc + g.L / 2) % g.L - g.L / 2    # minimal image
        d2 = d2 + dx * dx
    return sc.integrate(np.where(d2 < radius * radius, dens, 0.0), g)


# ------------------------------------------------------------ modulated distance

def _h1_weight(g):
    return 1.0 + g.ksq


def _best_theta(A: complex, B: complex):
    """argmax over theta of Re(e^{i theta} A) + Re(e^{2 i theta} B)."""
    th = np.linspace(-np.pi, np.pi, 73)
    f = np.real(np.exp(1j * th) * A + np.exp(2j * th) * B)
    i = int(np.argmax(f))
    res = minimize_scalar(lambda t: -np.real(np.exp(1j * t) * A + np.exp(2j * t) * B),
                          bounds=(th[i] - 0.1, th[i] + 0.1), method="bounded",
                          options={"xatol": 1e-13})
    t = float(res.x)
    for _ in range(3):     # Newton polish; the bounded search stalls near sqrt(eps)
        e1, e2 = np.exp(1j * t) * A, np.exp(2j * t) * B
        f2 = -np.real(e1 + 4 * e2)
        if f2 >= 0:
            break
        t -= np.real(1j * e1 + 2j * e2) / f2
    val = float(np.real(np.exp(1j * t) * A + np.exp(2j * t) * B))
    return (t + np.pi) % (2 * np.pi) - np.pi, val


def _radial_modulated(fp, ref):
    g = fp.grid
    A = h1_inner(fp.u, ref.u, g)    # <u, w>
    B = h1_inner(fp.v, ref.v, g)
    # |u - e^{i t} w|^2 = |u|^2 + |w|^2 - 2 Re(e^{-i t} <u, w>)
    th, _ = _best_theta(np.conj(A), np.conj(B))
    d = h1_distance(fp, ref.gauge(th))
    return d, 0.0, th


def h1_inner(f, h, g) -> complex:
    if isinstance(g, sc.RadialGrid):
        return sc.inner(f, h, g) + complex(sc.psum(g.face_weights * (g.G @ f) * np.conj(g.G @ h)))
    F, H = sc.fft(f, g), sc.fft(h, g)
    return complex(sc.psum(_h1_weight(g) * F * np.conj(H)) * g.dV / np.prod(g.shape))


def modulated_distance(fp: FieldPair, ref: FieldPair, refine: bool = True):
    """min over translations y and gauge theta of the H1xH1 distance to (e^{it} w(.-y), e^{2it} z(.-y)).

    Returns (dist, shift, theta).
    """
    _grid_check(fp, ref)
    g = fp.grid
    if isinstance(g, sc.RadialGrid):
        return _radial_modulated(fp, ref)
    wt = _h1_weight(g)
    Fu, Fv = sc.fft(fp.u, g), sc.fft(fp.v, g)
    Fw, Fz = sc.fft(ref.u, g), sc.fft(ref.v, g)
    # C(y) = <u, w(.-y)>_{H1} for every grid shift y
    Cu = sc.ifft(wt * Fu * np.conj(Fw), g) * g.dV
    Cv = sc.ifft(wt * Fv * np.conj(Fz), g) * g.dV
    # objective to maximise: Re(e^{-it} Cu) + Re(e^{-2it} Cv); bound |Cu| + |Cv|
    bound = np.abs(Cu) + np.abs(Cv)
    order = np.argsort(-bound.ravel(), kind="stable")
    best, best_idx, best_th = -np.inf, None, 0.0
    for idx in order[:256]:
        if bound.ravel()[idx] <= best:
            break
        th, val = _best_theta(np.conj(Cu.ravel()[idx]), np.conj(Cv.ravel()[idx]))
        if val > best:
            best, best_idx, best_th = val, idx, th
    sub = np.array(np.unravel_index(best_idx, g.shape))
    y = np.where(sub >= g.n // 2, sub - g.n, sub) * g.h
    if refine:
        y, best_th = _refine(fp, ref, y, best_th, Cu, Cv, sub)
    w = ref.gauge(best_th)
    shifted = FieldPair(sc.translate(w.u, y, g), sc.translate(w.v, y, g), g)
    d = h1_distance(fp, shifted)
    return d, (y if g.d > 1 else float(y[0])), best_th


def _refine(fp, ref, y, th, Cu, Cv, sub, iters=20):
    """Newton ascent in (y, theta) on Re(e^{-it} C_u(y)) + Re(e^{-2it} C_v(y)), C evaluated spectrally."""
    g = fp.grid
    N = np.prod(g.shape)
    ks = [np.broadcast_to(k, g.shape).ravel() for k in g.wavenumbers()]
    wt = _h1_weight(g).ravel()
    coeffs = []
    for q, f, w in ((1, fp.u, ref.u), (2, fp.v, ref.v)):
        a = (g.dV / N) * wt * (sc.fft(f, g) * np.conj(sc.fft(w, g))).ravel()
        coeffs.append((q, a))
    p = np.append(np.array(y, dtype=float), th)
    for _ in range(iters):
        grad = np.zeros(g.d + 1)
        H = np.zeros((g.d + 1, g.d + 1))
        ky = sum(k * yy for k, yy in zip(ks, p[:-1]))
        for q, a in coeffs:
            z = a * np.exp(1j * (ky - q * p[-1]))
            vec = [1j * k for k in ks] + [-1j * q * np.ones_like(ks[0])]
            for i in range(g.d + 1):
                grad[i] += np.real(sc.psum(vec[i] * z))
                for j in range(i, g.d + 1):
                    H[i, j] += np.real(sc.psum(vec[i] * vec[j] * z))
        H = np.triu(H) + np.triu(H, 1).T
        if not np.all(np.linalg.eigvalsh(H) < 0):
            break
        step = np.linalg.solve(H, grad)
        p = p - step
        if np.max(np.abs(step)) < 1e-14 * max(1.0, np.max(np.abs(p))):
            break
    y = p[:-1]
    y = (y + g.L / 2) % g.L - g.L / 2
    th = (p[-1] + np.pi) % (2 * np.pi) - np.pi
    return y, th
