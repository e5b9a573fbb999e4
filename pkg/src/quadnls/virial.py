"""Virial weights and the localized virial quantities V, V', V''.

A weight chi is either ``None`` (meaning |x|^2), an array of node values, or a
``RadialProfile`` carrying chi and its first four r-derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import spectral_core as sc
from .errors import KappaMismatch, GridError


@dataclass
class RadialProfile:
    f: Callable
    d1: Callable
    d2: Callable
    d3: Optional[Callable] = None
    d4: Optional[Callable] = None
    name: str = "profile"

    def lap(self, r, d):
        r = np.asarray(r, dtype=float)
        return self.d2(r) + (d - 1) * self.d1(r) / r

    def bilap(self, r, d):
        """Radial bi-Laplacian: chi'''' + 2(d-1) chi'''/r + (d-1)(d-3)(chi''/r^2 - chi'/r^3)."""
        if self.d3 is None or self.d4 is None:
            raise ValueError(f"{self.name} has no third/fourth derivative")
        r = np.asarray(r, dtype=float)
        return (self.d4(r) + 2 * (d - 1) * self.d3(r) / r
                + (d - 1) * (d - 3) * (self.d2(r) / r ** 2 - self.d1(r) / r ** 3))


def quadratic_profile() -> RadialProfile:
    return RadialProfile(f=lambda r: np.asarray(r, float) ** 2,
                         d1=lambda r: 2 * np.asarray(r, float),
                         d2=lambda r: np.full_like(np.asarray(r, float), 2.0),
                         d3=lambda r: np.zeros_like(np.asarray(r, float)),
                         d4=lambda r: np.zeros_like(np.asarray(r, float)),
                         name="|x|^2")


def chi_values(chi, g):
    if chi is None:
        return g.r ** 2 if isinstance(g, sc.RadialGrid) else g.rsq
    if isinstance(chi, RadialProfile):
        if not isinstance(g, sc.RadialGrid):
            raise GridError("radial profiles need a RadialGrid")
        return chi.f(g.r)
    return sc.check_on(chi, g)


def _density(fp):
    return np.abs(fp.u) ** 2 + 2 * np.abs(fp.v) ** 2


def virial_V(fp, chi=None) -> float:
    return float(sc.integrate(np.broadcast_to(chi_values(chi, fp.grid), fp.grid.shape) * _density(fp), fp.grid))


def variance(fp) -> float:
    return virial_V(fp, None)


def virial_first(fp, chi=None, kappa: float = 0.5) -> float:
    """2 int grad chi . Im(grad u conj u) + 4 kappa int grad chi . Im(grad v conj v).

    Evaluated in the equivalent form -2 Im int chi (conj u Lap u + 2 kappa conj v Lap v),
    which is the exact time derivative of V under the discrete linear flow.
    """
    g = fp.grid
    c = np.broadcast_to(chi_values(chi, g), g.shape)
    s = sc.integrate(c * (np.conj(fp.u) * sc.laplacian(fp.u, g)
                          + 2 * kappa * np.conj(fp.v) * sc.laplacian(fp.v, g)), g)
    return float(-2 * np.imag(s))


def virial_second_rhs(fp, chi=None, params=None) -> float:
    """-int bilap chi (|u|^2 + |v|^2/2) + int chi''(4|u_r|^2 + 2|v_r|^2) - 2 Re int lap chi conj(v) u^2."""
    kappa = 0.5 if params is None else params.kappa
    if abs(kappa - 0.5) > 1e-15:
        raise KappaMismatch(f"the second virial identity needs kappa = 1/2, got {kappa}")
    g = fp.grid
    prof = quadratic_profile() if chi is None else chi
    if not isinstance(g, sc.RadialGrid):
        if chi is not None:
            raise GridError("on tensor grids only chi = |x|^2 is supported")
        K8 = 8 * sc.grad_norm_sq(fp.u, g) + 4 * sc.grad_norm_sq(fp.v, g)
        P = np.real(sc.integrate(np.conj(fp.v) * fp.u ** 2, g))
        return float(K8 - 4 * g.d * P)
    if not isinstance(prof, RadialProfile):
        raise GridError("virial_second_rhs needs a RadialProfile weight")
    r, d = g.r, g.d
    t1 = -sc.integrate(prof.bilap(r, d) * (np.abs(fp.u) ** 2 + 0.5 * np.abs(fp.v) ** 2), g)
    rf = g.r_faces
    c2 = prof.d2(rf)
    t2 = sc.psum(g.face_weights * c2 * (4 * np.abs(g.G @ fp.u) ** 2 + 2 * np.abs(g.G @ fp.v) ** 2))
    t3 = -2 * np.real(sc.integrate(prof.lap(r, d) * np.conj(fp.v) * fp.u ** 2, g))
    return float(t1 + t2 + t3)
