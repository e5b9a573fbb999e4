"""Negative energy radial data blow up; data below the ground-state mass do not."""
import numpy as np

from quadnls import spectral_core as sc
from quadnls import dynamics as dyn
from quadnls import blowup as bu
from quadnls.functionals import energy, mass
from quadnls.ground_state import gn_constant

rg = sc.RadialGrid(4, 2048, 20.0)
p = bu.HALF
M_gs = gn_constant(sc.RadialGrid(4, 4096, 20.0), p).M_gs
cfg = dyn.EvolveConfig(dt=1e-3, t_end=5.0, diag_stride=10, blowup_K_factor=1e3)

seed = bu.negative_energy_seed(rg, p, 0.1)
r0 = energy(seed, p)
_, d, st = dyn.evolve(seed, p, cfg)
print(f"seed: E = {r0.E:+.4f}, M/M_gs = {r0.M / M_gs:.3f} -> {st}, K grew {d[-1].K / d[0].K:.0f}x")

for s in bu.subcritical_seeds(rg, M_gs)[:2]:
    e = energy(s, p)
    _, d, st = dyn.evolve(s, p, cfg)
    print(f"subcritical: E = {e.E:+.4f}, M/M_gs = {e.M / M_gs:.3f} -> {st}, max K/K0 = {max(x.K for x in d) / d[0].K:.2f}")
