"""The explicit minimal-mass blow-up solution in d = 4: evolve it and compare with the formula.

A short version of the full experiment (coarser grid, K grows 20x); takes under half a minute.
"""
import numpy as np

from quadnls import spectral_core as sc
from quadnls import dynamics as dyn
from quadnls import blowup as bu
from quadnls.ground_state import gn_constant

rg = sc.RadialGrid(4, 4096, 20.0)
gnr = gn_constant(rg, bu.HALF)
ground = bu.spectral_ground_state()
spec = bu.PseudoConformalSpec(1.0, ground)

c = bu.family_constants(spec)
print(f"K(t) = {c['A']:.6f}/(1-t)^2 + {c['B']:.6f},  E = {c['E']:.6f},  M = {c['M']:.10f}")

h = 1e-6
fs = [bu.pseudo_conformal(spec, 0.5 + k * h, rg) for k in (-1, 0, 1)]
print(f"residual of the formula in the equation at t = 0.5: {bu.pde_residual(fs, h, bu.HALF):.2e}")

cfg = dyn.EvolveConfig(dt=1e-3, t_end=1.0, scheme="yoshida4", diag_stride=10)
rep = bu.minimal_mass_experiment(gnr, 1.0, cfg, rgrid=rg, ground=ground, K_growth=20, min_growth=10)
print("\n".join(rep.lines()))
