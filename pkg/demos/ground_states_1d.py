"""Normalized ground states in d = 1: I(a,b), J(c) and the split J(c) = min_a I(a,(c-a)/2)."""
import numpy as np

from quadnls import spectral_core as sc
from quadnls.functionals import PhysicalParams
from quadnls import ground_state as gs

p = PhysicalParams(0.5)
g = sc.Grid(1, 256, 40.0)

print("I(a,b) on a small table")
for a in (0.5, 1.0, 2.0):
    row = [gs.minimize_I(a, b, g, p).energy_value for b in (0.5, 1.0, 2.0)]
    print(f"  a={a:3.1f}  " + "  ".join(f"{x:+.6f}" for x in row))

res = gs.minimize_J(2.0, g, p)
print(f"\nJ(2) = {res.energy_value:.12f}, omega1 = {res.omega1:.8f}, omega2/omega1 = {res.omega2 / res.omega1:.10f}")
print("Pohozaev defects:", ", ".join(f"{x:.1e}" for x in res.pohozaev_defects))

a_star, I_min, sweep = gs.split_minimum(2.0, g, p)
print("\nsweep a -> I(a, (2-a)/2)")
for a, v in sweep:
    print(f"  {a:.2f}  {v:+.8f}")
print(f"refined minimum at a = {a_star:.6f}: {I_min:.12f}  (J - min = {res.energy_value - I_min:.1e})")
