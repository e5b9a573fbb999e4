"""Localized virial cutoffs: the inequalities they satisfy and the positivity margin."""
import numpy as np

from quadnls import blowup as bu

r = np.linspace(0, 3, 10000)
for kind in (bu.THETA2CAP, bu.EXPLICIT):
    m = bu.cutoff_inequalities(bu.CutoffSpec(1.0, kind), r)
    print(f"{kind:<17s} min over the inequalities: {min(m):.2e}")
print(f"explicit plateau chi(inf)/R^2 = {bu.explicit_plateau():.6f}")

M_gs = 271.658943
C, eps = bu.recommended_cutoff(M_gs)
print(f"\nC = {C:.4f}, largest admissible eps = {bu.largest_epsilon(C):.4e}, recommended eps = {eps:.4e}")
for e in (eps, 2.5 * eps, 10.0):
    ok, margin = bu.positivity_check(bu.CutoffSpec(1.0, bu.EXPLICIT, e, C), r)
    print(f"  eps = {e:.3e}: {'holds' if ok else 'fails'} (margin {margin:.3e})")
