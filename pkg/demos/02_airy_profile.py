"""
The Airy layer profile
======================

Near the lowest trait the population takes the shape eta*(s), a shifted
and rescaled Airy function with unit mass and zero slope at the wall.
"""
import numpy as np

from dispersal.airy import A0, airy_ai, airy_ai_prime, build_eta_star

print(f"Ai(0) = {airy_ai(0.0):.10f}, Ai'(0) = {airy_ai_prime(0.0):.10f}")
print(f"A0 = {A0:.12f}   Ai'(-A0) = {airy_ai_prime(-A0):.1e}")

a1 = 0.0345
eta = build_eta_star(a1)
print(f"\na1={a1}: a0={eta.a0:.5f}, Z={eta.normalization:.5f}, inflection at s={eta.inflection:.3f}")

# the profile is largest at the wall and turns convex past a0/a1
for s in np.linspace(0, 2.5 * eta.inflection, 6):
    print(f"  s={s:6.2f}  eta={float(eta(s)):.5f}  eta''={float(eta.second_derivative(s)): .2e}")

K = eta.quantile(0.99)
print(f"\n99% of the mass lies in s < K = {K:.3f}")

# rescaling a1 only dilates the profile
base = build_eta_star(1.0)
c = a1 ** (1 / 3)
print("dilation check:", np.allclose(eta([0.0, 1.0, 5.0]), c * base(c * np.array([0.0, 1.0, 5.0]))))
