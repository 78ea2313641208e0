"""
The logistic carrier and the selection eigenvalue
=================================================

A single species with diffusion rate alpha settles on theta_alpha.  Freezing
the potential h = theta_{alpha_lo} - m, the principal eigenvalue sigma*(alpha)
measures how badly a mutant with rate alpha does against the resident; it
vanishes at alpha_lo and grows with alpha.
"""
import numpy as np

from dispersal.eigen import sigma_star_curve
from dispersal.grid import SpatialGrid, habitat, integrate_spatial
from dispersal.logistic import solve_theta

grid = SpatialGrid((1.0,), (96,))
m = habitat(grid, "cosine", amplitude=0.5)

# theta is non-constant and carries more mass than m itself
for alpha in (0.1, 0.5, 2.0, 100.0):
    th = solve_theta(alpha, m)
    print(f"alpha={alpha:6.1f}  min theta={th.values.min():.4f}  max theta={th.values.max():.4f}  "
          f"int theta={integrate_spatial(th.theta):.5f}  (int m = {integrate_spatial(m):.1f})")

theta = solve_theta(0.5, m)
curve = sigma_star_curve(m, theta, np.linspace(0.5, 2.0, 7))
print("\n alpha    sigma*     d sigma*/d alpha")
for a, s, d in zip(curve.alphas, curve.sigma, curve.derivative):
    print(f"{a:6.3f}  {s: .3e}  {d:.5f}")
print(f"\nsigma1* = {curve.sigma1:.6f}  (slope at the lowest rate; sets the layer profile)")
