"""
Competing species with different dispersal
==========================================

Without mutation the slowest disperser excludes a faster one.  With a small
mutation rate all species persist, but the slowest dominates more and more
as the rate shrinks.
"""
import numpy as np

from dispersal.discrete import (DiscreteTraitSystem, evolve_discrete, nearest_neighbor_mutation,
                                species_masses, steady_discrete)
from dispersal.grid import SpatialGrid, habitat
from dispersal.logistic import solve_theta

m = habitat(SpatialGrid((1.0,), (96,)))
fast = solve_theta(2.0, m).values

# a rare slow invader against an established fast resident
pair = DiscreteTraitSystem([0.5, 2.0], nearest_neighbor_mutation(2), 0.0, m)
history = []
evolve_discrete(pair, [0.01 * fast, fast], 1000.0,
                callback=lambda t, U: history.append((t, U[1].sum() / U.sum())) if t % 100 == 0 else None)
for t, share in history:
    print(f"t={t:6.0f}  fast-disperser share {share:.4f}")

print("\nthree species, rates 0.5 / 1.25 / 2.0")
for eps in (0.1, 0.05, 0.02, 0.01):
    sys3 = DiscreteTraitSystem([0.5, 1.25, 2.0], nearest_neighbor_mutation(3), eps, m)
    mass = species_masses(steady_discrete(sys3))
    print(f"eps={eps:5.2f}  shares {np.round(mass / mass.sum(), 4)}")
