"""Closed-form g_mn for thermal light: where projections anti-bunch and where they bunch.

Run: python demos/analytic_tour.py
"""

import numpy as np

from photonstat import ThermalParams, g11, g_m0, g_mn, reference_g2

# fully coherent beams: g10 dips below 1 for small nbar and climbs past 2 for large nbar
nbar = np.array([0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 6.0, 10.0])
p = ThermalParams(nbar, np.ones_like(nbar))
print(" nbar    g00     g10     g20     g11")
for row in zip(nbar, g_m0(p, 0), g_m0(p, 1), g_m0(p, 2), g11(p)):
    print("{:5.2f}  {:6.4f}  {:6.4f}  {:6.4f}  {:6.4f}".format(*row))

grid = np.round(np.arange(0.01, 3.0, 0.01), 10)
curve = g_m0(ThermalParams(grid, np.ones_like(grid)), 1)
print(f"\ng10 minimum {curve.min():.5f} at nbar = {grid[curve.argmin()]:.2f}")

# partial coherence interpolates toward independence (g = 1 at mu = 0)
print("\n  mu    g10(nbar=1)   g2 reference")
for mu in (0.0, 0.25, 0.5, 0.75, 1.0):
    q = ThermalParams(1.0, mu)
    print(f"{mu:4.2f}     {g_mn(q, (1, 0)):.5f}       {reference_g2(mu):.3f}")
