"""Detector-separation scan: the g10 dip (nbar = 0.66) and bump (nbar = 1.98) wash out to 1.

Run: python demos/spatial_scan.py
"""

import numpy as np

from photonstat import SimConfig, ThermalParams, g_m0, mu_at, spatial_scans
from photonstat.coherence import CoherenceModel

model = CoherenceModel(sigma_x=1.0, tau_c=2e-6, mu_peak=1.0)
dx = np.linspace(-3, 3, 7)
for nbar, bw in ((0.66, 1e-6), (1.98, 3e-6)):
    base = SimConfig(nbar=nbar, bin_width=bw, n_bins=300_000, seed=5)
    curves = spatial_scans(base, dx, [(1, 0)])
    print(f"\nnbar = {nbar}, bin width {bw * 1e6:.0f} us")
    print("   dx    mu       g10 sim           analytic")
    for x in dx:
        g, se = curves[(1, 0)].at(x)
        mu = mu_at(model, x, 0.0)
        print(f"{x:5.1f}  {mu:6.4f}   {g:.4f} +- {se:.4f}   {g_m0(ThermalParams(nbar, mu), 1):.4f}")
