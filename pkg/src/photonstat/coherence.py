"""Squared first-order coherence as a function of detector offset and time lag."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CoherenceModel:
    """Gaussian-Gaussian profile mu(dx, tau) = mu_peak exp(-(dx/sigma_x)^2) exp(-(tau/tau_c)^2).

    ``sigma_x`` shares its length unit with ``dx``; ``tau_c`` shares its time
    unit with ``tau`` (seconds throughout photonstat).  ``mu_peak < 1``
    emulates imperfect coherence at zero separation.
    """

    sigma_x: float = 1.0
    tau_c: float = 2e-6
    mu_peak: float = 1.0

    def __post_init__(self):
        if not self.sigma_x > 0:
            raise ValueError(f"sigma_x must be > 0, got {self.sigma_x}")
        if not self.tau_c > 0:
            raise ValueError(f"tau_c must be > 0, got {self.tau_c}")
        if not 0.0 <= self.mu_peak <= 1.0:
            raise ValueError(f"mu_peak must lie in [0, 1], got {self.mu_peak}")


def mu_at(model: CoherenceModel, dx=0.0, tau=0.0):
    dx = np.asarray(dx, dtype=float)
    tau = np.asarray(tau, dtype=float)
    out = model.mu_peak * np.exp(-((dx / model.sigma_x) ** 2)) * np.exp(-((tau / model.tau_c) ** 2))
    return float(out) if np.ndim(out) == 0 else out
