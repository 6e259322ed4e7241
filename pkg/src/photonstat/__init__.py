"""Photon-number-projection correlations of thermal and laser light."""

__version__ = "0.1.0"

from .analytic import (
    CountPair,
    JointPmnTable,
    PgfConstants,
    ThermalParams,
    g11,
    g_m0,
    g_mn,
    joint_pgf,
    joint_pmn,
    marginal_pq,
    p11,
    pmn_table,
    reference_g2,
    truncation_order,
)
from .coherence import CoherenceModel, mu_at
from .correlate import (
    GmnCurve,
    GmnTallies,
    StreamingCorrelator,
    bin_timetags,
    correlate_ptag,
    estimate_gmn,
    gmn_tallies,
    peak_background_normalize,
    spatial_scan,
    spatial_scans,
)
from .errors import (
    ContourConfigError,
    DomainError,
    FormatError,
    PhotonStatError,
    PrecisionWarning,
    UndefinedCorrelationError,
)
from .oracle import ContourConfig, pmn_contour, pmn_series
from .simulate import (
    BinnedCountStream,
    SimConfig,
    TimeTagStream,
    counts_to_timetags,
    sample_joint_counts,
    simulate,
    simulate_laser,
    simulate_temporal,
)
