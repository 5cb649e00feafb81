"""Numerical laboratory for meromorphic functions with polynomial Schwarzian
derivative: construction from w'' + P w = 0, pole and residue asymptotics,
orbit classification of asymptotic values, and ergodicity probes."""

from .dynamics import (
    Escaping,
    MixedInstance,
    Orbit,
    Prepole,
    RepellingLanding,
    SigmaMap,
    Terminal,
    Unresolved,
    check_pole_neighborhood_expansion,
    check_tract_expansion,
    classify_singular_orbit,
    find_mixed_instance,
    iterate,
    sigma_maps,
)
from .fits import AsymptoticFit, fit_power_law
from .functions import (
    ClosedFormTwoAV,
    OdeBacked,
    asymptotic_values,
    derivative,
    evaluate,
    residue_at,
)
from .ode import FundamentalPairState, LiouvilleFrame, integrate_pair, wronskian_drift
from .probe import ProbeConfig, ProbeReport, birkhoff_average, run_probe, spatial_average
from .roots import AnnularSector, find_zeros, poles_in_region, preimages_in_region
from .schwarzian import SchwarzPolynomial, critical_directions, schwarzian_numeric
from .sphere import INF, Mobius, chordal_distance, koebe_bound, sample_sphere_uniform

__version__ = "0.1.0"
