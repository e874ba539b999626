"""Shipped default parameters.

These are the calibrated operating points the library ships with; every one
is overridable through the CLI or the pipeline config.
"""

# Change-point detection on the tail time constant
CPD_THRESHOLD = 0.90
CPD_WINDOW = 7  # diurnal cycles (one week)

# Event extraction
CORROSION_WINDOW_LEN = 24.0  # hours
CORROSION_QUANTILE = 0.55
CORROSION_LOCAL_RADIUS = 3.0  # hours

ENV_RH_THRESH = 70.0  # % RH
ENV_TOW_MIN = 2.0  # hours of wetness
ENV_COND_THRESH = 9500.0  # uS
ENV_CET_MIN = 0.5  # hours of contaminant exposure

HYBRID_RH_THRESH = 70.0
HYBRID_TOW_MIN = 4.0
HYBRID_COND_THRESH = 7000.0
HYBRID_CET_MIN = 0.5

# Hawkes likelihood and background
LL_DT = 1.0  # hours, midpoint-rule step
KDE_BANDWIDTH = 2.0  # hours
KDE_PERIOD = 24.0  # hours
MARK_PRIOR_SIGMA = 1.0  # uA

# Failure-window construction
N_TRAJ = 10
QUANTILE_LO = 0.25
QUANTILE_HI = 0.75

# Optimizer hyperparameters by (event kind, setting)
MLE_HYPER = {
    ("corrosion", "lab"): dict(lr=5e-4, grad_clip=1e3, beta_search_radius=1e-2, beta_search_points=20, tol=1e-4),
    ("environment", "lab"): dict(lr=1e-3, grad_clip=1e3, beta_search_radius=1e-3, beta_search_points=20, tol=9e-5),
    ("hybrid", "lab"): dict(lr=1e-3, grad_clip=1e3, beta_search_radius=5e-4, beta_search_points=20, tol=1e-4),
    ("corrosion", "outdoor"): dict(lr=5e-4, grad_clip=1e3, beta_search_radius=1e-2, beta_search_points=20, tol=1e-4),
    ("hybrid", "outdoor"): dict(lr=1e-3, grad_clip=1e3, beta_search_radius=5e-3, beta_search_points=20, tol=1e-4),
}


def mle_hyper(event_kind: str, setting: str = "lab") -> dict:
    """Default optimizer hyperparameters for an event kind and setting."""
    key = (event_kind, setting)
    if key not in MLE_HYPER:
        key = (event_kind, "lab")
    if key not in MLE_HYPER:
        key = ("corrosion", "lab")
    return dict(MLE_HYPER[key])
