"""Shared constants for critwin."""

# Barely-subcritical exponent, midpoint of (1/6, 1/5)
DEFAULT_DELTA = 0.18

# Output formats
CSV_PRECISION = 12
SCHEMA_VERSION = "1.0"
SUSCEPTIBILITY_FIELDS = ["t", "s1", "s2", "s3", "g", "D", "s2star", "I", "diam"]

# Default trajectory length of the limits command
LIMIT_GRID_POINTS = 100

# Worker pool size for sweeps
WORKERS_ENV_VAR = "CRITWIN_WORKERS"

# Component distances: exhaustive BFS up to this size, double sweep above
DIAMETER_EXACT_CAP = 10_000
BFS_CHUNK = 256

# Dense Bernoulli sampling below this vertex count
DENSE_PAIR_CUTOFF = 2048

# Perron data
POWER_ITERATION_CAP = 100_000
POWER_ITERATION_TOL = 1e-12
CRITICALITY_TOL = 1e-6

# ODE integration
RK4_MIN_STEP = 1e-12
RK4_TOL = 1e-10

# Parabolic Brownian motion
PARABOLIC_DT = 1e-4
MIN_EXCURSION_STEPS = 10

# Trees and excursions
EXCURSION_GRID = 2048
ESS_TARGET = 100
MAX_PROPOSALS = 1 << 20
ENUMERATION_MAX_M = 4

# Metric spaces
GHP_EXACT_CAP = 36
CRIT_POINTS = 512
BLOB_SAMPLE_CAP = 64
METRIC_TOL = 1e-9

# Reference values for the Bohman-Frieze constants
BF_ALPHA_REF = 1.063
BF_BETA_REF = 0.764
BF_RHO_REF = 0.811
