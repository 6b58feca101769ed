import math

import numpy as np

SUPPORTED_DIMENSIONS = (1, 2)

DEFAULT_TOL = 1e-10
# |rho_hat(0)| above this (relative to max(1, max |rho_hat|)) is a neutrality breach
NEUTRALITY_TOL = 1e-12
# log of the largest finite double
LOG_FLOAT_MAX = float(np.log(np.finfo(float).max))

GAUSS_LEGENDRE_ORDER = 16
PENROSE_INTERIOR_RE = (0.25, 0.5, 1.0, 2.0)
PENROSE_INTERIOR_STEP = 0.5

KERNEL_MAX_IM = 1.0e4
KERNEL_DENOMINATOR_FLOOR = 1e-3
KERNEL_FIT_WINDOW = (1.0, 15.0)
KERNEL_FORWARD_RE = 1.0

CSV_FLOAT_FORMAT = ".17g"
MODE_SEPARATOR = ":"

CHECKPOINT_MAGIC = b"LLAB"
CHECKPOINT_VERSION = 1
CHECKPOINT_HEADER_FORMAT = "<4s5I3d"

DEFAULT_SCENARIO = "full-report"
SCENARIOS = ("penrose", "linear", "kernel", "nonlinear", "full-report")

TWO_PI = 2.0 * math.pi
