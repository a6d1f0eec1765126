"""Simulation and statistics for a torus billiard with a randomly re-centred disk."""

import os as _os

# the TBB layer shipped with some numba wheels is too old; pick a portable one
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
