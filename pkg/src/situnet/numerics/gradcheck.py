"""Central finite differences, used as an independent oracle for ``backward``."""

import numpy as np

from ..errors import OracleError


def finite_diff_grad(f, theta, h=1e-5):
    """Estimate the gradient of scalar ``f`` at ``theta`` coordinate by coordinate.

    ``theta`` is copied; ``f`` receives an array of the same shape.
    """
    theta = np.array(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(f(theta))
        flat[i] = old - h
        fm = float(f(theta))
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite function value at coordinate {i} "
                              f"(f(+h)={fp}, f(-h)={fm})")
        grad[i] = (fp - fm) / (2 * h)
    return grad.reshape(theta.shape)


def relative_error(a, b, floor=1e-8):
    """max |a - b| scaled by the larger of the two max magnitudes (or ``floor``)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    den = max(np.abs(a).max(), np.abs(b).max(), floor)
    return float(np.abs(a - b).max() / den)
