"""Damped Newton ascent shared by the logistic, MIPW and balancing solvers."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, SeparationError


@dataclass
class NewtonResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    values: list = field(default_factory=list)


def _ascent_direction(grad, hess):
    # Newton step when -H is positive definite; otherwise shift the spectrum.
    neg = -hess
    ridge = 0.0
    scale = max(np.abs(np.diag(neg)).max(), 1e-12)
    for _ in range(60):
        try:
            factor = linalg.cho_factor(neg + ridge * np.eye(len(grad)), check_finite=False)
            step = linalg.cho_solve(factor, grad, check_finite=False)
            if np.all(np.isfinite(step)):
                return step
        except linalg.LinAlgError:
            pass
        ridge = scale * 1e-8 if ridge == 0.0 else ridge * 10.0
    return grad / scale


def maximize(terms, x0, *, tol, scale=1.0, max_iter=100, max_norm=None, what="solver"):
    """Maximize a smooth concave-ish function given ``terms(x) -> (f, g, H)``.

    Stops once ``||g|| / scale < tol``.  Backtracking halves the step until the
    objective does not decrease.  With ``max_norm`` set, an iterate whose norm
    exceeds it raises :class:`SeparationError`.
    """
    x = np.array(x0, dtype=float)
    f, g, H = terms(x)
    history = [float(np.linalg.norm(g) / scale)]
    values = [float(f)]
    for it in range(max_iter + 1):
        gnorm = np.linalg.norm(g) / scale
        if gnorm < tol:
            return NewtonResult(x, f, g, H, it, True, history, values)
        if it == max_iter:
            break
        step = _ascent_direction(g, H)
        t = 1.0
        accepted = False
        for _ in range(60):
            xn = x + t * step
            fn, gn, Hn = terms(xn)
            if np.isfinite(fn) and fn >= f - 1e-13 * max(1.0, abs(f)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        x, f, g, H = xn, fn, gn, Hn
        history.append(float(np.linalg.norm(g) / scale))
        values.append(float(f))
        if max_norm is not None and np.linalg.norm(x) > max_norm:
            raise SeparationError(
                f"{what}: coefficient norm exceeded {max_norm:g}; separation suspected",
                trace={"x": x, "grad_norm": history[-1], "iterations": it + 1},
            )
    raise ConvergenceError(
        f"{what}: no convergence after {len(history) - 1} iterations "
        f"(scaled gradient norm {history[-1]:.3g}, tolerance {tol:g})",
        trace={"x": x, "grad_norm": history[-1], "iterations": len(history) - 1,
               "history": history},
    )
