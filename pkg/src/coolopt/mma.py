"""Method of Moving Asymptotes for bound-constrained minimization.

With only box constraints the convex MMA approximation is separable, so each
coordinate's subproblem is solved in closed form.  The asymptote update and
the move limits follow the usual MMA choices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class MmaSettings:
    asyinit: float = 0.5
    asydecr: float = 0.7
    asyincr: float = 1.2
    move: float = 0.1
    albefa: float = 0.1
    raa0: float = 1e-5
    # asymptote distance limits as fractions of the variable range; the
    # usual lower limit of 0.01 lets oscillating coordinates settle into a
    # 2-cycle of amplitude ~0.009, larger than the stopping tolerance
    asymin: float = 1e-4
    asymax: float = 10.0

    def __post_init__(self):
        if not (0 < self.asydecr < 1 < self.asyincr):
            raise ValueError("need 0 < asydecr < 1 < asyincr")
        if not (0 < self.move <= 1 and 0 < self.asyinit and 0 < self.albefa < 1 and self.raa0 > 0
                and 0 < self.asymin < self.asyinit < self.asymax):
            raise ValueError("invalid MMA settings")


@dataclass(frozen=True)
class ConvergenceCriteria:
    tol_dx: float = 1e-3
    max_iters: int = 200

    def __post_init__(self):
        if not self.tol_dx > 0:
            raise ValueError("tol_dx must be > 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class MmaState:
    """Iterate history and asymptotes; ``low < x < upp`` holds component-wise."""

    x: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    low: np.ndarray
    upp: np.ndarray
    iteration: int = 0
    move: float = 0.1

    @classmethod
    def start(cls, x, lb=0.0, ub=1.0, settings: MmaSettings | None = None) -> "MmaState":
        settings = settings or MmaSettings()
        x = np.array(x, dtype=float)
        span = np.broadcast_to(np.asarray(ub, float) - np.asarray(lb, float), x.shape)
        return cls(x.copy(), x.copy(), x.copy(), x - settings.asyinit * span, x + settings.asyinit * span,
                   0, settings.move)

    def with_move(self, move: float) -> "MmaState":
        return replace(self, move=move)


def _bounds(x, lb, ub):
    lb = np.broadcast_to(np.asarray(lb, dtype=float), x.shape)
    ub = np.broadcast_to(np.asarray(ub, dtype=float), x.shape)
    if np.any(~np.isfinite(lb)) or np.any(~np.isfinite(ub)) or np.any(lb >= ub):
        raise ValueError("MMA bounds must be finite with lb < ub")
    return lb, ub


def mma_step(state: MmaState, x, J, grad, bounds=(0.0, 1.0),
             settings: MmaSettings | None = None) -> tuple[np.ndarray, MmaState]:
    """One MMA update from ``x`` with objective value ``J`` and gradient ``grad``.

    Returns the new iterate and the updated state.  Non-finite ``J`` or
    gradient entries raise ``ValueError``.
    """
    settings = settings or MmaSettings()
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != x.shape:
        raise ValueError("gradient and design vector differ in length")
    if not np.isfinite(J) or not np.all(np.isfinite(grad)):
        raise ValueError("non-finite objective or gradient passed to MMA")
    lb, ub = _bounds(x, *bounds)
    span = ub - lb
    k = state.iteration + 1

    x1, x2 = state.x1, state.x2
    if k <= 2:
        low = x - settings.asyinit * span
        upp = x + settings.asyinit * span
    else:
        trend = (x - x1) * (x1 - x2)
        factor = np.where(trend < 0, settings.asydecr, np.where(trend > 0, settings.asyincr, 1.0))
        low = x - factor * (x1 - state.low)
        upp = x + factor * (state.upp - x1)
        low = np.clip(low, x - settings.asymax * span, x - settings.asymin * span)
        upp = np.clip(upp, x + settings.asymin * span, x + settings.asymax * span)

    alpha = np.maximum.reduce([lb, low + settings.albefa * (x - low), x - state.move * span])
    beta = np.minimum.reduce([ub, upp - settings.albefa * (upp - x), x + state.move * span])

    gp, gm = np.maximum(grad, 0.0), np.maximum(-grad, 0.0)
    reg = settings.raa0 / span
    p = (upp - x) ** 2 * (1.001 * gp + 0.001 * gm + reg)
    q = (x - low) ** 2 * (0.001 * gp + 1.001 * gm + reg)
    sp_, sq = np.sqrt(p), np.sqrt(q)
    x_new = np.clip((sp_ * low + sq * upp) / (sp_ + sq), alpha, beta)
    # the stationary point is x itself when g = 0; avoid rounding drift
    x_new = np.where(grad == 0.0, np.clip(x, alpha, beta), x_new)

    new_state = MmaState(x_new.copy(), x.copy(), x1.copy(), low, upp, k, state.move)
    return x_new, new_state


def max_change(x_new, x_old) -> float:
    x_new, x_old = np.asarray(x_new, float), np.asarray(x_old, float)
    if x_new.shape != x_old.shape:
        raise ValueError("design vectors differ in length")
    return float(np.max(np.abs(x_new - x_old))) if x_new.size else 0.0


def converged(x_new, x_old, criteria: ConvergenceCriteria | None = None) -> bool:
    """True iff the max-norm design change is strictly below ``tol_dx``."""
    criteria = criteria or ConvergenceCriteria()
    return max_change(x_new, x_old) < criteria.tol_dx


def minimize(fun, x0, bounds=(0.0, 1.0), criteria: ConvergenceCriteria | None = None,
             settings: MmaSettings | None = None):
    """Drive ``mma_step`` on ``fun(x) -> (J, grad)``; returns ``(x, history)``."""
    criteria = criteria or ConvergenceCriteria()
    x = np.array(x0, dtype=float)
    state = MmaState.start(x, *bounds, settings)
    history = []
    for _ in range(criteria.max_iters):
        J, g = fun(x)
        x_new, state = mma_step(state, x, J, g, bounds, settings)
        dx = max_change(x_new, x)
        history.append((float(J), dx))
        x = x_new
        if dx < criteria.tol_dx:
            break
    return x, history
