"""Pure-numpy stencil kernels; the reference for the compiled ``_stencil`` module.

Array layout is ``[i1, i2]``. Coefficient arrays ``a11``/``a12`` sit on
x1-faces ``(i+1/2, j)``, ``a21``/``a22`` on x2-faces ``(i, j+1/2)``.
"""

import numpy as np


def _fluxes(u, a11, a12, a21, a22, h1, h2, g1, g2):
    up1 = np.roll(u, -1, axis=0)
    um1 = np.roll(u, 1, axis=0)
    # centered x2-differences at nodes, then averaged onto x1-faces
    c2 = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2.0 * h2)
    c1 = (up1 - um1) / (2.0 * h1)
    F1 = a11 * (g1 + (up1 - u) / h1) + a12 * (g2 + 0.5 * (c2 + np.roll(c2, -1, axis=0)))
    F2 = a21 * (g1 + 0.5 * (c1 + np.roll(c1, -1, axis=1))) + a22 * (g2 + (np.roll(u, -1, axis=1) - u) / h2)
    return F1, F2


def flux_divergence(u, a11, a12, a21, a22, h1, h2, g1, g2, per1, per2):
    F1, F2 = _fluxes(u, a11, a12, a21, a22, h1, h2, g1, g2)
    out = (F1 - np.roll(F1, 1, axis=0)) / h1 + (F2 - np.roll(F2, 1, axis=1)) / h2
    if not per1:
        out[[0, -1], :] = 0.0
    if not per2:
        out[:, [0, -1]] = 0.0
    return out


def flux_average(u, a11, a12, a21, a22, h1, h2, g1, g2):
    F1, F2 = _fluxes(u, a11, a12, a21, a22, h1, h2, g1, g2)
    return float(np.mean(F1)), float(np.mean(F2))


def micro_relax(w, a11, a12, a21, a22, h1, h2, g1, g2, dt, tol, max_steps):
    """Forward-Euler relaxation of ``dw/dt = div(A (G + grad w))`` in place.

    Returns ``(steps, residual)`` where residual is ``max|dw/dt|`` of the last step.
    """
    res = np.inf
    for step in range(1, max_steps + 1):
        rate = flux_divergence(w, a11, a12, a21, a22, h1, h2, g1, g2, True, True)
        w += dt * rate
        res = float(np.max(np.abs(rate)))
        if res < tol:
            return step, res
    return max_steps, res


def advdiff_rhs(u, U, V, kappa, h1, h2, per1, per2):
    """``kappa*lap(u) - div(v u)`` with face velocities ``U`` (x1-faces) and ``V`` (x2-faces)."""
    up1 = np.roll(u, -1, axis=0)
    um1 = np.roll(u, 1, axis=0)
    vp1 = np.roll(u, -1, axis=1)
    vm1 = np.roll(u, 1, axis=1)
    lap = (up1 - 2.0 * u + um1) / (h1 * h1) + (vp1 - 2.0 * u + vm1) / (h2 * h2)
    fx = U * 0.5 * (u + up1)
    fy = V * 0.5 * (u + vp1)
    adv = (fx - np.roll(fx, 1, axis=0)) / h1 + (fy - np.roll(fy, 1, axis=1)) / h2
    out = kappa * lap - adv
    if not per1:
        out[[0, -1], :] = 0.0
    if not per2:
        out[:, [0, -1]] = 0.0
    return out
