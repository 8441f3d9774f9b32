"""One-dimensional vocal-tract acoustics.

Residual forms of the lossy transmission-line equations, the wall-loss
coefficients, the open-end radiation condition and the two blending maps
that weld the glottal flow and (in inverse runs) a measured pressure into
the field as hard constraints. Partial derivatives are supplied by the
caller, so these formulas serve both the finite-difference solver checks
and the network training path; all math goes through autodiff's generic
functions and therefore accepts arrays, Nodes and jets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

_HALF_PI = 0.5 * np.pi


@dataclass
class WallLoss:
    """Per-unit-length series resistance and shunt conductance."""

    R: object  # Pa s / m^4 per unit length
    G: object  # m^3 / (Pa s) per unit length


@dataclass
class AcousticPoint:
    """Field values and partials at one (x, t)."""

    x: object
    t: object
    p: object
    u: object
    dp_dx: object = 0.0
    dp_dt: object = 0.0
    du_dx: object = 0.0
    du_dt: object = 0.0


def wall_loss(A, S, pp):
    """Viscous and thermal wall losses for area A and circumference S."""
    if np.any(np.asarray(ad.value_of(A)) <= 0) or np.any(np.asarray(ad.value_of(S)) <= 0):
        raise ValueError("area and circumference must be positive")
    R = pp.alpha_R * (S / (A * A)) * np.sqrt(pp.omega_c * pp.rho * pp.mu / 2.0)
    G = pp.alpha_G * S * ((pp.eta_air - 1.0) / (pp.rho * pp.c_air ** 2)) \
        * np.sqrt(pp.lambda_air * pp.omega_c / (2.0 * pp.c_p * pp.rho))
    return WallLoss(R, G)


def telegrapher_residuals(pt: AcousticPoint, A, wl: WallLoss, pp):
    """Defects of the two transmission-line equations at one point."""
    r_t1 = pt.du_dx + wl.G * pt.p + (A / pp.K) * pt.dp_dt
    r_t2 = pt.dp_dx + wl.R * pt.u + (pp.rho / A) * pt.du_dt
    return r_t1, r_t2


def radiation_load(A_l, pp):
    """Equivalent-circuit resistance and inertance of the open end."""
    R_r = 128.0 * pp.rho * pp.c_air / (9.0 * np.pi ** 2 * A_l)
    L_r = 8.0 * pp.rho / (3.0 * np.pi * np.sqrt(np.pi * A_l))
    return R_r, L_r


def radiation_residual(p_l, u_l, dpl_dt, dul_dt, A_l, pp):
    """Defect of the open-end condition L_r du/dt = p + (L_r/R_r) dp/dt."""
    if A_l <= 0:
        raise ValueError("open-end area must be positive")
    R_r, L_r = radiation_load(A_l, pp)
    return L_r * dul_dt - p_l - (L_r / R_r) * dpl_dt


def blend_pressure(p_tilde, p_data, x, l):
    """Pressure with the open-end value pinned to p_data.

    The weight is written as sin((pi/2)(1 - x/l)), identical to
    cos(pi x / 2l) but exact at both ends in floating point: the returned
    value equals p_tilde at x = 0 and p_data at x = l bit for bit. Passing
    p_data=None (or the same object as p_tilde) short-circuits to p_tilde,
    which is the forward-mode wiring.
    """
    if p_data is None or p_data is p_tilde:
        return p_tilde
    w = ad.sin(_HALF_PI * (1.0 - x * (1.0 / l)))
    return p_tilde * w + p_data * (1.0 - w)


def blend_velocity(u_tilde, u_g, x, l):
    """Volume velocity with the glottis value pinned at x = 0.

    Weight sin((pi/2) x/l); returns exactly u_g at x = 0 and exactly
    u_tilde at x = l.
    """
    w = ad.sin(_HALF_PI * (x * (1.0 / l)))
    return u_tilde * w + u_g * (1.0 - w)
