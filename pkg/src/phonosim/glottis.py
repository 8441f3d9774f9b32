"""Vocal-fold physics: glottal areas, flow, pressures, forces and motion.

Every operation runs in one of two modes selected by the trailing sc
argument. sc=None picks the exact piecewise branches used by the reference
solver; passing SmoothingCoefficients substitutes the differentiable
approximations (softplus areas, sigmoid force gates, softplus driving
pressure) needed for gradient-based training. Smooth-mode code only touches
the generic math in autodiff, so it runs unchanged on arrays, Nodes and
jets; exact mode is plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

# Floor on the softened channel areas, in units of softplus output. Far into
# collision softplus underflows and 1/A^3 would overflow; the floor caps the
# viscous resistances near 1e48 so values and their gradients stay inside
# float64 range, while perturbing open areas by less than one part in 1e14.
AREA_EPS = float(np.exp(-30.0))


@dataclass
class FoldState:
    """Mass displacements and velocities."""

    x_1: object
    x_2: object
    v_1: object = 0.0
    v_2: object = 0.0

    def x_h(self, pp):
        """Deflections above the collision positions."""
        return self.x_1 - pp.x_min1, self.x_2 - pp.x_min2


@dataclass
class GlottalState:
    """Flow channel state at one time instant."""

    A_g1: object
    A_g2: object
    R_alpha: object
    R_beta: object
    R_gamma: object
    u_g: object
    p_11: object
    p_12: object
    p_21: object
    p_22: object
    p_1: object
    p_2: object


def glottal_areas(fs: FoldState, pp, sc=None):
    """Cross-sectional areas of the two flow channels."""
    x_h1, x_h2 = fs.x_h(pp)
    if sc is None:
        A_g1 = np.maximum(0.0, 2.0 * pp.l_g * x_h1)
        A_g2 = np.maximum(0.0, 2.0 * pp.l_g * x_h2)
    else:
        b = sc.beta_Ag
        A_g1 = 2.0 * pp.l_g * (ad.softplus(b * x_h1) + AREA_EPS) * (1.0 / b)
        A_g2 = 2.0 * pp.l_g * (ad.softplus(b * x_h2) + AREA_EPS) * (1.0 / b)
    return A_g1, A_g2


def _resistance_chain(A_g1, A_g2, pp, A_0):
    R_c = 1.37 * pp.rho / (2.0 * A_g1 * A_g1)
    R_v1 = 12.0 * pp.mu * pp.l_g ** 2 * pp.d_1 / (A_g1 * A_g1 * A_g1)
    R_12 = 0.5 * pp.rho * (1.0 / (A_g2 * A_g2) - 1.0 / (A_g1 * A_g1))
    R_v2 = 12.0 * pp.mu * pp.l_g ** 2 * pp.d_2 / (A_g2 * A_g2 * A_g2)
    R_e = -(pp.rho / (A_g2 * A_0)) * (1.0 - A_g2 / A_0)
    return R_c, R_v1, R_12, R_v2, R_e


def glottal_flow(fs: FoldState, p_0, pp, A_0, sc=None):
    """Flow, resistances and the pressure chain for one state.

    The flow follows from the quadratic R_alpha u^2 + R_beta u + R_gamma = 0.
    R_alpha is strictly positive for any channel areas, since

        R_alpha = rho [ 0.37/(2 A_g1^2)
                        + ((1/A_g2 - 1/A_0)^2)/2 + 1/(2 A_0^2) ],

    and R_gamma <= 0 by the no-backflow rule, so the positive root always
    exists and u_g >= 0. The root is evaluated in the rationalized form
    -2 R_gamma / (R_beta + sqrt(disc)), which avoids the catastrophic
    cancellation of -R_beta + sqrt(disc) when the channel is nearly closed
    and the resistances are huge. In exact mode a closed channel
    short-circuits the chain: u_g = 0, the pressures above the closure equal
    p_s and those below are 0, which is what the driving-force table expects.
    """
    A_g1, A_g2 = glottal_areas(fs, pp, sc)
    if sc is None:
        return _flow_exact(fs, A_g1, A_g2, p_0, pp, A_0)
    R_c, R_v1, R_12, R_v2, R_e = _resistance_chain(A_g1, A_g2, pp, A_0)
    R_alpha = R_c + R_12 + R_e
    R_beta = R_v1 + R_v2
    R_gamma = -ad.softplus(sc.beta_p * (pp.p_s - p_0)) * (1.0 / sc.beta_p)
    disc = R_beta * R_beta - 4.0 * R_alpha * R_gamma
    u_g = (-2.0 * R_gamma) / (R_beta + ad.sqrt(disc))
    u2 = u_g * u_g
    p_11 = pp.p_s - R_c * u2
    p_12 = p_11 - R_v1 * u_g
    p_21 = p_12 - R_12 * u2
    p_22 = p_21 - R_v2 * u_g
    p_1 = (p_11 + p_12) * 0.5
    p_2 = (p_21 + p_22) * 0.5
    return GlottalState(A_g1, A_g2, R_alpha, R_beta, R_gamma, u_g,
                        p_11, p_12, p_21, p_22, p_1, p_2)


def _flow_exact(fs, A_g1, A_g2, p_0, pp, A_0):
    x_h1, x_h2 = fs.x_h(pp)
    x_h1, x_h2, p_0 = np.broadcast_arrays(
        np.asarray(x_h1, float), np.asarray(x_h2, float), np.asarray(p_0, float))
    open_ = (x_h1 > 0.0) & (x_h2 > 0.0)
    # guard closed entries so the chain can be evaluated vectorized
    A1 = np.where(open_, A_g1, 1.0)
    A2 = np.where(open_, A_g2, 1.0)
    R_c, R_v1, R_12, R_v2, R_e = _resistance_chain(A1, A2, pp, A_0)
    R_alpha = R_c + R_12 + R_e
    R_beta = R_v1 + R_v2
    R_gamma = np.minimum(p_0 - pp.p_s, 0.0)  # no backflow
    disc = R_beta * R_beta - 4.0 * R_alpha * R_gamma
    u_g = np.where(open_, (-2.0 * R_gamma) / (R_beta + np.sqrt(disc)), 0.0)
    u2 = u_g * u_g
    p_11 = pp.p_s - R_c * u2
    p_12 = p_11 - R_v1 * u_g
    p_21 = p_12 - R_12 * u2
    p_22 = p_21 - R_v2 * u_g
    # closed-state conventions: p_s above the closure, 0 below
    closed1 = x_h1 <= 0.0
    closed2 = ~closed1 & (x_h2 <= 0.0)
    p_11 = np.where(open_, p_11, pp.p_s)
    p_12 = np.where(open_, p_12, pp.p_s)
    p_21 = np.where(open_, p_21, np.where(closed2, pp.p_s, 0.0))
    p_22 = np.where(open_, p_22, np.where(closed2, pp.p_s, 0.0))
    R_alpha = np.where(open_, R_alpha, 0.0)
    R_beta = np.where(open_, R_beta, 0.0)
    R_gamma = np.where(open_, R_gamma, 0.0)
    return GlottalState(A_g1, A_g2, R_alpha, R_beta, R_gamma, u_g,
                        p_11, p_12, p_21, p_22,
                        (p_11 + p_12) * 0.5, (p_21 + p_22) * 0.5)


def spring_force(j, x_j, pp, sc=None):
    """Restoring force on mass j, with the collision spring below contact."""
    if j == 1:
        k, eta_k, h, eta_h, x_min = pp.k_1, pp.eta_k1, pp.h_1, pp.eta_h1, pp.x_min1
    elif j == 2:
        k, eta_k, h, eta_h, x_min = pp.k_2, pp.eta_k2, pp.h_2, pp.eta_h2, pp.x_min2
    else:
        raise ValueError("mass index must be 1 or 2")
    x_h = x_j - x_min
    s_open = k * (x_j + eta_k * x_j * x_j * x_j)
    s_coll = h * (x_h + eta_h * x_h * x_h * x_h)
    if sc is None:
        return np.where(np.asarray(x_h) > 0.0, s_open, s_open + s_coll)
    return s_open + ad.sigmoid(-sc.beta_f * x_h) * s_coll


def driving_forces(fs: FoldState, gs: GlottalState, pp, sc=None):
    """Aerodynamic forces on the two masses."""
    if sc is None:
        x_h1, x_h2 = fs.x_h(pp)
        open1 = np.asarray(x_h1) > 0.0
        open2 = np.asarray(x_h2) > 0.0
        f_1 = pp.l_g * pp.d_1 * np.where(open1 & open2, gs.p_1, pp.p_s)
        f_2 = pp.l_g * pp.d_2 * np.where(
            open1 & open2, gs.p_2, np.where(open1 & ~open2, pp.p_s, 0.0))
        return f_1, f_2
    x_h1, x_h2 = fs.x_h(pp)
    s1 = ad.sigmoid(sc.beta_f * x_h1)
    s2 = ad.sigmoid(sc.beta_f * x_h2)
    both = s1 * s2
    f_1 = both * (pp.l_g * pp.d_1) * gs.p_1 \
        + (1.0 - both) * (pp.l_g * pp.d_1) * pp.p_s
    f_2 = both * (pp.l_g * pp.d_2) * gs.p_2 \
        + s1 * (1.0 - s2) * (pp.l_g * pp.d_2) * pp.p_s
    return f_1, f_2


def fold_acceleration(fs: FoldState, f, pp, sc=None):
    """Solve the equations of motion for the accelerations."""
    s_1 = spring_force(1, fs.x_1, pp, sc)
    s_2 = spring_force(2, fs.x_2, pp, sc)
    a_1 = (f[0] - pp.c_1 * fs.v_1 - s_1 - pp.k_c * (fs.x_1 - fs.x_2)) / pp.m_1
    a_2 = (f[1] - pp.c_2 * fs.v_2 - s_2 - pp.k_c * (fs.x_2 - fs.x_1)) / pp.m_2
    return a_1, a_2


def fold_residuals(fs: FoldState, a, f, pp, sc=None):
    """Equation-of-motion defects for given accelerations and forces."""
    s_1 = spring_force(1, fs.x_1, pp, sc)
    s_2 = spring_force(2, fs.x_2, pp, sc)
    r_1 = pp.m_1 * a[0] + pp.c_1 * fs.v_1 + s_1 + pp.k_c * (fs.x_1 - fs.x_2) - f[0]
    r_2 = pp.m_2 * a[1] + pp.c_2 * fs.v_2 + s_2 + pp.k_c * (fs.x_2 - fs.x_1) - f[1]
    return r_1, r_2
