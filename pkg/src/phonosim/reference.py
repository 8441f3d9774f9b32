"""Time-domain reference solution of the coupled fold-tract system.

Acoustics on a staggered grid (pressure at cell centres, volume velocity at
cell faces) with sequenced explicit updates: pressures first from the old
velocities, then interior velocities from the new pressures, which is the
usual leapfrog pairing and stable up to a Courant number of one. The open
end integrates the lumped radiation load; the glottal face carries the flow
solved from the fold state, with the fold masses advanced by classic RK4
holding the inlet pressure over the step. The kernel is numba-compiled;
this module prepares coefficient arrays and unpacks recordings.

A collocated forward-time centred-space variant ("ftcs") is kept for
comparison. Its growth factor exceeds one for every wavenumber at any
usable time step (the wall losses are far too weak to cancel the
second-order term), so it is expected to abort on the blow-up guard.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import glottis, tract
from .glottis import AREA_EPS

SCALAR_STRIDE = 17          # scalar recording decimation
FIELD_STRIDE = 289          # full-field snapshot decimation
FIELD_WINDOW = 0.012        # trailing seconds of field snapshots

_PH_FIELDS = ("p_s", "m_1", "m_2", "k_1", "k_2", "k_c", "c_1", "c_2",
              "eta_k1", "eta_k2", "h_1", "h_2", "eta_h1", "eta_h2",
              "x_min1", "x_min2", "d_1", "d_2", "l_g", "rho", "mu")
PhysArgs = namedtuple("PhysArgs", _PH_FIELDS)


def _phys_args(pp):
    return PhysArgs(*[float(getattr(pp, nm)) for nm in _PH_FIELDS])


@njit(cache=True)
def _sp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _sg(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    t = math.exp(x)
    return t / (1.0 + t)


@njit(cache=True)
def _flow_scalar(x1, x2, p0, A0, ph, smooth, bA, bp):
    """Glottal flow and mean channel pressures for one state."""
    xh1 = x1 - ph.x_min1
    xh2 = x2 - ph.x_min2
    if smooth:
        Ag1 = 2.0 * ph.l_g * (_sp(bA * xh1) + AREA_EPS) * (1.0 / bA)
        Ag2 = 2.0 * ph.l_g * (_sp(bA * xh2) + AREA_EPS) * (1.0 / bA)
    else:
        if xh1 <= 0.0:
            return 0.0, ph.p_s, 0.0
        if xh2 <= 0.0:
            return 0.0, ph.p_s, ph.p_s
        Ag1 = 2.0 * ph.l_g * xh1
        Ag2 = 2.0 * ph.l_g * xh2
    R_c = 1.37 * ph.rho / (2.0 * Ag1 * Ag1)
    R_v1 = 12.0 * ph.mu * ph.l_g ** 2 * ph.d_1 / (Ag1 * Ag1 * Ag1)
    R_12 = 0.5 * ph.rho * (1.0 / (Ag2 * Ag2) - 1.0 / (Ag1 * Ag1))
    R_v2 = 12.0 * ph.mu * ph.l_g ** 2 * ph.d_2 / (Ag2 * Ag2 * Ag2)
    R_e = -(ph.rho / (Ag2 * A0)) * (1.0 - Ag2 / A0)
    R_alpha = R_c + R_12 + R_e
    R_beta = R_v1 + R_v2
    if smooth:
        R_gamma = -_sp(bp * (ph.p_s - p0)) / bp
    else:
        R_gamma = p0 - ph.p_s
        if R_gamma > 0.0:
            R_gamma = 0.0
    disc = R_beta * R_beta - 4.0 * R_alpha * R_gamma
    u = (-2.0 * R_gamma) / (R_beta + math.sqrt(disc))
    u2 = u * u
    p_11 = ph.p_s - R_c * u2
    p_12 = p_11 - R_v1 * u
    p_21 = p_12 - R_12 * u2
    p_22 = p_21 - R_v2 * u
    return u, 0.5 * (p_11 + p_12), 0.5 * (p_21 + p_22)


@njit(cache=True)
def _fold_rhs(x1, v1, x2, v2, p0, A0, ph, smooth, bA, bf, bp):
    u, p1, p2 = _flow_scalar(x1, x2, p0, A0, ph, smooth, bA, bp)
    xh1 = x1 - ph.x_min1
    xh2 = x2 - ph.x_min2
    lgd1 = ph.l_g * ph.d_1
    lgd2 = ph.l_g * ph.d_2
    if smooth:
        s1 = _sg(bf * xh1)
        s2 = _sg(bf * xh2)
        both = s1 * s2
        f1 = both * lgd1 * p1 + (1.0 - both) * lgd1 * ph.p_s
        f2 = both * lgd2 * p2 + s1 * (1.0 - s2) * lgd2 * ph.p_s
    else:
        if xh1 > 0.0 and xh2 > 0.0:
            f1 = lgd1 * p1
            f2 = lgd2 * p2
        elif xh1 <= 0.0:
            f1 = lgd1 * ph.p_s
            f2 = 0.0
        else:
            f1 = lgd1 * ph.p_s
            f2 = lgd2 * ph.p_s
    sp1 = ph.k_1 * (x1 + ph.eta_k1 * x1 * x1 * x1)
    sp2 = ph.k_2 * (x2 + ph.eta_k2 * x2 * x2 * x2)
    if smooth:
        sp1 = sp1 + _sg(-bf * xh1) * ph.h_1 * (xh1 + ph.eta_h1 * xh1 * xh1 * xh1)
        sp2 = sp2 + _sg(-bf * xh2) * ph.h_2 * (xh2 + ph.eta_h2 * xh2 * xh2 * xh2)
    else:
        if xh1 <= 0.0:
            sp1 = sp1 + ph.h_1 * (xh1 + ph.eta_h1 * xh1 * xh1 * xh1)
        if xh2 <= 0.0:
            sp2 = sp2 + ph.h_2 * (xh2 + ph.eta_h2 * xh2 * xh2 * xh2)
    a1 = (f1 - ph.c_1 * v1 - sp1 - ph.k_c * (x1 - x2)) / ph.m_1
    a2 = (f2 - ph.c_2 * v2 - sp2 - ph.k_c * (x2 - x1)) / ph.m_2
    return v1, a1, v2, a2


@njit(cache=True)
def _guard(x1, p0, p_l):
    if not (math.isfinite(x1) and math.isfinite(p0) and math.isfinite(p_l)):
        return True
    return abs(x1) > 1.0 or abs(p0) > 1.0e9 or abs(p_l) > 1.0e9


@njit(cache=True)
def _staggered_kernel(n_steps, dt, p, u, y,
                      cp_du, cp_g, cu_dp, cu_r, A0, R_r, L_r,
                      ph, smooth, bA, bf, bp,
                      stride, scal, f_start, f_stride, fp, fu, ftimes):
    N = p.shape[0]
    x1, v1, x2, v2 = y[0], y[1], y[2], y[3]
    p_l_prev = p[N - 1]
    rec = 0
    frame = 0
    half = 0.5 * dt
    sixth = dt / 6.0
    for step in range(n_steps):
        for i in range(N):
            p[i] -= cp_du[i] * (u[i + 1] - u[i]) + cp_g[i] * p[i]
        for i in range(1, N):
            u[i] -= cu_dp[i] * (p[i] - p[i - 1]) + cu_r[i] * u[i]
        p_l = p[N - 1]
        u[N] += dt * p_l / L_r + (p_l - p_l_prev) / R_r
        p_l_prev = p_l
        p0 = p[0]
        ax1, av1, ax2, av2 = _fold_rhs(x1, v1, x2, v2, p0,
                                       A0, ph, smooth, bA, bf, bp)
        bx1, bv1, bx2, bv2 = _fold_rhs(x1 + half * ax1, v1 + half * av1,
                                       x2 + half * ax2, v2 + half * av2, p0,
                                       A0, ph, smooth, bA, bf, bp)
        cx1, cv1, cx2, cv2 = _fold_rhs(x1 + half * bx1, v1 + half * bv1,
                                       x2 + half * bx2, v2 + half * bv2, p0,
                                       A0, ph, smooth, bA, bf, bp)
        dx1, dv1, dx2, dv2 = _fold_rhs(x1 + dt * cx1, v1 + dt * cv1,
                                       x2 + dt * cx2, v2 + dt * cv2, p0,
                                       A0, ph, smooth, bA, bf, bp)
        x1 += sixth * (ax1 + 2.0 * (bx1 + cx1) + dx1)
        v1 += sixth * (av1 + 2.0 * (bv1 + cv1) + dv1)
        x2 += sixth * (ax2 + 2.0 * (bx2 + cx2) + dx2)
        v2 += sixth * (av2 + 2.0 * (bv2 + cv2) + dv2)
        ug, _, _ = _flow_scalar(x1, x2, p0, A0, ph, smooth, bA, bp)
        u[0] = ug
        s1 = step + 1
        if s1 % stride == 0:
            if _guard(x1, p0, p_l):
                return 1, step, rec, frame
            scal[rec, 0] = s1 * dt
            scal[rec, 1] = x1
            scal[rec, 2] = v1
            scal[rec, 3] = x2
            scal[rec, 4] = v2
            scal[rec, 5] = ug
            scal[rec, 6] = p0
            scal[rec, 7] = p_l
            scal[rec, 8] = u[N]
            rec += 1
        if s1 >= f_start and (s1 - f_start) % f_stride == 0 \
                and frame < fp.shape[0]:
            for i in range(N):
                fp[frame, i] = p[i]
            for i in range(N + 1):
                fu[frame, i] = u[i]
            ftimes[frame] = s1 * dt
            frame += 1
    y[0], y[1], y[2], y[3] = x1, v1, x2, v2
    return 0, n_steps, rec, frame


@njit(cache=True)
def _ftcs_kernel(n_steps, dt, dx, p, u, y, A_n, R_n, G_n, Kmod, rho,
                 A0, R_r, L_r, ph, smooth, bA, bf, bp, stride, scal):
    # collocated grid: p and u both on the nodes, simultaneous Euler update
    N = p.shape[0] - 1
    x1, v1, x2, v2 = y[0], y[1], y[2], y[3]
    half = 0.5 * dt
    sixth = dt / 6.0
    rec = 0
    pn = np.empty(N + 1)
    un = np.empty(N + 1)
    for step in range(n_steps):
        for i in range(N + 1):
            pn[i] = p[i]
            un[i] = u[i]
        for i in range(1, N):
            p[i] = pn[i] - dt * (Kmod / A_n[i]) \
                * ((un[i + 1] - un[i - 1]) / (2.0 * dx) + G_n[i] * pn[i])
            u[i] = un[i] - dt * (A_n[i] / rho) \
                * ((pn[i + 1] - pn[i - 1]) / (2.0 * dx) + R_n[i] * un[i])
        p[0] = pn[0] - dt * (Kmod / A_n[0]) \
            * ((un[1] - un[0]) / dx + G_n[0] * pn[0])
        p[N] = pn[N] - dt * (Kmod / A_n[N]) \
            * ((un[N] - un[N - 1]) / dx + G_n[N] * pn[N])
        u[N] = un[N] + dt * p[N] / L_r + (p[N] - pn[N]) / R_r
        p0 = p[0]
        ax1, av1, ax2, av2 = _fold_rhs(x1, v1, x2, v2, p0,
                                       A0, ph, smooth, bA, bf, bp)
        bx1, bv1, bx2, bv2 = _fold_rhs(x1 + half * ax1, v1 + half * av1,
                                       x2 + half * ax2, v2 + half * av2, p0,
                                       A0, ph, smooth, bA, bf, bp)
        cx1, cv1, cx2, cv2 = _fold_rhs(x1 + half * bx1, v1 + half * bv1,
                                       x2 + half * bx2, v2 + half * bv2, p0,
                                       A0, ph, smooth, bA, bf, bp)
        dx1s, dv1, dx2s, dv2 = _fold_rhs(x1 + dt * cx1, v1 + dt * cv1,
                                         x2 + dt * cx2, v2 + dt * cv2, p0,
                                         A0, ph, smooth, bA, bf, bp)
        x1 += sixth * (ax1 + 2.0 * (bx1 + cx1) + dx1s)
        v1 += sixth * (av1 + 2.0 * (bv1 + cv1) + dv1)
        x2 += sixth * (ax2 + 2.0 * (bx2 + cx2) + dx2s)
        v2 += sixth * (av2 + 2.0 * (bv2 + cv2) + dv2)
        ug, _, _ = _flow_scalar(x1, x2, p0, A0, ph, smooth, bA, bp)
        u[0] = ug
        s1 = step + 1
        if s1 % stride == 0:
            if _guard(x1, p0, p[N]):
                return 1, step, rec, 0
            scal[rec, 0] = s1 * dt
            scal[rec, 1] = x1
            scal[rec, 2] = v1
            scal[rec, 3] = x2
            scal[rec, 4] = v2
            scal[rec, 5] = ug
            scal[rec, 6] = p0
            scal[rec, 7] = p[N]
            scal[rec, 8] = u[N]
            rec += 1
    y[0], y[1], y[2], y[3] = x1, v1, x2, v2
    return 0, n_steps, rec, 0


@dataclass
class ReferenceRun:
    """Decimated recordings of one time-domain simulation."""

    t: np.ndarray
    x_1: np.ndarray
    v_1: np.ndarray
    x_2: np.ndarray
    v_2: np.ndarray
    u_g: np.ndarray
    p_0: np.ndarray
    p_l: np.ndarray
    u_l: np.ndarray
    dt: float
    dx: float
    scheme: str
    x_cells: np.ndarray
    x_faces: np.ndarray
    field_t: np.ndarray
    p_frames: np.ndarray      # (frames, cells)
    u_frames: np.ndarray      # (frames, faces)

    def series(self, key):
        return getattr(self, key)


def run_reference(pp, af, rc, sc=None, scheme="staggered", x0=None):
    """Simulate the coupled system for rc.duration seconds.

    sc=None runs the exact piecewise physics; passing SmoothingCoefficients
    runs the smoothed physics with the same integrator. x0 optionally sets
    the initial fold state (x_1, v_1, x_2, v_2); default is rest.
    """
    dx, dt = float(rc.dx), float(rc.dt)
    if dx <= 0 or dt <= 0:
        raise ValueError("dx and dt must be positive")
    N = int(round(af.l / dx))
    if N < 8 or abs(N * dx - af.l) > 1e-9 * af.l:
        raise ValueError("dx must divide the tract length")
    c = math.sqrt(pp.K / pp.rho)
    if dt >= dx / c:
        raise ValueError(f"time step too large: need dt < {dx / c:.3e}")
    n_steps = int(round(rc.duration / dt))
    if n_steps < SCALAR_STRIDE:
        raise ValueError("duration shorter than one recording interval")

    x_faces = dx * np.arange(N + 1)
    x_cells = dx * (np.arange(N) + 0.5)
    A_cell = af.area(x_cells)
    A_face = af.area(x_faces)
    S_cell = 2.0 * np.sqrt(np.pi * A_cell)
    S_face = 2.0 * np.sqrt(np.pi * A_face)
    G_cell = tract.wall_loss(A_cell, S_cell, pp).G
    R_face = tract.wall_loss(A_face, S_face, pp).R
    A0 = float(A_face[0])
    R_r, L_r = tract.radiation_load(float(A_face[-1]), pp)

    p = np.zeros(N)
    u = np.zeros(N + 1)
    y = np.zeros(4)
    if x0 is not None:
        y[:] = x0
    ph = _phys_args(pp)
    smooth = sc is not None
    bA = float(sc.beta_Ag) if smooth else 1.0
    bf = float(sc.beta_f) if smooth else 1.0
    bp = float(sc.beta_p) if smooth else 1.0

    n_rec = n_steps // SCALAR_STRIDE
    scal = np.empty((n_rec, 9))

    if scheme == "staggered":
        cp_du = dt * pp.K / (A_cell * dx)
        cp_g = dt * pp.K * G_cell / A_cell
        cu_dp = dt * A_face / (pp.rho * dx)
        cu_r = dt * A_face * R_face / pp.rho
        window = min(n_steps, int(round(FIELD_WINDOW / dt)))
        f_start = max(1, n_steps - window)
        n_frames = (n_steps - f_start) // FIELD_STRIDE + 1
        fp = np.empty((n_frames, N))
        fu = np.empty((n_frames, N + 1))
        ftimes = np.empty(n_frames)
        status, at, rec, frame = _staggered_kernel(
            n_steps, dt, p, u, y, cp_du, cp_g, cu_dp, cu_r, A0, R_r, L_r,
            ph, smooth, bA, bf, bp, SCALAR_STRIDE, scal,
            f_start, FIELD_STRIDE, fp, fu, ftimes)
    elif scheme == "ftcs":
        A_n = A_face
        R_n = R_face
        G_n = tract.wall_loss(A_face, S_face, pp).G
        fp = np.empty((0, N))
        fu = np.empty((0, N + 1))
        ftimes = np.empty(0)
        frame = 0
        status, at, rec, _ = _ftcs_kernel(
            n_steps, dt, dx, np.zeros(N + 1), u, y, A_n, R_n, G_n,
            float(pp.K), float(pp.rho), A0, R_r, L_r,
            ph, smooth, bA, bf, bp, SCALAR_STRIDE, scal)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    if status != 0:
        raise RuntimeError(f"solution blew up at step {at} "
                           f"(t = {at * dt:.6e} s, scheme {scheme!r})")
    scal = scal[:rec]
    return ReferenceRun(
        t=scal[:, 0].copy(), x_1=scal[:, 1].copy(), v_1=scal[:, 2].copy(),
        x_2=scal[:, 3].copy(), v_2=scal[:, 4].copy(), u_g=scal[:, 5].copy(),
        p_0=scal[:, 6].copy(), p_l=scal[:, 7].copy(), u_l=scal[:, 8].copy(),
        dt=dt, dx=dx, scheme=scheme, x_cells=x_cells, x_faces=x_faces,
        field_t=ftimes[:frame], p_frames=fp[:frame], u_frames=fu[:frame])


# ---------------------------------------------------------------------------
# period and cycle extraction

def extract_period(t, y):
    """Fundamental period of a uniformly sampled signal.

    The autocorrelation peak after the first sign change gives a coarse lag
    and gates on clear periodicity (normalized peak at least 0.5); the
    fundamental frequency is then read off the zero-padded windowed spectrum
    near the coarse value, which is accurate to a small fraction of a sample.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    n = y.size
    if n < 32:
        raise ValueError("signal too short for period estimation")
    dts = np.diff(t)
    step = dts[0]
    if not np.allclose(dts, step, rtol=1e-6):
        raise ValueError("samples must be uniformly spaced")
    y0 = y - y.mean()
    m = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(y0, m)
    ac = np.fft.irfft(f * np.conj(f), m)[:n]
    if ac[0] <= 0.0:
        raise ValueError("signal has no variance")
    ac = ac / ac[0]
    neg = np.nonzero(ac < 0.0)[0]
    if neg.size == 0 or neg[0] >= n // 2:
        raise ValueError("no periodicity found")
    k0 = int(neg[0])
    k = k0 + int(np.argmax(ac[k0:n // 2]))
    if ac[k] < 0.5:
        raise ValueError(f"no dominant period (peak {ac[k]:.3f})")
    # the time-domain peak is biased by a sample or two at long lags, so
    # sharpen it in the frequency domain: peak of the Hann-windowed spectrum,
    # zero-padded eightfold, with log-parabolic interpolation
    mz = 1 << int(np.ceil(np.log2(8 * n)))
    mag = np.abs(np.fft.rfft(y0 * np.hanning(n), mz))
    freqs = np.fft.rfftfreq(mz, step)
    f_c = 1.0 / (k * step)
    band = np.nonzero((freqs > 0.7 * f_c) & (freqs < 1.4 * f_c))[0]
    j = int(band[np.argmax(mag[band])])
    lm = np.log(np.maximum(mag[j - 1:j + 2], 1e-300))
    denom = lm[0] - 2.0 * lm[1] + lm[2]
    delta = 0.0
    if denom < 0.0:
        delta = float(np.clip(0.5 * (lm[0] - lm[2]) / denom, -0.5, 0.5))
    return mz * step / (j + delta)


@dataclass
class SteadyCycle:
    """One averaged oscillation cycle on a uniform phase grid."""

    T: float
    t0: float                # absolute time of phase zero
    phase: np.ndarray        # n points in [0, 1)
    cycles: dict             # key -> averaged samples over the cycle
    deviation: dict          # key -> worst adjacent-cycle relative RMS gap
    n_cycles: int


CYCLE_KEYS = ("x_1", "v_1", "x_2", "v_2", "u_g", "p_0", "p_l", "u_l")


def extract_steady_cycle(run: ReferenceRun, transient, n_phase=256,
                         keys=CYCLE_KEYS):
    """Average the post-transient oscillation onto one phase-locked cycle.

    Phase zero is the first upward mean crossing of x_1 after the transient.
    The deviation entries compare adjacent raw cycles, normalized by the
    RMS swing of the averaged cycle, so a converged limit cycle shows small
    values for every recorded quantity.
    """
    mask = run.t >= transient
    if int(mask.sum()) < 64:
        raise ValueError("analysis window too short")
    t = run.t[mask]
    T = extract_period(t, run.u_g[mask])
    xc = run.x_1[mask]
    xc = xc - xc.mean()
    up = np.nonzero((xc[:-1] < 0.0) & (xc[1:] >= 0.0))[0]
    if up.size == 0:
        raise ValueError("no oscillation in the analysis window")
    i = int(up[0])
    t0 = t[i] + (t[i + 1] - t[i]) * (-xc[i]) / (xc[i + 1] - xc[i])
    n_cyc = int((t[-1] - t0) / T)
    if n_cyc < 3:
        raise ValueError("need at least three full cycles after the transient")
    phase = np.arange(n_phase) / n_phase
    cycles = {}
    deviation = {}
    for key in keys:
        series = run.series(key)[mask]
        stack = np.empty((n_cyc, n_phase))
        for j in range(n_cyc):
            stack[j] = np.interp(t0 + (j + phase) * T, t, series)
        mean = stack.mean(axis=0)
        scale = float(np.sqrt(np.mean((mean - mean.mean()) ** 2)))
        scale = max(scale, 1e-12 * max(1.0, float(np.abs(mean).max())))
        gaps = np.sqrt(np.mean((stack[1:] - stack[:-1]) ** 2, axis=1))
        cycles[key] = mean
        deviation[key] = float(gaps.max() / scale)
    return SteadyCycle(T=T, t0=t0, phase=phase, cycles=cycles,
                       deviation=deviation, n_cycles=n_cyc)


def smoothing_deviation(cycle: SteadyCycle, pp, A_0, sc):
    """Relative RMS gap between smoothed and exact glottal flow.

    Evaluates both flow models on the recorded cycle states (x_1, x_2, p_0),
    so the comparison isolates the smoothing error from any trajectory
    drift.
    """
    fs = glottis.FoldState(cycle.cycles["x_1"], cycle.cycles["x_2"])
    p0 = cycle.cycles["p_0"]
    exact = glottis.glottal_flow(fs, p0, pp, A_0)
    smooth = glottis.glottal_flow(fs, p0, pp, A_0, sc)
    num = float(np.sqrt(np.mean((smooth.u_g - exact.u_g) ** 2)))
    den = float(np.sqrt(np.mean(exact.u_g ** 2)))
    return num / den
