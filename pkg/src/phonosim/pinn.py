"""Neural solver for one steady oscillation cycle of the coupled model.

Two small residual networks share a periodic Fourier embedding of the cycle
phase: one maps phase to the two fold displacements, the other maps (place,
phase) to acoustic pressure and volume velocity in the tract. The cycle
period (forward mode) or the subglottal pressure (inverse mode) enters as
one extra trainable scalar. The loss collects equation defects at scrambled
Sobol collocation points: fold equations of motion, the two transmission
line equations and the radiation condition. Output transforms enforce the
rest exactly rather than by penalty: periodicity in time, the glottal flow
at the tract entrance, and the target mouth pressure in inverse mode.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import autodiff as ad
from . import geometry, glottis, tract
from .params import SmoothingCoefficients

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# The trainable physical scalar may move within this multiple of its
# initial guess; updates are clipped to the band.
SCALAR_FLOOR = 0.2
SCALAR_CEIL = 5.0


# ---------------------------------------------------------------------------
# input embedding

def scale_inputs(x, t, l, T):
    """Map physical place and time to normalized (x*, t*).

    x in [0, l] maps to x* in [-1, 1]; time maps one period [0, T] to
    t* in [-1, 1] without wrapping (the embedding wraps later).
    """
    if l <= 0.0 or T <= 0.0:
        raise ValueError("length and period must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > l):
        raise ValueError("position outside the tract")
    return 2.0 * x * (1.0 / l) - 1.0, 2.0 * np.asarray(t, float) * (1.0 / T) - 1.0


def _wrap_phase(t_star):
    """Shift t* by an even integer into [0, 2).

    The shift is computed from the plain value and added as a constant, so
    derivatives pass through untouched and t* = -1 and t* = +1 land on the
    same point (0.0) bit for bit.
    """
    v = np.asarray(ad.value_of(t_star), dtype=float)
    shift = 1.0 - 2.0 * np.floor((v + 1.0) * 0.5)
    return t_star + shift


def _feature_columns(t_star, m):
    u2 = _wrap_phase(t_star)
    cols = []
    for k in range(1, m + 1):
        ang = u2 * (np.pi * k)
        c, s = ad.cos(ang), ad.sin(ang)
        if k % 2:
            # undo the sign flip of the half-period shift in _wrap_phase
            c, s = -c, -s
        cols.append(c)
        cols.append(s)
    return cols


def fourier_features(t_star, m):
    """Columns cos(k pi t*), sin(k pi t*) for k = 1..m.

    Built on the wrapped phase, so the rows for t* and t* + 2 are bitwise
    identical and the networks are exactly periodic in time.
    """
    if m < 1:
        raise ValueError("need at least one harmonic")
    return ad.stack_cols(_feature_columns(t_star, m))


def snake(z, a=1.0):
    """Activation z + sin^2(az)/a: monotone-biased with a periodic ripple."""
    if a <= 0.0:
        raise ValueError("snake frequency must be positive")
    s = ad.sin(z * a)
    return z + s * s * (1.0 / a)


# ---------------------------------------------------------------------------
# model

@dataclass
class PinnModel:
    """Network weights plus the fixed settings needed to evaluate them."""

    mode: str
    m: int
    width: int
    n_fold_blocks: int
    n_tract_blocks: int
    snake_a: float
    x_scale: float
    p_scale: float
    u_scale: float
    T_init: float
    ps_init: float
    scalar_scale: float
    sc: SmoothingCoefficients
    params: dict

    def period(self, params=None):
        """Cycle period implied by the scalar; T_init when not trainable."""
        p = self.params if params is None else params
        if "theta_T" not in p:
            return self.T_init
        return self.T_init * (1.0 + self.scalar_scale * p["theta_T"])

    def pressure(self, params=None):
        """Subglottal pressure estimate, or None outside inverse mode."""
        p = self.params if params is None else params
        if "theta_ps" not in p:
            return None
        return self.ps_init * (1.0 + self.scalar_scale * p["theta_ps"])


def build_model(sc, rc, rng=None):
    """Initialize both networks and the trainable scalar from rc.

    Weights are Glorot uniform, biases zero; forward mode carries theta_T,
    inverse mode theta_ps, both starting at zero (the initial guess).
    """
    if rc.mode not in ("forward", "inverse"):
        raise ValueError(f"no trainable model for mode {rc.mode!r}")
    if rng is None:
        rng = np.random.default_rng()
    params = {}

    def layer(name, n_in, n_out):
        lim = np.sqrt(6.0 / (n_in + n_out))
        params[name + ".W"] = rng.uniform(-lim, lim, size=(n_in, n_out))
        params[name + ".b"] = np.zeros(n_out)

    for prefix, blocks, n_in in (("fold", rc.N_FB, 2 * rc.m),
                                 ("tract", rc.N_TB, 1 + 2 * rc.m)):
        layer(prefix + ".in", n_in, rc.width)
        for i in range(1, blocks + 1):
            layer(f"{prefix}.b{i}", rc.width, rc.width)
        layer(prefix + ".out", rc.width, 2)
    scalar = "theta_T" if rc.mode == "forward" else "theta_ps"
    params[scalar] = np.zeros(())
    return PinnModel(mode=rc.mode, m=rc.m, width=rc.width,
                     n_fold_blocks=rc.N_FB, n_tract_blocks=rc.N_TB,
                     snake_a=1.0, x_scale=rc.x_scale, p_scale=rc.p_scale,
                     u_scale=rc.u_scale, T_init=rc.T_init, ps_init=rc.ps_init,
                     scalar_scale=rc.scalar_scale, sc=sc, params=params)


def network_forward(model, params, t_star, x_star=None):
    """Evaluate the fold network (x_star None) or the tract network.

    t_star and x_star are 1-D carriers (arrays, jets or tape nodes of equal
    length). Returns the two output channels in physical units: fold
    displacements (x_1, x_2) or tract fields (p, u).
    """
    cols = _feature_columns(t_star, model.m)
    if x_star is None:
        prefix, blocks = "fold", model.n_fold_blocks
    else:
        cols = [x_star] + cols
        prefix, blocks = "tract", model.n_tract_blocks
    h = ad.stack_cols(cols)
    h = snake(h @ params[prefix + ".in.W"] + params[prefix + ".in.b"],
              model.snake_a)
    for i in range(1, blocks + 1):
        h = h + snake(h @ params[f"{prefix}.b{i}.W"]
                      + params[f"{prefix}.b{i}.b"], model.snake_a)
    out = h @ params[prefix + ".out.W"] + params[prefix + ".out.b"]
    c0, c1 = ad.col(out, 0), ad.col(out, 1)
    if x_star is None:
        return c0 * model.x_scale, c1 * model.x_scale
    return c0 * model.p_scale, c1 * model.u_scale


# ---------------------------------------------------------------------------
# collocation points

@dataclass
class Batch:
    """One collocation subset fed to the loss."""

    tag: str
    fold_t: np.ndarray
    tract_x: np.ndarray
    tract_t: np.ndarray
    rad_t: np.ndarray
    tract_A: np.ndarray
    tract_S: np.ndarray
    A_0: float
    A_l: float


@dataclass
class CollocationSet:
    """Residual points for the three loss families, with tract geometry."""

    fold_t: np.ndarray
    tract_x: np.ndarray
    tract_t: np.ndarray
    rad_t: np.ndarray
    tract_A: np.ndarray
    tract_S: np.ndarray
    A_0: float
    A_l: float
    minibatches: int

    def full_batch(self, tag="all"):
        return Batch(tag, self.fold_t, self.tract_x, self.tract_t,
                     self.rad_t, self.tract_A, self.tract_S,
                     self.A_0, self.A_l)

    def partition(self, rng):
        """Shuffle each family and split it into the minibatches."""
        nb = self.minibatches
        if min(self.fold_t.size, self.tract_t.size, self.rad_t.size) < nb:
            raise ValueError("fewer collocation points than minibatches")
        fi = np.array_split(rng.permutation(self.fold_t.size), nb)
        ti = np.array_split(rng.permutation(self.tract_t.size), nb)
        ri = np.array_split(rng.permutation(self.rad_t.size), nb)
        return [Batch(f"minibatch {i}", self.fold_t[a], self.tract_x[b],
                      self.tract_t[b], self.rad_t[c], self.tract_A[b],
                      self.tract_S[b], self.A_0, self.A_l)
                for i, (a, b, c) in enumerate(zip(fi, ti, ri))]


def _sobol(rng, d, n):
    # draw a full power-of-two block and slice, which keeps the sequence
    # balanced and quiet
    eng = qmc.Sobol(d=d, scramble=True, seed=rng)
    m = int(np.ceil(np.log2(max(int(n), 1))))
    return eng.random_base2(m)[:int(n)]


def sample_collocation(rc, seed, af):
    """Scrambled Sobol points in normalized coordinates, plus tract areas."""
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    fold_t = 2.0 * _sobol(rng, 1, rc.N_f)[:, 0] - 1.0
    xt = _sobol(rng, 2, rc.N_t)
    tract_x = 2.0 * xt[:, 0] - 1.0
    tract_t = 2.0 * xt[:, 1] - 1.0
    rad_t = 2.0 * _sobol(rng, 1, rc.N_r)[:, 0] - 1.0
    A, S = geometry.eval_area(af, (tract_x + 1.0) * (0.5 * af.l))
    return CollocationSet(fold_t, tract_x, tract_t, rad_t, A, S,
                          af.A_0, af.A_l, rc.minibatches)


# ---------------------------------------------------------------------------
# target waveform (inverse mode)

@dataclass
class PeriodicWaveform:
    """Truncated Fourier series over one cycle, evaluated at t* in [-1, 1]."""

    a: np.ndarray        # cosine coefficients, a[0] is the mean
    b: np.ndarray        # sine coefficients, b[0] stays zero

    @classmethod
    def from_samples(cls, samples, order):
        """Fit the series to uniform samples covering exactly one period."""
        y = np.asarray(samples, dtype=float)
        if y.ndim != 1 or y.size < 4:
            raise ValueError("need at least four samples over the period")
        if order < 1:
            raise ValueError("need at least one harmonic")
        Y = np.fft.rfft(y)
        kmax = min(int(order), Y.size - 1)
        a = np.zeros(kmax + 1)
        b = np.zeros(kmax + 1)
        a[0] = Y[0].real / y.size
        a[1:] = 2.0 * Y[1:kmax + 1].real / y.size
        b[1:] = -2.0 * Y[1:kmax + 1].imag / y.size
        return cls(a, b)

    def __call__(self, t_star):
        u2 = _wrap_phase(t_star)
        out = self.a[0] + u2 * 0.0
        for k in range(1, self.a.size):
            ang = u2 * (np.pi * k)
            out = out + self.a[k] * ad.cos(ang) + self.b[k] * ad.sin(ang)
        return out


# ---------------------------------------------------------------------------
# loss

@dataclass
class LossBreakdown:
    """Unweighted mean-square residuals and the weighted total."""

    L_f1: float
    L_f2: float
    L_t1: float
    L_t2: float
    L_r: float
    L_all: float


def _mean_sq(r):
    if isinstance(r, ad.Node):
        return (r * r).mean()
    r = np.asarray(ad.value_of(r), dtype=float)
    return float(np.mean(r * r))


def compute_losses(model, params, batch, pp, rc, p_data=None):
    """Weighted residual losses of one batch.

    params may be the model's plain arrays (pure evaluation) or their tape
    wrappers (training); the returned total is then a float or a tape node.
    In inverse mode the radiation weight is raised tenfold and p_data (a
    callable of t*) supplies the pinned mouth pressure.
    """
    if model.mode == "inverse" and p_data is None:
        raise ValueError("inverse mode needs a target waveform")
    T = model.period(params)
    ps = model.pressure(params)
    pp_eff = pp if ps is None else dataclasses.replace(pp, p_s=ps)
    rt = 2.0 / T
    rx = 2.0 / pp.l

    # fold equations of motion at the fold collocation times
    tj = ad.Jet2(batch.fold_t, 1.0, 0.0, 0.0)
    x1j, x2j = network_forward(model, params, tj)
    p_0 = network_forward(model, params, batch.fold_t,
                          x_star=np.full(batch.fold_t.shape, -1.0))[0]
    fs = glottis.FoldState(x1j.f, x2j.f, x1j.ft * rt, x2j.ft * rt)
    gs = glottis.glottal_flow(fs, p_0, pp_eff, batch.A_0, model.sc)
    f = glottis.driving_forces(fs, gs, pp_eff, model.sc)
    acc = (x1j.ftt * (rt * rt), x2j.ftt * (rt * rt))
    r_f1, r_f2 = glottis.fold_residuals(fs, acc, f, pp_eff, model.sc)
    L_f1, L_f2 = _mean_sq(r_f1), _mean_sq(r_f2)

    # transmission-line equations at scattered (x*, t*) points
    xj = ad.Jet2(batch.tract_x, 0.0, None, 1.0)
    ttj = ad.Jet2(batch.tract_t, 1.0, None, 0.0)
    p_til, u_til = network_forward(model, params, ttj, x_star=xj)
    x1t, x2t = network_forward(model, params, ttj)
    p0t = network_forward(model, params, ttj,
                          x_star=np.full(batch.tract_t.shape, -1.0))[0]
    gs_t = glottis.glottal_flow(glottis.FoldState(x1t, x2t), p0t, pp_eff,
                                batch.A_0, model.sc)
    x_phys = (xj + 1.0) * (0.5 * pp.l)
    pd = p_data(ttj) if model.mode == "inverse" else None
    p_b = tract.blend_pressure(p_til, pd, x_phys, pp.l)
    u_b = tract.blend_velocity(u_til, gs_t.u_g, x_phys, pp.l)
    wl = tract.wall_loss(batch.tract_A, batch.tract_S, pp)
    pt = tract.AcousticPoint(
        x=ad.value_of(x_phys), t=batch.tract_t, p=p_b.f, u=u_b.f,
        dp_dx=p_b.fx * rx, dp_dt=p_b.ft * rt,
        du_dx=u_b.fx * rx, du_dt=u_b.ft * rt)
    r_t1, r_t2 = tract.telegrapher_residuals(pt, batch.tract_A, wl, pp)
    L_t1, L_t2 = _mean_sq(r_t1), _mean_sq(r_t2)

    # radiation condition at the open end
    trj = ad.Jet2(batch.rad_t, 1.0, None, 0.0)
    p_lj, u_lj = network_forward(model, params, trj,
                                 x_star=np.ones(batch.rad_t.shape))
    if model.mode == "inverse":
        pdr = p_data(trj)
        p_l, dpl_dt = pdr.f, pdr.ft * rt
    else:
        p_l, dpl_dt = p_lj.f, p_lj.ft * rt
    r_r = tract.radiation_residual(p_l, u_lj.f, dpl_dt, u_lj.ft * rt,
                                   batch.A_l, pp)
    L_r = _mean_sq(r_r)

    lam_r = rc.lambda_r * (10.0 if model.mode == "inverse" else 1.0)
    total = rc.lambda_f * (L_f1 + L_f2) + rc.lambda_t1 * L_t1 \
        + rc.lambda_t2 * L_t2 + lam_r * L_r
    if rc.phase_anchor > 0.0:
        # pin the phase gauge: x_1 sits at an extremum at mid-cycle
        t0 = ad.Jet2(np.zeros(1), 1.0, None, 0.0)
        v0 = network_forward(model, params, t0)[0].ft * rt
        total = total + rc.phase_anchor * _mean_sq(v0)
    values = [float(ad.value_of(v)) for v in (L_f1, L_f2, L_t1, L_t2,
                                              L_r, total)]
    if not np.isfinite(values[-1]):
        raise FloatingPointError(f"non-finite loss on batch {batch.tag!r}")
    return LossBreakdown(*values), total


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    """Moment accumulators keyed like the parameters."""

    m: dict
    v: dict
    step: int = 0


def adam_init(params):
    return AdamState({k: np.zeros_like(v) for k, v in params.items()},
                     {k: np.zeros_like(v) for k, v in params.items()})


def learning_rate(rc, i_t):
    """Inverse-time decay from lambda_init; i_t counts applied updates."""
    return rc.lambda_init / (1.0 + rc.beta_Adam * i_t)


def adam_step(params, grads, state, lr):
    """One in-place update; skips (returns False) on non-finite gradients."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            return False
    state.step += 1
    c1 = 1.0 - ADAM_BETA1 ** state.step
    c2 = 1.0 - ADAM_BETA2 ** state.step
    for key, g in grads.items():
        m, v = state.m[key], state.v[key]
        m += (1.0 - ADAM_BETA1) * (g - m)
        v += (1.0 - ADAM_BETA2) * (g * g - v)
        params[key] -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return True


def _clamp_scalars(params, scalar_scale):
    lo = (SCALAR_FLOOR - 1.0) / scalar_scale
    hi = (SCALAR_CEIL - 1.0) / scalar_scale
    for key in ("theta_T", "theta_ps"):
        if key in params:
            np.clip(params[key], lo, hi, out=params[key])


# ---------------------------------------------------------------------------
# training

class TrainingDiverged(RuntimeError):
    """Loss blew up during training; .history holds the record so far."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


_HISTORY_KEYS = ("epoch", "L_all", "L_f1", "L_f2", "L_t1", "L_t2", "L_r",
                 "scalar", "lr", "skipped")


def _as_arrays(hist, fit_losses):
    out = {k: np.asarray(v, dtype=float) for k, v in hist.items()}
    out["fit"] = np.asarray(fit_losses, dtype=float)
    return out


def train(pp, sc, rc, af, p_data=None, reference=None, progress=None):
    """Fit the networks and the trainable scalar with minibatch Adam.

    reference optionally supplies a time-domain run whose steady cycle
    pre-fits the networks for rc.fit_epochs steps before residual training.
    progress, when given, is called as progress(epoch, record) once per
    epoch. Returns (model, history); raises TrainingDiverged when the
    epoch loss grows a hundredfold over a hundred epochs.
    """
    if rc.mode not in ("forward", "inverse"):
        raise ValueError("training mode must be forward or inverse")
    if rc.mode == "inverse" and p_data is None:
        raise ValueError("inverse mode needs a target waveform")
    rng = np.random.default_rng(rc.seed)
    model = build_model(sc, rc, rng)
    colloc = sample_collocation(rc, rng, af)
    fit_losses = []
    if reference is not None and rc.fit_epochs > 0:
        fit_losses = fit_to_cycle(model, reference, rc, rng, pp, af,
                                  max_points=rc.fit_points)
    state = adam_init(model.params)
    hist = {k: [] for k in _HISTORY_KEYS}
    for epoch in range(rc.epochs):
        sums = np.zeros(6)
        skipped = 0
        for batch in colloc.partition(rng):
            tape = ad.Tape()
            wrapped = {k: tape.wrap(v) for k, v in model.params.items()}
            try:
                bd, total = compute_losses(model, wrapped, batch, pp, rc,
                                           p_data)
            except FloatingPointError as exc:
                raise TrainingDiverged(str(exc),
                                       _as_arrays(hist, fit_losses)) from exc
            grads = ad.parameter_gradient(total, wrapped)
            lr = learning_rate(rc, state.step)
            if not adam_step(model.params, grads, state, lr):
                skipped += 1
            _clamp_scalars(model.params, model.scalar_scale)
            sums += (bd.L_f1, bd.L_f2, bd.L_t1, bd.L_t2, bd.L_r, bd.L_all)
        sums /= rc.minibatches
        scalar = model.pressure() if rc.mode == "inverse" else model.period()
        rec = {"epoch": float(epoch), "L_all": sums[5], "L_f1": sums[0],
               "L_f2": sums[1], "L_t1": sums[2], "L_t2": sums[3],
               "L_r": sums[4], "scalar": float(scalar),
               "lr": learning_rate(rc, state.step), "skipped": float(skipped)}
        for k in _HISTORY_KEYS:
            hist[k].append(rec[k])
        if progress is not None:
            progress(epoch, rec)
        if epoch >= 100 and hist["L_all"][-1] > 100.0 * hist["L_all"][-101]:
            raise TrainingDiverged(
                f"loss grew from {hist['L_all'][-101]:.3e} to "
                f"{hist['L_all'][-1]:.3e} inside 100 epochs",
                _as_arrays(hist, fit_losses))
    return model, _as_arrays(hist, fit_losses)


def _phase_derivative(y):
    """d/dphi* of a cyclic series sampled uniformly over phi* in [-1, 1)."""
    n = y.size
    k = np.fft.rfftfreq(n, d=2.0 / n)
    return np.fft.irfft(np.fft.rfft(y) * (2.0j * np.pi * k), n)


def fit_to_cycle(model, run, rc, rng, pp, af, max_points=20000):
    """Pre-fit the networks to one phase-averaged cycle of a reference run.

    Every target comes with its phase derivative: fold displacements fit the
    averaged cycle plus first and second derivatives (the second from the
    spectral derivative of the velocity cycle), tract fields fit the stored
    frames plus the time derivatives implied by the transmission-line
    equations, evaluated from spatial differences of the frames. Value-only
    fitting leaves network time derivatives noisy enough to swamp every
    residual, and because those terms carry a factor 2/T the leftover noise
    shrinks as the period grows, dragging a trainable T upward; derivative
    supervision removes that bias. Targets are normalized by their own RMS,
    summed, and minimized with full-batch Adam; the trainable scalar keeps
    its initial value. Returns the per-step losses.
    """
    from . import reference as refmod
    cyc = refmod.extract_steady_cycle(run, rc.transient, rc.n_phase)
    ft = 2.0 * cyc.phase - 1.0
    inv_x = 1.0 / model.x_scale
    half_T = 0.5 * cyc.T
    fx = [cyc.cycles["x_1"] * inv_x, cyc.cycles["x_2"] * inv_x]
    fv = [cyc.cycles["v_1"] * half_T * inv_x,
          cyc.cycles["v_2"] * half_T * inv_x]
    fa = [_phase_derivative(v) for v in fv]
    l = float(run.x_faces[-1])
    tt = 2.0 * (((run.field_t - cyc.t0) / cyc.T) % 1.0) - 1.0
    xp = 2.0 * run.x_cells * (1.0 / l) - 1.0
    xu = 2.0 * run.x_faces[1:-1] * (1.0 / l) - 1.0

    # time derivatives of the fields from the governing equations, using
    # the staggered grid so the spatial differences are the solver's own
    A_c, S_c = geometry.eval_area(af, run.x_cells)
    A_f, S_f = geometry.eval_area(af, run.x_faces[1:-1])
    G_c = tract.wall_loss(A_c, S_c, pp).G
    R_f = tract.wall_loss(A_f, S_f, pp).R
    du_dx = np.diff(run.u_frames, axis=1) * (1.0 / run.dx)
    dp_dx = np.diff(run.p_frames, axis=1) * (1.0 / run.dx)
    p_dot = -(pp.K / A_c) * (du_dx + G_c * run.p_frames)
    u_dot = -(A_f / pp.rho) * (dp_dx + R_f * run.u_frames[:, 1:-1])

    def flatten(x_star, frames, slopes, scale):
        tcol = np.repeat(tt, x_star.size)
        xcol = np.tile(x_star, tt.size)
        ycol = frames.ravel() * (1.0 / scale)
        dcol = slopes.ravel() * (half_T / scale)
        keep = rng.choice(ycol.size, size=min(ycol.size, max_points),
                          replace=False)
        return tcol[keep], xcol[keep], ycol[keep], dcol[keep]

    tp, xpc, yp, ypt = flatten(xp, run.p_frames, p_dot, model.p_scale)
    tu, xuc, yu, yut = flatten(xu, run.u_frames[:, 1:-1], u_dot,
                               model.u_scale)

    def sq(pred, target):
        w = 1.0 / np.sqrt(np.mean(target * target))
        return _mean_sq((pred - target) * w)

    state = adam_init(model.params)
    losses = []
    for _ in range(rc.fit_epochs):
        tape = ad.Tape()
        wrapped = {k: tape.wrap(v) for k, v in model.params.items()}
        tj = ad.Jet2(ft, 1.0, 0.0, 0.0)
        folds = network_forward(model, wrapped, tj)
        loss = 0.0
        for j, xj in enumerate(folds):
            loss = loss + sq(xj.f * inv_x, fx[j]) \
                + sq(xj.ft * inv_x, fv[j]) + sq(xj.ftt * inv_x, fa[j])
        pj = network_forward(model, wrapped, ad.Jet2(tp, 1.0, None, 0.0),
                             x_star=xpc)[0]
        uj = network_forward(model, wrapped, ad.Jet2(tu, 1.0, None, 0.0),
                             x_star=xuc)[1]
        loss = loss + sq(pj.f * (1.0 / model.p_scale), yp) \
            + sq(pj.ft * (1.0 / model.p_scale), ypt) \
            + sq(uj.f * (1.0 / model.u_scale), yu) \
            + sq(uj.ft * (1.0 / model.u_scale), yut)
        grads = ad.parameter_gradient(loss, wrapped)
        adam_step(model.params, grads, state, 1e-3)
        losses.append(float(ad.value_of(loss)))
    return losses


# ---------------------------------------------------------------------------
# evaluation

def predict_cycle(model, pp, af, n=256, p_data=None):
    """Evaluate the trained solution over one cycle of n uniform phases.

    Returns arrays keyed like the reference cycle quantities plus the
    period T (and p_s in inverse mode). With p_data given in inverse mode
    the mouth pressure is the pinned target series.
    """
    t_star = 2.0 * np.arange(n) / n - 1.0
    T = float(ad.value_of(model.period()))
    rt = 2.0 / T
    ps = model.pressure()
    pp_eff = pp if ps is None else dataclasses.replace(pp, p_s=float(ps))
    tj = ad.Jet2(t_star, 1.0, None, 0.0)
    x1j, x2j = network_forward(model, model.params, tj)
    p_0 = network_forward(model, model.params, t_star,
                          x_star=np.full(n, -1.0))[0]
    fs = glottis.FoldState(x1j.f, x2j.f, x1j.ft * rt, x2j.ft * rt)
    gs = glottis.glottal_flow(fs, p_0, pp_eff, af.A_0, model.sc)
    p_l, u_l = network_forward(model, model.params, t_star,
                               x_star=np.ones(n))
    if model.mode == "inverse" and p_data is not None:
        p_l = np.asarray(ad.value_of(p_data(t_star)), dtype=float)
    out = {"phase": (t_star + 1.0) * 0.5, "T": T, "x_1": x1j.f,
           "v_1": x1j.ft * rt, "x_2": x2j.f, "v_2": x2j.ft * rt,
           "u_g": gs.u_g, "p_0": p_0, "p_l": p_l, "u_l": u_l}
    if ps is not None:
        out["p_s"] = float(ps)
    return out


def gradient_check(pp, sc, rc, af, p_data=None, h=1e-6):
    """Compare the tape gradient of the full loss with finite differences.

    Builds a fresh model from rc, evaluates the loss on the complete
    collocation set, and returns (max relative error, per-coordinate
    errors) over every weight, bias and the trainable scalar.
    """
    rng = np.random.default_rng(rc.seed)
    model = build_model(sc, rc, rng)
    batch = sample_collocation(rc, rng, af).full_batch()
    keys = list(model.params)
    shapes = [model.params[k].shape for k in keys]
    sizes = [int(np.prod(s)) for s in shapes]

    def split(vec):
        out = {}
        at = 0
        for k, s, n in zip(keys, shapes, sizes):
            out[k] = vec[at:at + n].reshape(s).copy()
            at += n
        return out

    def f(vec):
        tape = ad.Tape()
        wrapped = {k: tape.wrap(v) for k, v in split(vec).items()}
        total = compute_losses(model, wrapped, batch, pp, rc, p_data)[1]
        grads = ad.parameter_gradient(total, wrapped)
        flat = np.concatenate([np.asarray(grads[k]).ravel() for k in keys])
        return float(ad.value_of(total)), flat

    point = np.concatenate([model.params[k].ravel() for k in keys])
    return ad.finite_difference_check(f, point, h)


# ---------------------------------------------------------------------------
# checkpoints

_CHECKPOINT_MAGIC = "phonosim-checkpoint"
_CHECKPOINT_VERSION = 1
_META_INT = ("m", "width", "fold_blocks", "tract_blocks")
_META_FLOAT = ("snake_a", "x_scale", "p_scale", "u_scale", "T_init",
               "ps_init", "scalar_scale", "beta_Ag", "beta_f", "beta_p")


def save_checkpoint(path, model):
    """Write the model as plain text that round-trips bit for bit."""
    meta = {"m": model.m, "width": model.width,
            "fold_blocks": model.n_fold_blocks,
            "tract_blocks": model.n_tract_blocks, "snake_a": model.snake_a,
            "x_scale": model.x_scale, "p_scale": model.p_scale,
            "u_scale": model.u_scale, "T_init": model.T_init,
            "ps_init": model.ps_init, "scalar_scale": model.scalar_scale,
            "beta_Ag": model.sc.beta_Ag, "beta_f": model.sc.beta_f,
            "beta_p": model.sc.beta_p}
    lines = [f"{_CHECKPOINT_MAGIC} {_CHECKPOINT_VERSION}",
             f"mode {model.mode}"]
    for key in _META_INT:
        lines.append(f"{key} {int(meta[key]):d}")
    for key in _META_FLOAT:
        lines.append(f"{key} {float(meta[key])!r}")
    for name, arr in model.params.items():
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"param {name} {dims}".rstrip())
        lines.append(" ".join(repr(float(x)) for x in np.ravel(arr)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Read a model written by save_checkpoint."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines:
        raise ValueError("empty checkpoint file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != _CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file")
    if head[1] != str(_CHECKPOINT_VERSION):
        raise ValueError(f"unsupported checkpoint version {head[1]}")
    known = ("mode",) + _META_INT + _META_FLOAT
    meta = {}
    params = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("param "):
        if not lines[i].strip():
            i += 1
            continue
        key, _, val = lines[i].partition(" ")
        if not val:
            raise ValueError(f"malformed header line {lines[i]!r}")
        if key not in known:
            raise ValueError(f"unknown checkpoint field {key!r}")
        meta[key] = val
        i += 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if head[0] != "param" or len(head) < 2 or i + 1 >= len(lines):
            raise ValueError(f"malformed parameter block at {lines[i]!r}")
        shape = tuple(int(d) for d in head[2:])
        vals = np.array([float(tok) for tok in lines[i + 1].split()])
        if vals.size != int(np.prod(shape)):
            raise ValueError(f"parameter {head[1]} has {vals.size} values, "
                             f"expected {int(np.prod(shape))}")
        params[head[1]] = vals.reshape(shape)
        i += 2
    missing = [k for k in known if k not in meta]
    if missing:
        raise ValueError("checkpoint missing fields: " + ", ".join(missing))
    if meta["mode"] not in ("forward", "inverse"):
        raise ValueError(f"unknown mode {meta['mode']!r}")
    sc = SmoothingCoefficients(beta_Ag=float(meta["beta_Ag"]),
                               beta_f=float(meta["beta_f"]),
                               beta_p=float(meta["beta_p"]))
    return PinnModel(mode=meta["mode"], m=int(meta["m"]),
                     width=int(meta["width"]),
                     n_fold_blocks=int(meta["fold_blocks"]),
                     n_tract_blocks=int(meta["tract_blocks"]),
                     snake_a=float(meta["snake_a"]),
                     x_scale=float(meta["x_scale"]),
                     p_scale=float(meta["p_scale"]),
                     u_scale=float(meta["u_scale"]),
                     T_init=float(meta["T_init"]),
                     ps_init=float(meta["ps_init"]),
                     scalar_scale=float(meta["scalar_scale"]),
                     sc=sc, params=params)
