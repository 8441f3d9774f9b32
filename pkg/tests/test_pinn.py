import numpy as np
import pytest
from scipy.stats import qmc

from phonosim import autodiff as ad
from phonosim import glottis, pinn, tract
from phonosim.params import RunConfig


def _cfg(**kw):
    base = dict(mode="forward", width=6, N_FB=1, N_TB=2, m=3, N_f=32,
                N_t=16, N_r=8, minibatches=2, epochs=5, seed=1,
                lambda_f=1.0, lambda_t1=1.0, lambda_t2=1.0, lambda_r=1.0,
                lambda_init=1e-3)
    base.update(kw)
    return RunConfig(**base)


def _wave(order=6):
    ph = 2.0 * np.pi * np.arange(64) / 64
    y = 180.0 * np.cos(ph) + 40.0 * np.sin(2.0 * ph) + 3.0
    return pinn.PeriodicWaveform.from_samples(y, order)


# -- input embedding ------------------------------------------------------

def test_scale_inputs_endpoints():
    xs, ts = pinn.scale_inputs(np.array([0.0, 0.08, 0.16]),
                               np.array([0.0, 5.0e-3]), 0.16, 5.0e-3)
    assert np.array_equal(xs, [-1.0, 0.0, 1.0])
    assert np.array_equal(ts, [-1.0, 1.0])


def test_scale_inputs_rejects_bad_domains():
    with pytest.raises(ValueError):
        pinn.scale_inputs(0.0, 0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        pinn.scale_inputs(0.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        pinn.scale_inputs(np.array([1.5]), 0.0, 1.0, 1.0)


def test_fourier_features_match_direct_evaluation():
    t = np.array([-1.0, -0.3, 0.0, 0.25, 0.9])
    F = pinn.fourier_features(t, 2)
    want = np.column_stack([np.cos(np.pi * t), np.sin(np.pi * t),
                            np.cos(2.0 * np.pi * t), np.sin(2.0 * np.pi * t)])
    assert np.allclose(F, want, atol=1e-15)


def test_fourier_features_single_harmonic_shape():
    F = pinn.fourier_features(np.array([0.5]), 1)
    assert F.shape == (1, 2)
    assert F[0, 0] == pytest.approx(np.cos(0.5 * np.pi), abs=1e-15)


def test_fourier_features_period_ends_bitwise_identical():
    lo = pinn.fourier_features(np.array([-1.0]), 5)
    hi = pinn.fourier_features(np.array([1.0]), 5)
    assert np.array_equal(lo, hi)
    # and one full period away from an interior point
    a = pinn.fourier_features(np.array([0.37]), 5)
    b = pinn.fourier_features(np.array([0.37 + 2.0]), 5)
    assert np.array_equal(a, b)


def test_fourier_features_reject_no_harmonics():
    with pytest.raises(ValueError):
        pinn.fourier_features(np.array([0.0]), 0)


def test_snake_values_and_derivative():
    z = np.array([0.0, 0.3, -1.2])
    assert np.allclose(pinn.snake(z), z + np.sin(z) ** 2)
    # slope through the forward jet: 1 + sin(2az) at a = 1
    j = pinn.snake(ad.Jet2.time(np.array([0.3])))
    assert j.ft[0] == pytest.approx(1.0 + np.sin(0.6), rel=1e-14)
    assert np.allclose(pinn.snake(z, a=2.0), z + np.sin(2.0 * z) ** 2 / 2.0)
    with pytest.raises(ValueError):
        pinn.snake(z, a=0.0)


# -- model construction and evaluation ------------------------------------

def test_build_model_shapes_and_scalar():
    rc = _cfg()
    model = pinn.build_model(None, rc, np.random.default_rng(0))
    assert model.params["fold.in.W"].shape == (2 * rc.m, rc.width)
    assert model.params["tract.in.W"].shape == (1 + 2 * rc.m, rc.width)
    assert model.params["fold.out.W"].shape == (rc.width, 2)
    assert model.params["theta_T"].shape == ()
    assert "theta_ps" not in model.params
    assert all(np.all(model.params[k] == 0.0)
               for k in model.params if k.endswith(".b"))
    inv = pinn.build_model(None, _cfg(mode="inverse"),
                           np.random.default_rng(0))
    assert "theta_ps" in inv.params and "theta_T" not in inv.params


def test_build_model_rejects_reference_mode():
    with pytest.raises(ValueError):
        pinn.build_model(None, _cfg(mode="reference"))


def test_trainable_scalar_mapping():
    rc = _cfg(T_init=5.0e-3, ps_init=800.0, scalar_scale=0.2)
    fwd = pinn.build_model(None, rc, np.random.default_rng(0))
    fwd.params["theta_T"][...] = 0.5
    assert float(fwd.period()) == pytest.approx(5.0e-3 * 1.1, rel=1e-15)
    assert fwd.pressure() is None
    inv = pinn.build_model(None, _cfg(mode="inverse", ps_init=800.0),
                           np.random.default_rng(0))
    inv.params["theta_ps"][...] = -1.0
    assert float(inv.pressure()) == pytest.approx(800.0 * 0.8, rel=1e-15)
    assert float(inv.period()) == inv.T_init


def test_zero_weights_give_zero_outputs():
    model = pinn.build_model(None, _cfg(), np.random.default_rng(0))
    for k, v in model.params.items():
        model.params[k] = np.zeros_like(v)
    t = np.linspace(-1.0, 1.0, 7)
    x1, x2 = pinn.network_forward(model, model.params, t)
    p, u = pinn.network_forward(model, model.params, t, x_star=t)
    assert np.array_equal(x1, np.zeros(7)) and np.array_equal(x2, np.zeros(7))
    assert np.array_equal(p, np.zeros(7)) and np.array_equal(u, np.zeros(7))


def test_network_is_bitwise_periodic_with_derivatives():
    model = pinn.build_model(None, _cfg(), np.random.default_rng(3))
    ends = []
    for t0 in (-1.0, 1.0):
        j = ad.Jet2(np.array([t0]), 1.0, 0.0, 0.0)
        x1, x2 = pinn.network_forward(model, model.params, j)
        ends.append((x1.f, x1.ft, x1.ftt, x2.f, x2.ft, x2.ftt))
    for a, b in zip(*ends):
        assert np.array_equal(a, b)


def test_network_time_derivative_matches_finite_difference():
    model = pinn.build_model(None, _cfg(), np.random.default_rng(5))
    t = np.array([-0.62, 0.11, 0.73])
    j = ad.Jet2(t, 1.0, 0.0, 0.0)
    x1 = pinn.network_forward(model, model.params, j)[0]
    h = 1e-6
    up = pinn.network_forward(model, model.params, t + h)[0]
    dn = pinn.network_forward(model, model.params, t - h)[0]
    fd1 = (up - dn) / (2.0 * h)
    fd2 = (up - 2.0 * x1.f + dn) / (h * h)
    assert np.allclose(x1.ft, fd1, rtol=1e-7, atol=1e-12)
    assert np.allclose(x1.ftt, fd2, rtol=1e-3, atol=1e-8)


# -- collocation ----------------------------------------------------------

def test_collocation_counts_and_domain(area_a):
    rc = _cfg(N_f=20, N_t=12, N_r=5)
    colloc = pinn.sample_collocation(rc, 7, area_a)
    assert colloc.fold_t.shape == (20,)
    assert colloc.tract_x.shape == (12,) and colloc.tract_t.shape == (12,)
    assert colloc.rad_t.shape == (5,)
    for arr in (colloc.fold_t, colloc.tract_x, colloc.tract_t, colloc.rad_t):
        assert np.all(arr >= -1.0) and np.all(arr < 1.0)
    assert np.all(colloc.tract_A > 0.0) and np.all(colloc.tract_S > 0.0)
    assert colloc.A_0 == area_a.A_0 and colloc.A_l == area_a.A_l


def test_collocation_is_lower_discrepancy_than_random(area_a):
    colloc = pinn.sample_collocation(_cfg(N_t=64), 3, area_a)
    pts = np.column_stack([(colloc.tract_x + 1.0) / 2.0,
                           (colloc.tract_t + 1.0) / 2.0])
    d_qmc = qmc.discrepancy(pts)
    rng = np.random.default_rng(0)
    d_rand = [qmc.discrepancy(rng.random((64, 2))) for _ in range(20)]
    assert d_qmc < min(d_rand)


def test_partition_covers_every_point_once(area_a):
    colloc = pinn.sample_collocation(_cfg(N_f=33, N_t=17, N_r=9,
                                          minibatches=4), 2, area_a)
    batches = colloc.partition(np.random.default_rng(0))
    assert len(batches) == 4
    fold = np.sort(np.concatenate([b.fold_t for b in batches]))
    assert np.array_equal(fold, np.sort(colloc.fold_t))
    tx = np.sort(np.concatenate([b.tract_x for b in batches]))
    assert np.array_equal(tx, np.sort(colloc.tract_x))


def test_partition_rejects_too_many_minibatches(area_a):
    colloc = pinn.sample_collocation(_cfg(N_r=3, minibatches=4), 2, area_a)
    with pytest.raises(ValueError):
        colloc.partition(np.random.default_rng(0))


# -- target waveform ------------------------------------------------------

def test_waveform_reproduces_samples_and_wraps():
    ph = 2.0 * np.pi * np.arange(32) / 32
    y = 5.0 + 2.0 * np.cos(ph) - 0.7 * np.sin(3.0 * ph)
    wave = pinn.PeriodicWaveform.from_samples(y, 16)
    t = 2.0 * np.arange(32) / 32 - 1.0
    assert np.allclose(wave(t), y, atol=1e-12)
    assert np.array_equal(wave(t), wave(t + 2.0))
    assert np.array_equal(wave(np.array([-1.0])), wave(np.array([1.0])))


def test_waveform_jet_derivative():
    wave = _wave()
    t = np.array([0.21])
    j = wave(ad.Jet2(t, 1.0, 0.0, 0.0))
    h = 1e-7
    fd = (wave(t + h) - wave(t - h)) / (2.0 * h)
    assert np.allclose(j.ft, fd, rtol=1e-6)


def test_waveform_rejects_bad_inputs():
    with pytest.raises(ValueError):
        pinn.PeriodicWaveform.from_samples(np.zeros(3), 4)
    with pytest.raises(ValueError):
        pinn.PeriodicWaveform.from_samples(np.zeros(16), 0)


# -- losses ---------------------------------------------------------------

def test_loss_total_combines_weighted_terms(phys, smoothing, area_a):
    rc = _cfg(lambda_f=2.0, lambda_t1=3.0, lambda_t2=5.0, lambda_r=7.0)
    rng = np.random.default_rng(0)
    model = pinn.build_model(smoothing, rc, rng)
    batch = pinn.sample_collocation(rc, rng, area_a).full_batch()
    bd, total = pinn.compute_losses(model, model.params, batch, phys, rc)
    want = 2.0 * (bd.L_f1 + bd.L_f2) + 3.0 * bd.L_t1 + 5.0 * bd.L_t2 \
        + 7.0 * bd.L_r
    assert total == pytest.approx(want, rel=1e-12)
    assert bd.L_all == total


def test_forward_loss_ignores_target_waveform(phys, smoothing, area_a):
    rc = _cfg()
    rng = np.random.default_rng(0)
    model = pinn.build_model(smoothing, rc, rng)
    batch = pinn.sample_collocation(rc, rng, area_a).full_batch()
    bare = pinn.compute_losses(model, model.params, batch, phys, rc)[0]
    with_wave = pinn.compute_losses(model, model.params, batch, phys, rc,
                                    p_data=_wave())[0]
    assert bare == with_wave


def test_inverse_loss_requires_waveform_and_boosts_radiation(
        phys, smoothing, area_a):
    rc = _cfg(mode="inverse", lambda_r=7.0)
    rng = np.random.default_rng(0)
    model = pinn.build_model(smoothing, rc, rng)
    batch = pinn.sample_collocation(rc, rng, area_a).full_batch()
    with pytest.raises(ValueError):
        pinn.compute_losses(model, model.params, batch, phys, rc)
    bd, total = pinn.compute_losses(model, model.params, batch, phys, rc,
                                    p_data=_wave())
    want = 1.0 * (bd.L_f1 + bd.L_f2) + 1.0 * bd.L_t1 + 1.0 * bd.L_t2 \
        + 70.0 * bd.L_r
    assert total == pytest.approx(want, rel=1e-12)


def test_losses_match_between_plain_and_taped_parameters(
        phys, smoothing, area_a):
    rc = _cfg()
    rng = np.random.default_rng(4)
    model = pinn.build_model(smoothing, rc, rng)
    batch = pinn.sample_collocation(rc, rng, area_a).full_batch()
    plain = pinn.compute_losses(model, model.params, batch, phys, rc)[0]
    tape = ad.Tape()
    wrapped = {k: tape.wrap(v) for k, v in model.params.items()}
    taped = pinn.compute_losses(model, wrapped, batch, phys, rc)[0]
    assert plain == taped


# -- exact output constraints ---------------------------------------------

def test_entrance_velocity_pin_is_exact(phys, smoothing, area_a):
    # the blended velocity at the tract entrance equals the glottal flow
    # computed from the fold network, bit for bit
    model = pinn.build_model(smoothing, _cfg(), np.random.default_rng(9))
    n = 64
    t = np.random.default_rng(1).uniform(-1.0, 1.0, n)
    T = float(model.period())
    rt = 2.0 / T
    tj = ad.Jet2(t, 1.0, None, 0.0)
    x1j, x2j = pinn.network_forward(model, model.params, tj)
    p0 = pinn.network_forward(model, model.params, tj,
                              x_star=np.full(n, -1.0))[0]
    fs = glottis.FoldState(x1j, x2j)
    gs = glottis.glottal_flow(fs, p0, phys, area_a.A_0, smoothing)
    u_til = pinn.network_forward(model, model.params, tj,
                                 x_star=np.full(n, -1.0))[1]
    u0 = tract.blend_velocity(u_til, gs.u_g, np.zeros(n), phys.l)
    assert np.array_equal(ad.value_of(u0), ad.value_of(gs.u_g))
    assert np.array_equal(ad.value_of(u0.ft * rt),
                          ad.value_of(gs.u_g.ft * rt))


def test_mouth_pressure_pin_is_exact(phys, smoothing, area_a):
    model = pinn.build_model(smoothing, _cfg(mode="inverse"),
                             np.random.default_rng(9))
    wave = _wave()
    n = 64
    t = np.random.default_rng(2).uniform(-1.0, 1.0, n)
    p_til = pinn.network_forward(model, model.params, t,
                                 x_star=np.ones(n))[0]
    p_l = tract.blend_pressure(p_til, wave(t), np.full(n, phys.l), phys.l)
    assert np.array_equal(p_l, wave(t))


# -- optimizer ------------------------------------------------------------

def test_learning_rate_schedule():
    rc = _cfg(lambda_init=6.25e-4, beta_Adam=1.25e-4)
    assert pinn.learning_rate(rc, 0) == 6.25e-4
    assert pinn.learning_rate(rc, 8000) == pytest.approx(3.125e-4, rel=1e-15)


def test_adam_first_step_is_bounded_by_learning_rate():
    params = {"w": np.array([1.0, -2.0, 3.0]), "s": np.zeros(())}
    before = {k: v.copy() for k, v in params.items()}
    grads = {"w": np.array([1e6, -3.0, 1e-4]), "s": np.array(5.0)}
    state = pinn.adam_init(params)
    assert pinn.adam_step(params, grads, state, 1e-3)
    for k in params:
        assert np.max(np.abs(params[k] - before[k])) <= 1e-3 * (1.0 + 1e-12)
    assert state.step == 1


def test_adam_skips_update_on_nonfinite_gradient():
    params = {"w": np.array([1.0])}
    state = pinn.adam_init(params)
    assert not pinn.adam_step(params, {"w": np.array([np.nan])}, state, 1e-3)
    assert params["w"][0] == 1.0 and state.step == 0


def test_scalar_clamp_limits_the_physical_multiplier():
    params = {"theta_T": np.array(1.0e4), "theta_ps": np.array(-1.0e4)}
    pinn._clamp_scalars(params, 0.2)
    assert 1.0 + 0.2 * params["theta_T"] == pytest.approx(pinn.SCALAR_CEIL)
    assert 1.0 + 0.2 * params["theta_ps"] == pytest.approx(pinn.SCALAR_FLOOR)


# -- training -------------------------------------------------------------

def test_training_validates_mode_and_waveform(phys, smoothing, area_a):
    with pytest.raises(ValueError):
        pinn.train(phys, smoothing, _cfg(mode="reference"), area_a)
    with pytest.raises(ValueError):
        pinn.train(phys, smoothing, _cfg(mode="inverse"), area_a)


def test_zero_epoch_training_leaves_initial_model(phys, smoothing, area_a):
    rc = _cfg(epochs=0)
    model, hist = pinn.train(phys, smoothing, rc, area_a)
    fresh = pinn.build_model(smoothing, rc, np.random.default_rng(rc.seed))
    assert set(model.params) == set(fresh.params)
    for k in model.params:
        assert np.array_equal(model.params[k], fresh.params[k])
    assert hist["L_all"].size == 0 and hist["fit"].size == 0


def test_training_reduces_loss_and_reports_history(phys, smoothing, area_a):
    rc = _cfg(epochs=30, width=8, m=4, N_f=64, N_t=32, N_r=16, minibatches=4)
    seen = []
    model, hist = pinn.train(phys, smoothing, rc, area_a,
                             progress=lambda e, rec: seen.append(e))
    assert seen == list(range(30))
    assert hist["L_all"].shape == (30,)
    assert hist["L_all"][-1] < 0.2 * hist["L_all"][0]
    assert np.all(hist["skipped"] == 0.0)
    assert np.all(np.isfinite(hist["scalar"]))
    # learning rate follows the schedule for the applied update count
    assert hist["lr"][0] == pytest.approx(
        pinn.learning_rate(rc, rc.minibatches), rel=1e-15)


def test_training_is_deterministic(phys, smoothing, area_a):
    rc = _cfg(epochs=5)
    m1 = pinn.train(phys, smoothing, rc, area_a)[0]
    m2 = pinn.train(phys, smoothing, rc, area_a)[0]
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_training_aborts_when_loss_grows(phys, smoothing, area_a,
                                         monkeypatch):
    real = pinn.compute_losses
    count = {"n": 0}

    def inflating(model, params, batch, pp, rc, p_data=None):
        bd, total = real(model, params, batch, pp, rc, p_data)
        count["n"] += 1
        scale = 1.1 ** count["n"]
        bd = pinn.LossBreakdown(bd.L_f1, bd.L_f2, bd.L_t1, bd.L_t2, bd.L_r,
                                bd.L_all * scale)
        return bd, total

    monkeypatch.setattr(pinn, "compute_losses", inflating)
    with pytest.raises(pinn.TrainingDiverged) as info:
        pinn.train(phys, smoothing, _cfg(epochs=300, lambda_init=0.0),
                   area_a)
    assert info.value.history["L_all"].size >= 101


def test_training_aborts_on_nonfinite_loss(phys, smoothing, area_a):
    # an absurd learning rate sends the weights, then the loss, to overflow
    rc = _cfg(epochs=400, lambda_init=1.0e5)
    with pytest.raises(pinn.TrainingDiverged) as info:
        pinn.train(phys, smoothing, rc, area_a)
    assert "L_all" in info.value.history


# -- pre-fit to a reference cycle -----------------------------------------

def test_fit_to_cycle_reduces_data_misfit(phys, smoothing, area_a, ref_a):
    run, _, _ = ref_a
    rc = _cfg(width=16, m=6, N_TB=2, fit_epochs=400, T_init=5.2e-3)
    model = pinn.build_model(smoothing, rc, np.random.default_rng(0))
    losses = pinn.fit_to_cycle(model, run, rc, np.random.default_rng(1),
                               phys, area_a, max_points=2000)
    assert len(losses) == 400
    assert losses[-1] < losses[0] / 100.0
    # the scalar is untouched by the pre-fit
    assert float(model.params["theta_T"]) == 0.0


# -- prediction and gradient check ----------------------------------------

def test_predict_cycle_shapes_and_period(phys, smoothing, area_a):
    model = pinn.build_model(smoothing, _cfg(T_init=5.0e-3),
                             np.random.default_rng(0))
    cyc = pinn.predict_cycle(model, phys, area_a, n=48)
    for key in ("phase", "x_1", "v_1", "x_2", "v_2", "u_g", "p_0",
                "p_l", "u_l"):
        assert np.shape(cyc[key]) == (48,)
    assert cyc["T"] == pytest.approx(5.0e-3)
    assert "p_s" not in cyc


def test_predict_cycle_inverse_reports_pressure_and_pins_mouth(
        phys, smoothing, area_a):
    model = pinn.build_model(smoothing, _cfg(mode="inverse", ps_init=785.0),
                             np.random.default_rng(0))
    wave = _wave()
    cyc = pinn.predict_cycle(model, phys, area_a, n=32, p_data=wave)
    assert cyc["p_s"] == pytest.approx(785.0)
    t_star = 2.0 * np.arange(32) / 32 - 1.0
    assert np.array_equal(cyc["p_l"], wave(t_star))


def test_gradient_check_on_small_model(phys, smoothing, area_a):
    # weights chosen so every loss term is O(1) at a random init; a large
    # constant background would drown the finite differences in roundoff
    rc = _cfg(width=3, m=1, N_FB=1, N_TB=1, N_f=8, N_t=4, N_r=4,
              lambda_f=5e-3, lambda_t1=300.0, lambda_t2=4e-9, lambda_r=5e-8)
    err, errs = pinn.gradient_check(phys, smoothing, rc, area_a)
    assert err < 1e-4
    assert errs.size == sum(v.size for v in
                            pinn.build_model(smoothing, rc).params.values())


# -- checkpoints ----------------------------------------------------------

def test_checkpoint_round_trip_is_bitwise(smoothing, tmp_path):
    model = pinn.build_model(smoothing, _cfg(), np.random.default_rng(0))
    model.params["theta_T"][...] = 0.123456789
    path = tmp_path / "model.txt"
    pinn.save_checkpoint(path, model)
    back = pinn.load_checkpoint(path)
    assert back.mode == model.mode
    assert back.m == model.m and back.width == model.width
    assert back.T_init == model.T_init and back.ps_init == model.ps_init
    assert back.sc.beta_Ag == smoothing.beta_Ag
    assert set(back.params) == set(model.params)
    for k in model.params:
        assert np.array_equal(back.params[k], model.params[k])
        assert back.params[k].shape == model.params[k].shape


def test_checkpoint_rejects_corrupt_files(smoothing, tmp_path):
    model = pinn.build_model(smoothing, _cfg(), np.random.default_rng(0))
    good = tmp_path / "good.txt"
    pinn.save_checkpoint(good, model)
    text = good.read_text()

    bad = tmp_path / "bad.txt"
    bad.write_text("something else\n")
    with pytest.raises(ValueError):
        pinn.load_checkpoint(bad)

    bad.write_text(text.replace("phonosim-checkpoint 1",
                                "phonosim-checkpoint 99"))
    with pytest.raises(ValueError):
        pinn.load_checkpoint(bad)

    bad.write_text(text.replace("mode forward", "flavor forward"))
    with pytest.raises(ValueError):
        pinn.load_checkpoint(bad)

    # drop a required header line
    bad.write_text("\n".join(line for line in text.splitlines()
                             if not line.startswith("ps_init")) + "\n")
    with pytest.raises(ValueError):
        pinn.load_checkpoint(bad)

    # truncate a value row
    lines = text.splitlines()
    idx = next(i for i, line in enumerate(lines)
               if line.startswith("param fold.in.W"))
    lines[idx + 1] = " ".join(lines[idx + 1].split()[:-1])
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        pinn.load_checkpoint(bad)
