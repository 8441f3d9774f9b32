import dataclasses

import numpy as np
import pytest

from phonosim import autodiff as ad
from phonosim import params, tract
from phonosim.tract import AcousticPoint

PP = params.PhysicalParams()


# -- wall losses ----------------------------------------------------------

def test_wall_loss_zero_coefficients():
    lossless = dataclasses.replace(PP, alpha_R=0.0, alpha_G=0.0)
    wl = tract.wall_loss(3e-4, 2e-2, lossless)
    assert wl.R == 0.0 and wl.G == 0.0
    isothermal = dataclasses.replace(PP, eta_air=1.0)
    assert tract.wall_loss(3e-4, 2e-2, isothermal).G == 0.0


def test_wall_loss_scaling():
    wl = tract.wall_loss(3e-4, 2e-2, PP)
    quad = dataclasses.replace(PP, omega_c=4.0 * PP.omega_c)
    wl4 = tract.wall_loss(3e-4, 2e-2, quad)
    assert wl4.R == pytest.approx(2.0 * wl.R, rel=1e-12)
    assert wl4.G == pytest.approx(2.0 * wl.G, rel=1e-12)
    # R goes as S/A^2, G as S
    wl_half = tract.wall_loss(1.5e-4, 2e-2, PP)
    assert wl_half.R == pytest.approx(4.0 * wl.R, rel=1e-12)
    assert wl_half.G == pytest.approx(wl.G, rel=1e-12)


def test_wall_loss_hand_substitution():
    A, S = 1e-4, 2e-2
    wl = tract.wall_loss(A, S, PP)
    R = 25.0 * (S / A ** 2) * np.sqrt(942.0 * 1.20 * 1.9e-5 / 2.0)
    G = 1.0 * S * (0.40 / (1.20 * 340.0 ** 2)) * np.sqrt(2.41e-2 * 942.0 / (2.0 * 1.01e3 * 1.20))
    assert wl.R == pytest.approx(R, rel=1e-12)
    assert wl.G == pytest.approx(G, rel=1e-12)


def test_wall_loss_rejects_nonpositive():
    with pytest.raises(ValueError):
        tract.wall_loss(0.0, 2e-2, PP)
    with pytest.raises(ValueError):
        tract.wall_loss(1e-4, -1.0, PP)


# -- transmission-line residuals -----------------------------------------

def test_residual_hand_values():
    wl = tract.WallLoss(R=5.0, G=2.0)
    pt = AcousticPoint(x=0.0, t=0.0, p=3.0, u=0.5,
                       dp_dx=1.5, dp_dt=7.0, du_dx=0.5, du_dt=-2.0)
    A = 1e-4
    r1, r2 = tract.telegrapher_residuals(pt, A, wl, PP)
    assert r1 == pytest.approx(0.5 + 2.0 * 3.0 + (1e-4 / 1.39e5) * 7.0, rel=1e-14)
    assert r2 == pytest.approx(1.5 + 5.0 * 0.5 + (1.20 / 1e-4) * -2.0, rel=1e-14)


def test_plane_wave_annihilates_lossless_residuals():
    lossless = dataclasses.replace(PP, alpha_R=0.0, alpha_G=0.0)
    A = 3e-4
    c = np.sqrt(PP.K / PP.rho)
    omega = 2.0 * np.pi * 700.0
    k = omega / c
    wl = tract.wall_loss(A, 2e-2, lossless)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.uniform(0.0, 0.16)
        t = rng.uniform(0.0, 1e-2)
        ph = k * x - omega * t
        pt = AcousticPoint(
            x=x, t=t,
            p=np.cos(ph), u=(A / (PP.rho * c)) * np.cos(ph),
            dp_dx=-k * np.sin(ph), dp_dt=omega * np.sin(ph),
            du_dx=-(A / (PP.rho * c)) * k * np.sin(ph),
            du_dt=(A / (PP.rho * c)) * omega * np.sin(ph))
        r1, r2 = tract.telegrapher_residuals(pt, A, wl, lossless)
        assert abs(r1) < 1e-10 and abs(r2) < 1e-10


# -- radiation ------------------------------------------------------------

def test_radiation_load_values_and_scaling():
    A_l = 8e-4
    R_r, L_r = tract.radiation_load(A_l, PP)
    assert R_r == pytest.approx(128.0 * 1.20 * 340.0 / (9.0 * np.pi ** 2 * A_l), rel=1e-13)
    assert L_r == pytest.approx(8.0 * 1.20 / (3.0 * np.pi * np.sqrt(np.pi * A_l)), rel=1e-13)
    R_r4, L_r4 = tract.radiation_load(4.0 * A_l, PP)
    assert R_r4 == pytest.approx(R_r / 4.0, rel=1e-13)
    assert L_r4 == pytest.approx(L_r / 2.0, rel=1e-13)


def test_radiation_impedance_oracle():
    # p = Re[Z u] with Z = i w L R / (R + i w L) must zero the residual
    A_l = 8e-4
    R_r, L_r = tract.radiation_load(A_l, PP)
    U = 1e-5
    for f_hz in (100.0, 500.0, 2000.0):
        w = 2.0 * np.pi * f_hz
        Z = 1j * w * L_r * R_r / (R_r + 1j * w * L_r)
        for wt in np.linspace(0.0, 2.0 * np.pi, 9):
            u = U * np.cos(wt)
            du = -U * w * np.sin(wt)
            p = (Z * U * np.exp(1j * wt)).real
            dp = (1j * w * Z * U * np.exp(1j * wt)).real
            res = tract.radiation_residual(p, u, dp, du, A_l, PP)
            assert abs(res) < 1e-10


def test_radiation_residual_sign():
    # a plain resistive guess p = R_r u leaves the inertance term
    A_l = 8e-4
    R_r, L_r = tract.radiation_load(A_l, PP)
    res = tract.radiation_residual(R_r * 1e-5, 1e-5, 0.0, 2.0, A_l, PP)
    assert res == pytest.approx(L_r * 2.0 - R_r * 1e-5, rel=1e-13)
    with pytest.raises(ValueError):
        tract.radiation_residual(0.0, 0.0, 0.0, 0.0, -1.0, PP)


# -- hard-constraint blends ----------------------------------------------

def test_blend_pressure_endpoints_bitwise():
    pt, pd = 0.1234567891234, -7.654321e2
    assert tract.blend_pressure(pt, pd, 0.0, 0.16) == pt
    assert tract.blend_pressure(pt, pd, 0.16, 0.16) == pd


def test_blend_velocity_endpoints_bitwise():
    ut, ug = 3.33333e-4, 9.87654321e-5
    assert tract.blend_velocity(ut, ug, 0.0, 0.16) == ug
    assert tract.blend_velocity(ut, ug, 0.16, 0.16) == ut


def test_blend_midpoint_weight():
    w = np.sin(np.pi / 4.0)
    got = tract.blend_pressure(2.0, 10.0, 0.08, 0.16)
    assert got == pytest.approx(2.0 * w + 10.0 * (1.0 - w), rel=1e-15)
    got = tract.blend_velocity(2.0, 10.0, 0.08, 0.16)
    assert got == pytest.approx(2.0 * w + 10.0 * (1.0 - w), rel=1e-15)


def test_blend_forward_short_circuit():
    pt = object()
    assert tract.blend_pressure(pt, None, 0.07, 0.16) is pt
    assert tract.blend_pressure(pt, pt, 0.07, 0.16) is pt


def test_blend_space_derivative_via_jets():
    l = 0.16
    pt_val, pd_val = 4.0, -2.0

    def f(x):
        return tract.blend_pressure(pt_val, pd_val, x, l)

    x0 = 0.05
    got = f(ad.Jet2.space(x0))
    h = 1e-7
    fd = (f(x0 + h) - f(x0 - h)) / (2.0 * h)
    assert got.fx == pytest.approx(fd, rel=1e-7)
    want = (pt_val - pd_val) * (-0.5 * np.pi / l) * np.cos(0.5 * np.pi * (1 - x0 / l))
    assert got.fx == pytest.approx(want, rel=1e-12)


def test_blend_weights_complementary():
    # at matching positions the two weights sum to 1
    for x in np.linspace(0.0, 0.16, 7):
        a = tract.blend_pressure(1.0, 0.0, x, 0.16)      # = w_p
        b = tract.blend_velocity(1.0, 0.0, 0.16 - x, 0.16)  # = w_u(l-x) = w_p(x)
        assert a == pytest.approx(b, abs=1e-15)
