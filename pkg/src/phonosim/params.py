"""Model constants and run configuration.

Everything is SI. The defaults reproduce the standard two-mass vocal-fold
parameter set together with the acoustic constants of air. All values can be
overridden from a plain-text config file with sections [physics], [smoothing]
and [run]; keys are the symbol names used throughout the package.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalParams:
    """Mechanical, aerodynamic and acoustic constants."""

    p_s: float = 785.0           # subglottal pressure, Pa
    m_1: float = 1.25e-4         # fold masses, kg
    m_2: float = 0.25e-4
    k_1: float = 80.0            # linear springs, N/m
    k_2: float = 8.0
    k_c: float = 25.0            # coupling spring, N/m
    c_1: float = 0.020           # damping, N s/m
    c_2: float = 0.017
    eta_k1: float = 1.0e6        # cubic spring coefficients, 1/m^2
    eta_k2: float = 1.0e6
    h_1: float = 240.0           # collision springs, N/m
    h_2: float = 24.0
    eta_h1: float = 5.0e6        # cubic collision coefficients, 1/m^2
    eta_h2: float = 5.0e6
    x_min1: float = -1.79e-4     # collision positions, m (negative)
    x_min2: float = -1.79e-4
    d_1: float = 2.5e-3          # fold thicknesses along the flow, m
    d_2: float = 0.5e-3
    l_g: float = 1.4e-2          # fold length across the flow, m
    rho: float = 1.20            # air density, kg/m^3
    K: float = 1.39e5            # bulk modulus of air, Pa
    c_air: float = 340.0         # speed of sound, m/s
    mu: float = 1.9e-5           # air viscosity, Pa s
    eta_air: float = 1.40        # specific heat ratio
    lambda_air: float = 2.41e-2  # thermal conductivity, W/(m K)
    c_p: float = 1.01e3          # specific heat at constant pressure, J/(kg K)
    alpha_R: float = 25.0        # wall-loss multipliers
    alpha_G: float = 1.0
    omega_c: float = 942.0       # angular frequency for wall losses, rad/s
    l: float = 0.16              # vocal-tract length, m

    @property
    def A_g01(self):
        """Rest area of the lower flow channel, m^2."""
        return -2.0 * self.l_g * self.x_min1

    @property
    def A_g02(self):
        return -2.0 * self.l_g * self.x_min2


@dataclass(frozen=True)
class SmoothingCoefficients:
    """Sharpness of the differentiable stand-ins for the piecewise fold physics.

    Larger values approach the exact branches. Defaults were chosen so that a
    smoothed reference run stays within 2% of the exact one (see
    reference.smoothing_deviation).
    """

    beta_Ag: float = 5.0e4  # glottal area softplus, 1/m
    beta_f: float = 5.0e4   # force / collision sigmoid gates, 1/m
    beta_p: float = 0.05    # driving-pressure softplus, 1/Pa


@dataclass
class RunConfig:
    """Solver and training settings."""

    mode: str = "forward"        # forward | inverse | reference
    seed: int = 0
    epochs: int = 20000
    minibatches: int = 12
    N_f: int = 60000             # fold collocation times
    N_t: int = 500               # tract space-time points
    N_r: int = 500               # radiation boundary times
    m: int = 16                  # Fourier feature pairs
    N_FB: int = 3                # fold network blocks
    N_TB: int = 5                # tract network blocks
    width: int = 200             # nodes per fully connected layer
    lambda_f: float = 3.50e9     # loss weights
    lambda_t1: float = 2.72e19
    lambda_t2: float = 1.01e7
    lambda_r: float = 1.00e10
    lambda_init: float = 6.25e-4  # Adam initial learning rate
    beta_Adam: float = 1.25e-4    # Adam learning-rate decay
    T_init: float = 6.2e-3       # initial period guess, s
    ps_init: float = 942.0       # initial subglottal pressure guess, Pa
    x_scale: float = 1.0e-3      # output scale of fold displacements, m
    p_scale: float = 1.0e3       # output scale of tract pressure, Pa
    u_scale: float = 1.0e-3      # output scale of tract volume velocity, m^3/s
    scalar_scale: float = 0.2    # relative parameterization of T and p_s
    phase_anchor: float = 0.0    # weight of the optional phase pin, 0 disables
    fit_epochs: int = 0          # supervised curve-fit steps before training
    fit_points: int = 20000      # tract samples kept for the curve fit
    duration: float = 0.35       # reference run length, s
    transient: float = 0.2       # start-up interval discarded, s
    dx: float = 1.0e-4           # tract grid step, m
    dt: float = 5.88e-8          # time step, s
    n_phase: int = 256           # samples per extracted cycle


_SECTIONS = {
    "physics": PhysicalParams,
    "smoothing": SmoothingCoefficients,
    "run": RunConfig,
}

# (field, requirement) pairs checked by validate(); everything else only needs
# to parse.
_STRICT_POSITIVE = {
    "physics": ("m_1", "m_2", "k_1", "k_2", "k_c", "c_1", "c_2", "h_1", "h_2",
                "d_1", "d_2", "l_g", "rho", "K", "c_air", "mu", "eta_air",
                "lambda_air", "c_p", "omega_c", "l"),
    "smoothing": ("beta_Ag", "beta_f", "beta_p"),
    "run": ("minibatches", "N_f", "N_t", "N_r", "m", "N_FB", "N_TB", "width",
            "lambda_f", "lambda_t1", "lambda_t2", "lambda_r", "lambda_init",
            "T_init", "ps_init", "x_scale", "p_scale", "u_scale",
            "scalar_scale", "dx", "dt", "n_phase", "fit_points"),
}
_NONNEGATIVE = {
    "physics": ("p_s", "eta_k1", "eta_k2", "eta_h1", "eta_h2",
                "alpha_R", "alpha_G"),
    "run": ("epochs", "beta_Adam", "phase_anchor", "fit_epochs",
            "duration", "transient"),
}


def defaults():
    return PhysicalParams(), SmoothingCoefficients(), RunConfig()


def validate(pp: PhysicalParams, sc: SmoothingCoefficients, rc: RunConfig):
    """Raise ValueError naming the offending key on any invariant violation."""
    objs = {"physics": pp, "smoothing": sc, "run": rc}
    for section, names in _STRICT_POSITIVE.items():
        for name in names:
            if not getattr(objs[section], name) > 0:
                raise ValueError(f"config key '{name}' must be positive")
    for section, names in _NONNEGATIVE.items():
        for name in names:
            if getattr(objs[section], name) < 0:
                raise ValueError(f"config key '{name}' must be nonnegative")
    if not pp.x_min1 < 0:
        raise ValueError("config key 'x_min1' must be negative")
    if not pp.x_min2 < 0:
        raise ValueError("config key 'x_min2' must be negative")
    if rc.mode not in ("forward", "inverse", "reference"):
        raise ValueError("config key 'mode' must be forward, inverse or reference")


def _parse_value(section, name, text):
    ftype = _SECTIONS[section].__dataclass_fields__[name].type
    try:
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
        return text
    except ValueError:
        raise ValueError(f"config key '{name}' has unparseable value {text!r}") from None


def load_config(path):
    """Read a config file; absent keys keep their defaults.

    Returns (PhysicalParams, SmoothingCoefficients, RunConfig) after
    validation. Unknown sections or keys are rejected by name.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes="#")
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    values = {"physics": {}, "smoothing": {}, "run": {}}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section '[{section}]'")
        known = _SECTIONS[section].__dataclass_fields__
        for name, text in cp.items(section):
            if name not in known:
                raise ValueError(f"unknown config key '{name}' in [{section}]")
            values[section][name] = _parse_value(section, name, text)
    pp = PhysicalParams(**values["physics"])
    sc = SmoothingCoefficients(**values["smoothing"])
    rc = RunConfig(**values["run"])
    validate(pp, sc, rc)
    return pp, sc, rc


def write_config(path, pp, sc, rc):
    """Write all keys explicitly so load(write(load(p))) is stable."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for section, obj in (("physics", pp), ("smoothing", sc), ("run", rc)):
        cp[section] = {f.name: (v if isinstance(v, str) else repr(v))
                       for f in dataclasses.fields(obj)
                       for v in (getattr(obj, f.name),)}
    with open(path, "w") as fh:
        cp.write(fh)


def apply_overrides(pp, sc, rc, overrides):
    """Apply key=value strings from the command line.

    Key names are unique across sections, so a bare name is enough.
    """
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        name, text = item.split("=", 1)
        name = name.strip()
        for section, cls in _SECTIONS.items():
            if name in cls.__dataclass_fields__:
                value = _parse_value(section, name, text.strip())
                obj = {"physics": pp, "smoothing": sc, "run": rc}[section]
                new = dataclasses.replace(obj, **{name: value})
                if section == "physics":
                    pp = new
                elif section == "smoothing":
                    sc = new
                else:
                    rc = new
                break
        else:
            raise ValueError(f"unknown config key '{name}'")
    validate(pp, sc, rc)
    return pp, sc, rc
