"""Command-line entry points.

One subcommand per process:

* reference     time-domain simulation; writes the decimated time series,
                one extracted steady cycle, a single-cycle waveform file
                and a summary with the period
* pinn-forward  train the forward network; writes the training history,
                the predicted cycle, a checkpoint and a summary with T
* pinn-inverse  estimate the subglottal pressure from a waveform file
* analyze       spectrum and resonance report for a time-series CSV
* gradcheck     verify tape gradients against finite differences

All numeric output is printed with repr-exact precision, so re-running a
command with the same config and seed reproduces the files byte for byte.
The environment variable PHONOSIM_THREADS caps the compiled-kernel thread
count. Summary files are `key = value` lines; CSV files carry a single
header row (schema version 1, documented in the README).
"""

import argparse
import dataclasses
import os
import sys
import time
from importlib import resources

import numpy as np

from . import analysis, geometry, params, pinn


def _apply_thread_env():
    count = os.environ.get("PHONOSIM_THREADS")
    if not count:
        return
    try:
        import numba
        numba.set_num_threads(int(count))
    except (ImportError, ValueError) as exc:
        raise ValueError(f"PHONOSIM_THREADS={count!r} is not usable: {exc}")


def _data_path(name):
    return str(resources.files("phonosim") / "data" / name)


def _load_settings(args, mode=None):
    path = getattr(args, "config", None)
    if path:
        pp, sc, rc = params.load_config(path)
    else:
        pp, sc, rc = params.defaults()
    if getattr(args, "set", None):
        pp, sc, rc = params.apply_overrides(pp, sc, rc, args.set)
    if mode is not None and rc.mode != mode:
        rc = dataclasses.replace(rc, mode=mode)
    return pp, sc, rc


def _load_area(args, pp):
    name = getattr(args, "area", None) or "a"
    if name in ("a", "u"):
        name = _data_path(f"area_{name}.txt")
    rows = geometry.load_area_table(name)
    return geometry.build_area_function(rows, pp.l)


def _outdir(args):
    path = args.out
    os.makedirs(path, exist_ok=True)
    return path


def _write_csv(path, names, columns):
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*columns):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError(f"{path}: empty file")
        names = [c.strip() for c in header.split(",")]
        rows = []
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(names)} columns")
            rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(names)}


def _write_summary(path, items):
    with open(path, "w") as fh:
        for key, val in items.items():
            if isinstance(val, (float, np.floating)):
                fh.write(f"{key} = {float(val)!r}\n")
            elif isinstance(val, (int, np.integer)):
                fh.write(f"{key} = {int(val)}\n")
            else:
                fh.write(f"{key} = {val}\n")


def _write_history(path, hist):
    keys = [k for k in ("epoch", "L_all", "L_f1", "L_f2", "L_t1", "L_t2",
                        "L_r", "scalar", "lr", "skipped") if k in hist]
    _write_csv(path, keys, [hist[k] for k in keys])


def _write_cycle(path, cyc):
    keys = ["phase", "x_1", "v_1", "x_2", "v_2", "u_g", "p_0", "p_l", "u_l"]
    _write_csv(path, keys, [np.asarray(cyc[k]) for k in keys])


def _progress(rc):
    every = max(1, rc.epochs // 10)

    def report(epoch, rec):
        if epoch % every == 0 or epoch == rc.epochs - 1:
            print(f"epoch {epoch + 1}/{rc.epochs}  loss {rec['L_all']:.6e}"
                  f"  scalar {rec['scalar']:.6g}", file=sys.stderr)

    return report


# ---------------------------------------------------------------------------
# subcommands

def _cmd_reference(args):
    from . import reference
    pp, sc, rc = _load_settings(args, mode="reference")
    af = _load_area(args, pp)
    out = _outdir(args)
    started = time.perf_counter()
    run = reference.run_reference(pp, af, rc)
    keys = ["t", "x_1", "v_1", "x_2", "v_2", "u_g", "p_0", "p_l", "u_l"]
    try:
        cyc = reference.extract_steady_cycle(run, rc.transient, rc.n_phase)
    except ValueError as exc:
        if "window" in str(exc):
            raise
        elapsed = time.perf_counter() - started
        _write_csv(os.path.join(out, "timeseries.csv"), keys,
                   [run.series(k) for k in keys])
        _write_summary(os.path.join(out, "summary.txt"),
                       {"mode": "reference", "scheme": run.scheme,
                        "report": "no oscillation detected",
                        "duration_s": rc.duration, "elapsed_s": elapsed})
        print(f"wrote {out}: no oscillation detected", file=sys.stderr)
        return 0
    elapsed = time.perf_counter() - started
    _write_csv(os.path.join(out, "timeseries.csv"), keys,
               [run.series(k) for k in keys])
    _write_csv(os.path.join(out, "cycle.csv"),
               ["phase"] + list(reference.CYCLE_KEYS),
               [cyc.phase] + [cyc.cycles[k] for k in reference.CYCLE_KEYS])
    analysis.write_waveform(os.path.join(out, "waveform.txt"), cyc.T,
                            cyc.cycles["p_l"])
    summary = {"mode": "reference", "scheme": run.scheme,
               "T_s": cyc.T, "f0_hz": 1.0 / cyc.T,
               "n_cycles": cyc.n_cycles,
               "cycle_rms_deviation_max": max(cyc.deviation.values()),
               "duration_s": rc.duration, "dt_s": rc.dt, "dx_m": rc.dx,
               "elapsed_s": elapsed}
    _write_summary(os.path.join(out, "summary.txt"), summary)
    print(f"wrote {out}: T = {cyc.T:.6g} s ({1.0 / cyc.T:.1f} Hz), "
          f"{elapsed:.1f} s", file=sys.stderr)
    return 0


def _train_and_write(args, pp, sc, rc, af, p_data=None, extra=None):
    from . import reference
    out = _outdir(args)
    ref_run = None
    if rc.mode == "forward" and (rc.fit_epochs > 0 or args.compare):
        print("running the reference solver first", file=sys.stderr)
        ref_run = reference.run_reference(pp, af, rc)
    started = time.perf_counter()
    try:
        model, hist = pinn.train(pp, sc, rc, af, p_data=p_data,
                                 reference=ref_run if rc.fit_epochs > 0
                                 else None, progress=_progress(rc))
    except pinn.TrainingDiverged as exc:
        _write_history(os.path.join(out, "history.csv"), exc.history)
        _write_summary(os.path.join(out, "summary.txt"),
                       {"mode": rc.mode, "diverged": 1, "error": exc})
        raise
    elapsed = time.perf_counter() - started
    _write_history(os.path.join(out, "history.csv"), hist)
    cyc = pinn.predict_cycle(model, pp, af, n=rc.n_phase, p_data=p_data)
    _write_cycle(os.path.join(out, "cycle.csv"), cyc)
    pinn.save_checkpoint(os.path.join(out, "checkpoint.txt"), model)
    summary = {"mode": rc.mode, "T_s": cyc["T"], "f0_hz": 1.0 / cyc["T"],
               "epochs": rc.epochs, "elapsed_s": elapsed}
    if hist["L_all"].size:
        summary["final_loss"] = float(hist["L_all"][-1])
    if "p_s" in cyc:
        summary["p_s_pa"] = cyc["p_s"]
    if extra:
        summary.update(extra)
    if ref_run is not None:
        ref_cyc = reference.extract_steady_cycle(ref_run, rc.transient,
                                                 rc.n_phase)
        summary["T_reference_s"] = ref_cyc.T
        summary["T_rel_err"] = analysis.relative_error(cyc["T"], ref_cyc.T)
    _write_summary(os.path.join(out, "summary.txt"), summary)
    scalar = cyc.get("p_s", cyc["T"])
    print(f"wrote {out}: scalar = {scalar:.6g}, {elapsed:.1f} s",
          file=sys.stderr)
    return 0


def _cmd_pinn_forward(args):
    pp, sc, rc = _load_settings(args, mode="forward")
    af = _load_area(args, pp)
    return _train_and_write(args, pp, sc, rc, af)


def _cmd_pinn_inverse(args):
    pp, sc, rc = _load_settings(args, mode="inverse")
    af = _load_area(args, pp)
    period, samples = analysis.read_waveform(args.waveform)
    # the waveform fixes the cycle period; only p_s stays trainable
    rc = dataclasses.replace(rc, T_init=period)
    wave = pinn.PeriodicWaveform.from_samples(samples, args.fourier_order)
    extra = {"p_s_true_pa": pp.p_s}
    return _train_and_write(args, pp, sc, rc, af, p_data=wave, extra=extra)


def _cmd_analyze(args):
    out = _outdir(args)
    cols = _read_csv(args.input)
    for name in ("t", args.column):
        if name not in cols:
            raise ValueError(f"{args.input}: no column {name!r}")
    t, y = cols["t"], cols[args.column]
    freqs, mag = analysis.spectrum(t, y)
    _write_csv(os.path.join(out, "spectrum.csv"),
               ["freq_hz", "magnitude_db"], [freqs, mag])
    formants = analysis.lpc_formants(t, y, rate=args.rate, order=args.order,
                                     preemphasis=args.preemphasis)
    _write_csv(os.path.join(out, "formants.csv"),
               ["freq_hz", "bandwidth_hz"],
               [np.array([f for f, _ in formants]),
                np.array([b for _, b in formants])])
    summary = {"column": args.column, "n_samples": t.size,
               "peak_hz": float(freqs[int(np.argmax(mag))])}
    for i, (f, b) in enumerate(formants[:4], 1):
        summary[f"F{i}_hz"] = f
        summary[f"B{i}_hz"] = b
    _write_summary(os.path.join(out, "summary.txt"), summary)
    print(f"wrote {out}: peak {summary['peak_hz']:.1f} Hz", file=sys.stderr)
    return 0


def _cmd_gradcheck(args):
    if not args.config:
        args.config = _data_path("gradcheck.cfg")
    pp, sc, rc = _load_settings(args)
    af = _load_area(args, pp)
    out = _outdir(args)
    p_data = None
    if rc.mode == "inverse":
        if not args.waveform:
            raise ValueError("inverse gradcheck needs --waveform")
        period, samples = analysis.read_waveform(args.waveform)
        rc = dataclasses.replace(rc, T_init=period)
        p_data = pinn.PeriodicWaveform.from_samples(samples,
                                                    args.fourier_order)
    started = time.perf_counter()
    err, errs = pinn.gradient_check(pp, sc, rc, af, p_data=p_data)
    elapsed = time.perf_counter() - started
    ok = err < args.tolerance
    _write_summary(os.path.join(out, "summary.txt"),
                   {"mode": rc.mode, "max_rel_err": float(err),
                    "n_parameters": int(errs.size),
                    "tolerance": args.tolerance, "elapsed_s": elapsed,
                    "passed": int(ok)})
    print(f"gradient check: max rel err {err:.3e} over {errs.size} "
          f"parameters, {elapsed:.1f} s", file=sys.stderr)
    if not ok:
        raise ValueError(
            f"gradient mismatch {err:.3e} exceeds {args.tolerance:.1e}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _common(sub, area=True):
    sub.add_argument("--config", help="settings file (ini format)")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one settings key (repeatable)")
    sub.add_argument("--out", default="phonosim-out",
                     help="output directory (default: %(default)s)")
    if area:
        sub.add_argument("--area", help="area table file, or builtin "
                         "'a' (default) or 'u'")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phonosim",
        description="voice-production simulation and neural cycle solving")
    subs = parser.add_subparsers(dest="command", required=True)

    ref = subs.add_parser("reference", help="time-domain simulation")
    _common(ref)
    ref.set_defaults(handler=_cmd_reference)

    fwd = subs.add_parser("pinn-forward", help="train the forward network")
    _common(fwd)
    fwd.add_argument("--compare", action="store_true",
                     help="also run the reference solver and report the "
                          "period difference")
    fwd.set_defaults(handler=_cmd_pinn_forward)

    inv = subs.add_parser("pinn-inverse",
                          help="estimate subglottal pressure from a waveform")
    _common(inv)
    inv.add_argument("--waveform", required=True,
                     help="one-cycle waveform file (period_s/rate_hz header)")
    inv.add_argument("--fourier-order", type=int, default=40,
                     help="harmonics kept from the waveform "
                          "(default: %(default)s)")
    inv.add_argument("--compare", action="store_true", help=argparse.SUPPRESS)
    inv.set_defaults(handler=_cmd_pinn_inverse)

    ana = subs.add_parser("analyze", help="spectrum and resonance report")
    _common(ana, area=False)
    ana.add_argument("--input", required=True, help="time-series CSV")
    ana.add_argument("--column", default="p_l",
                     help="signal column (default: %(default)s)")
    ana.add_argument("--rate", type=float, default=1.0e4,
                     help="analysis sample rate, Hz (default: %(default)s)")
    ana.add_argument("--order", type=int, default=12,
                     help="prediction order (default: %(default)s)")
    ana.add_argument("--preemphasis", type=float, default=0.97,
                     help="pre-emphasis coefficient (default: %(default)s)")
    ana.set_defaults(handler=_cmd_analyze)

    grad = subs.add_parser("gradcheck",
                           help="verify gradients by finite differences")
    _common(grad)
    grad.add_argument("--tolerance", type=float, default=1e-4,
                      help="largest accepted relative error "
                           "(default: %(default)s)")
    grad.add_argument("--waveform",
                      help="waveform file for inverse-mode checks")
    grad.add_argument("--fourier-order", type=int, default=40,
                      help=argparse.SUPPRESS)
    grad.set_defaults(handler=_cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_env()
        return args.handler(args)
    except (ValueError, OSError, FloatingPointError,
            pinn.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
