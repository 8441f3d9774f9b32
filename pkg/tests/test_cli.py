"""End-to-end checks of the command line entry points."""

import numpy as np
import pytest

from phonosim import analysis, cli, pinn


TINY = ["--set", "width=6", "--set", "m=2", "--set", "N_FB=1",
        "--set", "N_TB=2", "--set", "N_f=32", "--set", "N_t=16",
        "--set", "N_r=8", "--set", "minibatches=2", "--set", "epochs=4",
        "--set", "fit_epochs=0", "--set", "n_phase=64"]
SHORT_RUN = ["--set", "duration=0.06", "--set", "transient=0.02"]


def _summary(path):
    out = {}
    for line in path.read_text().splitlines():
        key, _, val = line.partition(" = ")
        try:
            out[key] = float(val)
        except ValueError:
            out[key] = val
    return out


def _read_columns(path):
    lines = path.read_text().splitlines()
    names = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")]
                     for line in lines[1:]])
    return {name: data[:, i] for i, name in enumerate(names)}


@pytest.fixture(scope="module")
def ref_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ref"
    assert cli.main(["reference", "--out", str(out)] + SHORT_RUN) == 0
    return out


def test_reference_writes_artifacts(ref_out):
    for name in ("timeseries.csv", "cycle.csv", "waveform.txt",
                 "summary.txt"):
        assert (ref_out / name).exists()
    summary = _summary(ref_out / "summary.txt")
    assert 4.0e-3 < summary["T_s"] < 7.0e-3
    assert summary["f0_hz"] == pytest.approx(1.0 / summary["T_s"])
    cols = _read_columns(ref_out / "cycle.csv")
    assert set(cols) == {"phase", "x_1", "v_1", "x_2", "v_2", "u_g",
                        "p_0", "p_l", "u_l"}
    period, samples = analysis.read_waveform(str(ref_out / "waveform.txt"))
    assert period == summary["T_s"]
    assert samples.size == cols["phase"].size


def test_reference_rerun_is_byte_identical(ref_out, tmp_path):
    out = tmp_path / "again"
    assert cli.main(["reference", "--out", str(out)] + SHORT_RUN) == 0
    assert (out / "timeseries.csv").read_bytes() == \
        (ref_out / "timeseries.csv").read_bytes()
    assert (out / "cycle.csv").read_bytes() == \
        (ref_out / "cycle.csv").read_bytes()


def test_reference_reports_no_oscillation(tmp_path, capsys):
    out = tmp_path / "quiet"
    code = cli.main(["reference", "--out", str(out), "--set", "p_s=0",
                     "--set", "duration=0.03", "--set", "transient=0.005"])
    assert code == 0
    assert "no oscillation detected" in capsys.readouterr().err
    summary = _summary(out / "summary.txt")
    assert summary["report"] == "no oscillation detected"
    assert (out / "timeseries.csv").exists()
    assert not (out / "cycle.csv").exists()


def test_pinn_forward_writes_artifacts(tmp_path):
    out = tmp_path / "fwd"
    assert cli.main(["pinn-forward", "--out", str(out)] + TINY) == 0
    hist = _read_columns(out / "history.csv")
    assert hist["epoch"].size == 4
    assert np.all(np.isfinite(hist["L_all"]))
    cyc = _read_columns(out / "cycle.csv")
    assert cyc["phase"].size == 64
    model = pinn.load_checkpoint(str(out / "checkpoint.txt"))
    assert model.mode == "forward"
    summary = _summary(out / "summary.txt")
    assert summary["T_s"] == pytest.approx(model.period(), rel=1e-12)
    assert "final_loss" in summary


def test_pinn_forward_rerun_is_byte_identical(tmp_path):
    outs = [tmp_path / "one", tmp_path / "two"]
    for out in outs:
        assert cli.main(["pinn-forward", "--out", str(out)] + TINY) == 0
    for name in ("history.csv", "cycle.csv", "checkpoint.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_pinn_forward_compare_reports_reference_period(tmp_path):
    out = tmp_path / "cmp"
    code = cli.main(["pinn-forward", "--out", str(out), "--compare"]
                    + TINY + SHORT_RUN)
    assert code == 0
    summary = _summary(out / "summary.txt")
    assert 4.0e-3 < summary["T_reference_s"] < 7.0e-3
    assert summary["T_rel_err"] >= 0.0


def test_pinn_inverse_reports_pressure(tmp_path):
    wave = tmp_path / "wave.txt"
    phase = np.arange(64) / 64.0
    analysis.write_waveform(str(wave), 5.0e-3,
                            30.0 * np.sin(2.0 * np.pi * phase) + 5.0)
    out = tmp_path / "inv"
    code = cli.main(["pinn-inverse", "--waveform", str(wave),
                     "--out", str(out)] + TINY)
    assert code == 0
    summary = _summary(out / "summary.txt")
    assert summary["p_s_true_pa"] == 785.0
    assert summary["p_s_pa"] > 0.0
    hist = _read_columns(out / "history.csv")
    # the scalar column tracks the pressure estimate, seeded near +20%
    assert abs(hist["scalar"][0] - 942.0) < 50.0
    model = pinn.load_checkpoint(str(out / "checkpoint.txt"))
    assert model.mode == "inverse"
    assert model.period() == pytest.approx(5.0e-3)


def test_pinn_inverse_requires_waveform(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["pinn-inverse", "--out", str(tmp_path / "x")])


def test_analyze_locates_synthetic_tone(tmp_path, capsys):
    rate, n = 1.0e4, 4096
    t = np.arange(n) / rate
    y = np.sin(2.0 * np.pi * 440.0 * t)
    csv = tmp_path / "tone.csv"
    csv.write_text("t,p\n" + "".join(
        f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, y)))
    out = tmp_path / "ana"
    code = cli.main(["analyze", "--input", str(csv), "--column", "p",
                     "--out", str(out)])
    assert code == 0
    summary = _summary(out / "summary.txt")
    assert abs(summary["peak_hz"] - 440.0) < 5.0
    if "F1_hz" in summary:
        assert abs(summary["F1_hz"] - 440.0) < 30.0
    assert (out / "spectrum.csv").exists()
    assert (out / "formants.csv").exists()


def test_analyze_rejects_missing_column(tmp_path, capsys):
    csv = tmp_path / "bad.csv"
    csv.write_text("t,q\n0.0,1.0\n1.0,2.0\n")
    code = cli.main(["analyze", "--input", str(csv),
                     "--out", str(tmp_path / "x")])
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error:") and len(err.splitlines()) == 1


def test_unknown_override_is_one_line_error(tmp_path, capsys):
    code = cli.main(["reference", "--out", str(tmp_path / "x"),
                     "--set", "nonsense=1"])
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert err == "error: unknown config key 'nonsense'"


def test_missing_config_file_is_error(tmp_path, capsys):
    code = cli.main(["reference", "--out", str(tmp_path / "x"),
                     "--config", str(tmp_path / "none.cfg")])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_gradcheck_passes_with_default_config(tmp_path):
    out = tmp_path / "gc"
    assert cli.main(["gradcheck", "--out", str(out)]) == 0
    summary = _summary(out / "summary.txt")
    assert summary["passed"] == 1
    assert summary["max_rel_err"] < 1.0e-4


def test_gradcheck_fails_when_tolerance_tightened(tmp_path, capsys):
    out = tmp_path / "gc"
    code = cli.main(["gradcheck", "--out", str(out),
                     "--tolerance", "1e-12"])
    assert code == 2
    assert _summary(out / "summary.txt")["passed"] == 0
    assert capsys.readouterr().err.splitlines()[-1].startswith("error:")


def test_thread_count_env_var(tmp_path, monkeypatch, capsys):
    csv = tmp_path / "tone.csv"
    t = np.arange(64) / 1.0e4
    csv.write_text("t,p_l\n" + "".join(
        f"{float(a)!r},{float(np.sin(3000.0 * a))!r}\n" for a in t))
    monkeypatch.setenv("PHONOSIM_THREADS", "1")
    assert cli.main(["analyze", "--input", str(csv),
                     "--out", str(tmp_path / "x")]) == 0
    monkeypatch.setenv("PHONOSIM_THREADS", "bogus")
    assert cli.main(["analyze", "--input", str(csv),
                     "--out", str(tmp_path / "y")]) == 2
    assert "PHONOSIM_THREADS" in capsys.readouterr().err
