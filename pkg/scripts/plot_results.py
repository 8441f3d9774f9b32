#!/usr/bin/env python3
"""Plot the CSV artifacts written by the phonosim command line tool.

Reads an output directory produced by any subcommand and saves one PNG per
recognized artifact next to it.  Everything is driven by the CSV files alone,
so the numeric pipeline never needs a plotting dependency.

Usage:
    python3 scripts/plot_results.py OUTDIR [more outdirs...]
"""

import argparse
import csv
import os
import sys


def read_csv(path):
    """Return {column: list of floats} from a one-header-row CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {name: [] for name in header}
    for row in rows[1:]:
        for name, cell in zip(header, row):
            cols[name].append(float(cell))
    return cols


def save(fig, outdir, name):
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    print(f"wrote {path}")


def plot_timeseries(plt, outdir, cols):
    fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
    t = [1e3 * v for v in cols["t"]]
    axes[0].plot(t, [1e3 * v for v in cols["x_1"]], label="x_1")
    axes[0].plot(t, [1e3 * v for v in cols["x_2"]], label="x_2")
    axes[0].set_ylabel("displacement [mm]")
    axes[0].legend(loc="upper right")
    axes[1].plot(t, [1e3 * v for v in cols["u_g"]], color="tab:green")
    axes[1].set_ylabel("u_g [L/s]")
    axes[2].plot(t, cols["p_l"], color="tab:red")
    axes[2].set_ylabel("p_l [Pa]")
    axes[2].set_xlabel("time [ms]")
    save(fig, outdir, "timeseries.png")
    plt.close(fig)


def plot_cycle(plt, outdir, cols):
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    phase = cols["phase"]
    axes[0, 0].plot(phase, [1e3 * v for v in cols["x_1"]], label="x_1")
    axes[0, 0].plot(phase, [1e3 * v for v in cols["x_2"]], label="x_2")
    axes[0, 0].set_ylabel("displacement [mm]")
    axes[0, 0].legend(loc="upper right")
    axes[0, 1].plot(phase, [1e3 * v for v in cols["u_g"]], color="tab:green")
    axes[0, 1].set_ylabel("u_g [L/s]")
    axes[1, 0].plot(phase, cols["p_0"], label="p_0")
    axes[1, 0].plot(phase, cols["p_l"], label="p_l")
    axes[1, 0].set_ylabel("pressure [Pa]")
    axes[1, 0].set_xlabel("phase")
    axes[1, 0].legend(loc="upper right")
    axes[1, 1].plot(phase, [1e3 * v for v in cols["u_l"]], color="tab:purple")
    axes[1, 1].set_ylabel("u_l [L/s]")
    axes[1, 1].set_xlabel("phase")
    save(fig, outdir, "cycle.png")
    plt.close(fig)


def plot_history(plt, outdir, cols):
    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    epochs = cols["epoch"]
    for key in ("L_all", "L_f1", "L_f2", "L_t1", "L_t2", "L_r"):
        axes[0].semilogy(epochs, cols[key], label=key, lw=1)
    axes[0].set_ylabel("loss")
    axes[0].legend(loc="upper right", ncol=3, fontsize=8)
    axes[1].plot(epochs, cols["scalar"], color="tab:orange")
    axes[1].set_ylabel("trainable scalar (T or p_s)")
    axes[1].set_xlabel("epoch")
    save(fig, outdir, "history.png")
    plt.close(fig)


def plot_spectrum(plt, outdir, cols, formants=None):
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(cols["freq_hz"], cols["magnitude_db"], lw=1)
    if formants:
        for f in formants["freq_hz"]:
            ax.axvline(f, color="tab:red", ls="--", lw=0.8)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("magnitude [dB]")
    save(fig, outdir, "spectrum.png")
    plt.close(fig)


def plot_dir(plt, outdir):
    found = False
    tables = {}
    for name in ("timeseries", "cycle", "history", "spectrum", "formants"):
        path = os.path.join(outdir, name + ".csv")
        if os.path.exists(path):
            tables[name] = read_csv(path)
    if "timeseries" in tables:
        plot_timeseries(plt, outdir, tables["timeseries"])
        found = True
    if "cycle" in tables:
        plot_cycle(plt, outdir, tables["cycle"])
        found = True
    if "history" in tables:
        plot_history(plt, outdir, tables["history"])
        found = True
    if "spectrum" in tables:
        plot_spectrum(plt, outdir, tables["spectrum"],
                      tables.get("formants"))
        found = True
    if not found:
        print(f"no recognized CSV artifacts in {outdir}", file=sys.stderr)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdirs", nargs="+",
                    help="output directories written by the CLI")
    args = ap.parse_args(argv)
    try:
        import matplotlib
    except ImportError:
        print("matplotlib is not installed; run `pip install matplotlib` "
              "to enable plotting", file=sys.stderr)
        return 1
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    for outdir in args.outdirs:
        plot_dir(plt, outdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
