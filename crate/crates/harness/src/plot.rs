//! Matplotlib script that renders a run's `summary.csv`.

use crate::spec::{ExperimentKind, ExperimentSpec};

const TEMPLATE: &str = r#"#!/usr/bin/env python3
"""Plots summary.csv of the "@NAME@" run. Usage: python plot_@NAME@.py"""
import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
NAME = "@NAME@"
KIND = "@KIND@"
AXES = [@AXES@]


def num(s):
    try:
        return float(s)
    except ValueError:
        return math.nan


with open(os.path.join(HERE, "summary.csv"), newline="") as f:
    rows = list(csv.DictReader(f))


def series_key(r, x):
    parts = [r["variant"]]
    parts += ["%s=%s" % (a, r[a]) for a in AXES if a != x]
    if x != "snr_db":
        parts.append("snr=%s dB" % r["snr_db"])
    return ", ".join(parts)


def grouped(x):
    out = {}
    for r in rows:
        out.setdefault(series_key(r, x), []).append(r)
    return out


if KIND == "suppression":
    cols = [c for c in rows[0].keys() if c.startswith("mean_ratio_db_s")]
    fig, ax = plt.subplots()
    for r in rows:
        pts = [(int(c[len("mean_ratio_db_s"):]), num(r[c])) for c in cols if r[c] != ""]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=series_key(r, None))
    ax.set_xlabel("symbols")
    ax.set_ylabel("suppression ratio (dB)")
else:
    snrs = sorted({r["snr_db"] for r in rows})
    x = "snr_db" if len(snrs) > 1 or not AXES else AXES[0]
    if KIND == "crlb":
        panels = [("mse_v", "mean_crlb_v", "velocity MSE (m/s)^2"), ("mse_r", "mean_crlb_r", "range MSE (m^2)")]
    elif KIND == "sync":
        panels = [("mse_r", "mean_bound_r", "range MSE (m^2)"), ("mse_v", None, "velocity MSE (m/s)^2")]
    else:
        panels = [("mean_success", None, "association success"), ("mean_resolved", None, "resolved fraction")]
    fig, axs = plt.subplots(1, len(panels), figsize=(6 * len(panels), 4.5))
    for ax, (col, ref, ylabel) in zip(axs, panels):
        for key, rs in grouped(x).items():
            xs = [num(r[x]) for r in rs]
            line = ax.plot(xs, [num(r.get(col, "")) for r in rs], marker="o", label=key)[0]
            if ref and ref in rs[0]:
                ax.plot(xs, [num(r[ref]) for r in rs], linestyle="--", color=line.get_color(),
                        label=key + " (bound)")
        if KIND in ("crlb", "sync"):
            ax.set_yscale("log")
        ax.set_xlabel(x)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
    ax = axs[0]
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "plot_%s.png" % NAME), dpi=150)
"#;

pub fn plot_script(spec: &ExperimentSpec) -> String {
    let axes = spec.axes.iter().map(|a| format!("\"{}\"", a.key)).collect::<Vec<_>>().join(", ");
    let kind = match spec.kind {
        ExperimentKind::Suppression => "suppression",
        ExperimentKind::Crlb => "crlb",
        ExperimentKind::Sync => "sync",
        ExperimentKind::Association => "association",
    };
    TEMPLATE.replace("@NAME@", &spec.name).replace("@KIND@", kind).replace("@AXES@", &axes)
}
