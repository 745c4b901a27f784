"""CSV artifacts, run metadata and the gnuplot script."""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import config_to_dict, dump_config

__all__ = ["write_rows", "write_singular_values", "write_diagnostic", "write_terminals",
           "write_checks", "write_meta", "write_plot_script"]


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_rows(path, header, rows):
    """CSV with shortest round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_singular_values(path, fact):
    s = fact.s
    write_rows(path, ["index", "s", "ratio", "kept"],
               ([i + 1, v, s[0] / v, i < fact.terms] for i, v in enumerate(s)))


def write_diagnostic(path, diag, fact):
    write_rows(path, ["index", "s", "coefficient", "partial_sum"],
               ([i + 1, s, c, p] for i, (s, c, p) in
                enumerate(zip(fact.s, diag.coefficients, diag.partial_sums))))


def write_terminals(path, betas, terminals):
    betas = np.atleast_2d(betas)
    P, R, n = terminals.shape
    d = betas.shape[1]
    head = ["trial"] + (["beta"] if d == 1 else [f"beta{i + 1}" for i in range(d)]) + \
        [f"x{i + 1}" for i in range(n)]
    write_rows(path, head, ([r, *betas[j], *terminals[j, r]]
                            for j in range(P) for r in range(R)))


def write_checks(path, checks):
    write_rows(path, ["check", "status", "measured", "expected", "gating"],
               ([c.name, "PASS" if c.passed else "FAIL", c.measured, c.expected, c.gating]
                for c in checks))


def _plain(x):
    # tomli_w only accepts builtin scalars
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def write_meta(path, cfg, result):
    """run_meta.toml: the effective configuration plus a ``result`` table.

    The file loads back as a configuration; ``result`` is ignored then.
    """
    data = config_to_dict(cfg)
    data["result"] = _plain(dict(result))
    data["result"]["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    dump_config(data, path)


_PLOTS = {
    "control.csv": """set title "Synthesized control"
set xlabel "t"
plot for [i=2:{ncol}] "control.csv" using 1:i with lines title columnhead(i)
""",
    "singular_values.csv": """set title "Singular values"
set logscale y
plot "singular_values.csv" using 1:2 with linespoints title "s_i"
unset logscale y
""",
    "stats.csv": """set title "Terminal MSE across the ensemble"
set xlabel "parameter"
plot "stats.csv" using 1:(column("mse")):(3*column("mse_se")) with yerrorbars title "empirical", \\
     "stats.csv" using 1:(column("mse_theory")) with lines title "tr C"
""",
    "sweep_beta.csv": """set title "MSE over the parameter at fixed horizon"
set xlabel "beta"
plot "sweep_beta.csv" using 1:2:(3*$3) with yerrorbars title "empirical", \\
     "sweep_beta.csv" using 1:4 with lines title "tr C"
""",
    "sweep_T.csv": """set title "MSE over the horizon at fixed parameter"
set xlabel "T"
plot "sweep_T.csv" using 1:2:(3*$3) with yerrorbars title "empirical", \\
     "sweep_T.csv" using 1:4 with lines title "tr C"
""",
}


def write_plot_script(directory, files, ncontrol=2):
    """plot.gp drawing whichever of the known CSVs were written, one page each."""
    directory = Path(directory)
    parts = ['set datafile separator ","', "set key autotitle columnhead",
             'set terminal pdfcairo size 6in,4in', 'set output "plots.pdf"', ""]
    for name in files:
        if name in _PLOTS:
            parts.append(_PLOTS[name].replace("{ncol}", str(ncontrol + 1)))
    (directory / "plot.gp").write_text("\n".join(parts))
