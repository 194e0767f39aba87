"""Experiment orchestration: validation, k-sweeps, result files and the convergence report."""
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .config import ScenarioConfig
from .densities import density_I_u, density_J_u, density_report, observable
from .errors import StructuralError
from .reduction_maps import gram_report, toeplitz_pair
from .torus_action import validate_scenario

TOOL_VERSION = f"gsquant {__version__}"
THREADS_ENV = "GSQUANT_THREADS"

DENSITY_COLUMNS = ["scenario", "node"]  # then u_<a> per free moment coordinate, then the rest
DENSITY_TAIL = ["k", "I_k", "J_k", "limit", "deviation"]
GRAM_COLUMNS = ["scenario", "k", "corrected", "index", "multi_index", "G_up", "G_down", "ratio",
                "defect", "identity_residual"]
TOEPLITZ_COLUMNS = ["scenario", "k", "observable", "index", "T_up", "T_down", "conjugated", "defect"]
CONVERGENCE_COLUMNS = ["k", "max_dev_I", "max_dev_J", "defect_uncorrected", "defect_corrected"]

# gates applied by report()
LIMIT_RTOL = 0.05
IDENTITY_RTOL = 1e-5
IDENTITY_KMAX = 16
DEFECT_FLOOR = 0.02
DEFECT_KMIN = 16
DEFECT_FINAL = 0.05
LIMIT_KMIN = 8


class ValidationFailed(Exception):
    def __init__(self, text):
        super().__init__(text)
        self.text = text


def default_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise StructuralError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def validate_config(cfg):
    """Validation reports for every (k, corrected) cell the config asks for."""
    model, action = cfg.build()
    reports = [validate_scenario(model, action, k, False) for k in cfg.k]
    reports += [validate_scenario(model, action, k, True) for k in cfg.k_corrected]
    lines = []
    for rep in reports:
        head = f"k={rep.k} {'corrected' if rep.corrected else 'uncorrected'}: "
        lines.append(head + ("PASS" if rep.passed else "FAIL"))
        if not rep.passed:
            lines += ["  " + line for line in rep.summary().splitlines()
                      if "FAIL" in line and "(not required)" not in line]
    return all(r.passed for r in reports), "\n".join(lines)


def density_nodes(action, order):
    sl = action.slice
    t, _ = sl.rule(order)
    return action.u_from_mu(sl.mu(t))


def _cell(cfg, action, nodes, k):
    t0 = time.perf_counter()
    out = {"k": k, "I": None, "J": None, "gram": {}, "toeplitz": {}}
    out["I"] = density_I_u(action, nodes, k)
    out["J"] = density_J_u(action, nodes, k)
    modes = ([False] if k in cfg.k else []) + ([True] if k in cfg.k_corrected else [])
    for corrected in modes:
        out["gram"][corrected] = gram_report(action, k, corrected, level=cfg.quad_level,
                                             with_identity=True)
    if True in out["gram"] and out["gram"][True].dim:
        for tag in cfg.observables:
            f = observable(tag, action.model)
            out["toeplitz"][tag] = toeplitz_pair(action, k, f, level=cfg.quad_level)
    out["seconds"] = time.perf_counter() - t0
    return out


def _csv_text(cfg_hash, columns, rows):
    buf = io.StringIO(newline="")
    buf.write(f"# config_hash={cfg_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _num(x):
    x = float(x)
    return None if math.isnan(x) else x


def _plot_script(cfg_hash, name):
    return f"""# config_hash={cfg_hash}
# gnuplot script; run from the output directory: gnuplot plot.gp
set datafile separator ','
set datafile missing 'nan'
set terminal pngcairo size 900,600
set output 'convergence.png'
set logscale xy
set xlabel 'k'
set ylabel 'deviation / defect'
set key outside
set title '{name}'
plot 'convergence.csv' skip 2 using 1:2 with linespoints title 'max |I_k - limit|', \\
     '' skip 2 using 1:3 with linespoints title 'max |J_k - 1|', \\
     '' skip 2 using 1:4 with linespoints title 'defect A_k', \\
     '' skip 2 using 1:5 with linespoints title 'defect B_k'
"""


def run(cfg, out_dir=None, threads=None):
    """Execute the config; returns the manifest dict. Raises ValidationFailed before any work."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output)
    threads = threads or default_threads()
    walls = {}
    t0 = time.perf_counter()
    ok, text = validate_config(cfg)
    walls["validate"] = time.perf_counter() - t0
    if not ok:
        raise ValidationFailed(text)
    model, action = cfg.build()
    h = cfg.hash
    ks = sorted(set(cfg.k) | set(cfg.k_corrected))
    nodes = density_nodes(action, cfg.density_nodes)

    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        cells = list(pool.map(lambda k: _cell(cfg, action, nodes, k), ks))
    walls["cells"] = {str(c["k"]): c["seconds"] for c in cells}
    walls["compute"] = time.perf_counter() - t0

    # single-threaded merge in k order
    t0 = time.perf_counter()
    I = np.column_stack([c["I"] for c in cells])
    J = np.column_stack([c["J"] for c in cells])
    dens = density_report(action, model, nodes, ks, I, J, cfg.name)
    coords = [f"u_{a}" for a in dens.moment_layout]
    files = {}
    files["densities.csv"] = _csv_text(h, DENSITY_COLUMNS + coords + DENSITY_TAIL, dens.rows())

    gram_rows, toep_rows, conv_rows = [], [], []
    summary = {"config_hash": h, "scenario": cfg.name, "d": action.d,
               "densities": {"k": ks, "limit_I": [float(x) for x in dens.limit_I],
                             "max_dev_I": [float(x) for x in dens.max_dev_I],
                             "max_rel_dev_I": [float(x) for x in
                                               np.max(np.abs(I / dens.limit_I[:, None] - 1.0), axis=0)],
                             "max_dev_J": [float(x) for x in dens.max_dev_J],
                             "slope_I": _num(dens.slope_I), "slope_J": _num(dens.slope_J)},
               "gram": {"uncorrected": [], "corrected": []},
               "toeplitz": {tag: [] for tag in cfg.observables}}
    for ci, c in enumerate(cells):
        k = c["k"]
        defects = {}
        for corrected, rep in sorted(c["gram"].items()):
            key = "corrected" if corrected else "uncorrected"
            summary["gram"][key].append({"k": k, "dim": rep.dim, "defect": rep.defect,
                                         "identity_residual": _num(rep.identity_residual)})
            defects[corrected] = rep.defect
            for i, idx in enumerate(rep.basis):
                gu, gd = rep.G_up[i, i], rep.G_down[i, i]
                gram_rows.append([cfg.name, k, int(corrected), i, " ".join(map(str, idx)),
                                  float(gu), float(gd), float(gd / gu), rep.defect,
                                  rep.identity_residual])
        for tag, tp in c["toeplitz"].items():
            summary["toeplitz"][tag].append({"k": k, "defect": tp.defect})
            for i in range(tp.T_up.shape[0]):
                toep_rows.append([cfg.name, k, tag, i, float(tp.T_up[i, i].real),
                                  float(tp.T_down[i, i].real), float(tp.conjugated[i, i].real),
                                  tp.defect])
        conv_rows.append([k, float(dens.max_dev_I[ci]), float(dens.max_dev_J[ci]),
                          defects.get(False, float("nan")), defects.get(True, float("nan"))])
    files["gram.csv"] = _csv_text(h, GRAM_COLUMNS, gram_rows)
    if cfg.k_corrected:
        files["toeplitz.csv"] = _csv_text(h, TOEPLITZ_COLUMNS, toep_rows)
    files["convergence.csv"] = _csv_text(h, CONVERGENCE_COLUMNS, conv_rows)
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    files["plot.gp"] = _plot_script(h, cfg.name)

    out_dir.mkdir(parents=True, exist_ok=True)
    listing = []
    for name, text in files.items():
        data = text.encode("utf-8")
        (out_dir / name).write_bytes(data)
        listing.append({"name": name, "sha256": hashlib.sha256(data).hexdigest()})
    walls["write"] = time.perf_counter() - t0
    manifest = {"config_hash": h, "tool_version": TOOL_VERSION, "backend": BACKEND,
                "threads": threads, "config": cfg.to_dict(), "files": listing, "wall_seconds": walls}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_manifest(path):
    """Manifest plus the directory it lives in; checks every listed file and its hash header."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise StructuralError(f"cannot read manifest {path}: {e}") from None
    if not isinstance(manifest, dict) or not manifest.get("files") or "config_hash" not in manifest:
        raise StructuralError(f"manifest {path} lists no files")
    base = path.parent
    h = manifest["config_hash"]
    for entry in manifest["files"]:
        f = base / entry["name"]
        if not f.is_file():
            raise StructuralError(f"manifest lists {entry['name']} but it is missing")
        head = f.read_text(encoding="utf-8")[:4096]
        if h not in head:
            raise StructuralError(f"{entry['name']} does not carry config hash {h}")
    return manifest, base


def _decreasing(xs, strict=False, atol=1e-12):
    # non-strict comparisons ignore round-off differences below atol
    xs = list(xs)
    if strict:
        return all(b < a for a, b in zip(xs, xs[1:]))
    return all(b <= a + atol for a, b in zip(xs, xs[1:]))


def _fmt(x):
    return "nan" if x is None else f"{x:.3e}"


def report(path):
    """Per-property PASS/FAIL lines against the shipped tolerances; returns (lines, all_passed)."""
    manifest, base = load_manifest(path)
    names = {e["name"] for e in manifest["files"]}
    if "summary.json" not in names:
        raise StructuralError("manifest has no summary.json")
    s = json.loads((base / "summary.json").read_text(encoding="utf-8"))
    lines, ok = [], True

    def gate(label, passed, detail):
        nonlocal ok
        if passed is None:
            lines.append(f"{label}: {detail}: SKIP")
            return
        ok = ok and passed
        lines.append(f"{label}: {detail}: {'PASS' if passed else 'FAIL'}")

    dn = s["densities"]
    ks = dn["k"]
    lim = dn["limit_I"]
    tail = [i for i, k in enumerate(ks) if k >= LIMIT_KMIN]
    rel_I = dn["max_rel_dev_I"]
    lim_txt = f"{min(lim):.6f}" if max(lim) - min(lim) < 1e-12 else f"[{min(lim):.6f}, {max(lim):.6f}]"
    gate("I_k limit",
         _decreasing([rel_I[i] for i in tail]) and rel_I[-1] < LIMIT_RTOL if tail else None,
         f"I_k -> 2^(-d/2) vol(G.x) = {lim_txt}, max rel dev @k={ks[-1]} = {_fmt(rel_I[-1])} "
         f"(< {LIMIT_RTOL:.0%}, decreasing for k >= {LIMIT_KMIN}), slope {_fmt(dn['slope_I'])}")
    dJ = dn["max_dev_J"]
    gate("J_k limit",
         _decreasing([dJ[i] for i in tail]) and dJ[-1] < LIMIT_RTOL if tail else None,
         f"J_k -> 1, max dev @k={ks[-1]} = {_fmt(dJ[-1])} "
         f"(< {LIMIT_RTOL:.0%}, decreasing for k >= {LIMIT_KMIN}), slope {_fmt(dn['slope_J'])}")

    for key in ("uncorrected", "corrected"):
        rows = [r for r in s["gram"][key] if r["k"] <= IDENTITY_KMAX and r["dim"]]
        worst = max((r["identity_residual"] for r in rows), default=None)
        gate(f"norm identity ({key})", None if not rows else worst < IDENTITY_RTOL,
             f"max rel residual over k <= {IDENTITY_KMAX} = {_fmt(worst)} (< {IDENTITY_RTOL:g})"
             if rows else "no sections with k <= 16")

    big = [r for r in s["gram"]["uncorrected"] if r["k"] >= DEFECT_KMIN]
    multi = [r for r in big if r["dim"] > 1]
    gate("A_k non-unitarity", None if not multi else min(r["defect"] for r in multi) >= DEFECT_FLOOR,
         f"min defect over k >= {DEFECT_KMIN} = {_fmt(min(r['defect'] for r in multi))} "
         f"(>= floor {DEFECT_FLOOR})" if multi else "spaces are one-dimensional")
    big = [r for r in s["gram"]["corrected"] if r["k"] >= DEFECT_KMIN]
    multi = [r for r in big if r["dim"] > 1]
    gate("B_k unitarity",
         None if len(multi) < 2 else _decreasing([r["defect"] for r in multi], strict=True)
         and multi[-1]["defect"] < DEFECT_FINAL,
         f"defect strictly decreasing for k >= {DEFECT_KMIN}, final @k={multi[-1]['k']} = "
         f"{_fmt(multi[-1]['defect'])} (< {DEFECT_FINAL})" if len(multi) >= 2
         else "fewer than two multi-dimensional spaces with k >= 16")
    for tag, rows in sorted(s["toeplitz"].items()):
        big = [r for r in rows if r["k"] >= DEFECT_KMIN]
        gate(f"Toeplitz ({tag})",
             None if len(big) < 2 else _decreasing([r["defect"] for r in big])
             and big[-1]["defect"] < DEFECT_FINAL,
             f"defect decreasing for k >= {DEFECT_KMIN}, final @k={big[-1]['k']} = "
             f"{_fmt(big[-1]['defect'])} (< {DEFECT_FINAL})" if len(big) >= 2
             else "fewer than two k >= 16")
    return lines, ok


def load_config(path, k=None, quad_level=None, output=None):
    return ScenarioConfig.load(path).with_overrides(k=k, quad_level=quad_level, output=output)

