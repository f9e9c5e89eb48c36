"""Static SVG rendering of runner CSV output.

Two kinds: ``line`` (first column as abscissa, every other numeric column as
a labeled curve) and ``heatmap`` (theta/phi/F columns pivoted onto their
grid).  Rendering is deterministic — fixed figure geometry, a fixed SVG hash
salt, and no embedded timestamps — so identical CSV input yields an
identical SVG byte stream.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .errors import FormatError

PLOT_KINDS = ("line", "heatmap")

_AXIS_LABELS = {
    "t_over_tau": "t/τ",
    "eta_ratio": "η₁/η₃",
    "theta": "θ",
    "phi": "φ",
}


def _read_csv(path):
    """Header, rows, and metadata lines of a runner CSV document."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read CSV {path}: {exc}") from None
    meta = {}
    data_lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line.lstrip("#").partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        if line.strip():
            data_lines.append(line)
    if not data_lines:
        raise FormatError(f"{path}: no header row")
    reader = csv.reader(io.StringIO("\n".join(data_lines)))
    rows = list(reader)
    header = rows[0]
    if len(header) < 2:
        raise FormatError(f"{path}: header needs at least two columns")
    body = rows[1:]
    if not body:
        raise FormatError(f"{path}: no data rows")
    width = len(header)
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise FormatError(
                f"{path}: row {i} has {len(row)} fields, expected {width}")
    return header, body, meta


def _numeric_column(path, header, body, index):
    out = np.empty(len(body))
    for i, row in enumerate(body):
        try:
            out[i] = float(row[index])
        except ValueError:
            raise FormatError(
                f"{path}: column '{header[index]}' has non-numeric value "
                f"{row[index]!r}") from None
    return out


def _axis_label(name: str) -> str:
    if name in _AXIS_LABELS:
        return _AXIS_LABELS[name]
    if name.startswith("dF_dt"):
        return "dF/dt"
    if name.startswith("F_") or name == "F":
        return "F"
    if name.startswith("min_F"):
        return "min F"
    return name


def _curve_label(name: str) -> str:
    for prefix in ("F_", "dF_dt_", "min_F_"):
        if name.startswith(prefix):
            return name[len(prefix):].replace("_", " ")
    return name


def _figure():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "decouple-sim"
    return plt


def _save(fig, out_path) -> None:
    fig.savefig(out_path, format="svg", metadata={"Date": None})


def _render_line(path, header, body, meta, out_path):
    x = _numeric_column(path, header, body, 0)
    plt = _figure()
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=100)
    try:
        for k in range(1, len(header)):
            ax.plot(x, _numeric_column(path, header, body, k),
                    label=_curve_label(header[k]), linewidth=1.4)
        ax.set_xlabel(_axis_label(header[0]))
        ax.set_ylabel(_axis_label(header[1]))
        if header[0] == "eta_ratio" and np.all(x[x > 0] > 0) and x.size > 2:
            positive = x > 0
            if np.any(positive):
                ax.set_xscale("symlog", linthresh=max(float(np.min(x[positive])), 1e-12))
        if len(header) > 2:
            ax.legend(frameon=False)
        ax.grid(True, alpha=0.3)
        title = meta.get("experiment")
        if title:
            ax.set_title(title.replace("_", " "))
        fig.tight_layout()
        _save(fig, out_path)
    finally:
        plt.close(fig)


def _render_heatmap(path, header, body, meta, out_path):
    try:
        i_th = header.index("theta")
        i_ph = header.index("phi")
        i_f = header.index("F")
    except ValueError:
        raise FormatError(
            f"{path}: heatmap needs 'theta', 'phi', and 'F' columns; got "
            f"{header}") from None
    th = _numeric_column(path, header, body, i_th)
    ph = _numeric_column(path, header, body, i_ph)
    fv = _numeric_column(path, header, body, i_f)
    thetas = np.unique(th)
    phis = np.unique(ph)
    if thetas.size * phis.size != fv.size:
        raise FormatError(
            f"{path}: rows do not form a rectangular (theta, phi) grid")
    grid = np.full((thetas.size, phis.size), np.nan)
    ti = np.searchsorted(thetas, th)
    pi = np.searchsorted(phis, ph)
    grid[ti, pi] = fv
    if np.any(np.isnan(grid)):
        raise FormatError(
            f"{path}: rows do not form a rectangular (theta, phi) grid")
    plt = _figure()
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=100)
    try:
        mesh = ax.pcolormesh(phis, thetas, grid, shading="nearest",
                             cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="F")
        ax.set_xlabel(_axis_label("phi"))
        ax.set_ylabel(_axis_label("theta"))
        title = meta.get("experiment")
        if title:
            ax.set_title(title.replace("_", " "))
        fig.tight_layout()
        _save(fig, out_path)
    finally:
        plt.close(fig)


def emit_plot(csv_path, kind: str, out_path=None) -> str:
    """Render a runner CSV to SVG; returns the output path."""
    if kind not in PLOT_KINDS:
        raise FormatError(
            f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    header, body, meta = _read_csv(csv_path)
    if out_path is None:
        base = str(csv_path)
        out_path = (base[:-4] if base.lower().endswith(".csv") else base) + ".svg"
    if kind == "line":
        _render_line(csv_path, header, body, meta, str(out_path))
    else:
        _render_heatmap(csv_path, header, body, meta, str(out_path))
    return str(out_path)
