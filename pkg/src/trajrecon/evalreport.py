"""Error metrics, cylinder containment, CSV reports and SVG figures."""

from __future__ import annotations

import contextlib
import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInputError, FigureWriteError, TimeGridMismatchError
from .geo import haversine_array
from .simkernel import StateSample, samples_to_array

CSV_SCHEMA_VERSION = 1
GRID_TOLERANCE_S = 1e-6


@dataclass(frozen=True)
class CylinderSpec:
    """Containment volume around each truth point (defaults are not from any source data)."""

    radius_m: float = 150.0
    half_height_ft: float = 100.0

    def __post_init__(self) -> None:
        if self.radius_m <= 0 or self.half_height_ft <= 0:
            raise ValueError("cylinder dimensions must be positive")


@dataclass
class EvalRow:
    flight_id: str
    window_start_s: int
    method: str
    times_s: list[float]
    horizontal_error_m: list[float]
    vertical_error_ft: list[float]
    containment_fraction: float
    h_mean: float = field(init=False)
    h_rmse: float = field(init=False)
    h_max: float = field(init=False)
    v_mean: float = field(init=False)
    v_rmse: float = field(init=False)
    v_max: float = field(init=False)

    def __post_init__(self) -> None:
        h = np.asarray(self.horizontal_error_m, dtype=float)
        v = np.asarray(self.vertical_error_ft, dtype=float)
        if np.any(h < 0) or np.any(v < 0):
            raise ValueError("errors must be non-negative")
        if not (0.0 <= self.containment_fraction <= 1.0):
            raise ValueError("containment fraction outside [0, 1]")
        self.h_mean, self.h_rmse, self.h_max = _agg(h)
        self.v_mean, self.v_rmse, self.v_max = _agg(v)


def _agg(x: np.ndarray) -> tuple[float, float, float]:
    if not x.size:
        return 0.0, 0.0, 0.0
    return float(np.mean(x)), float(np.sqrt(np.mean(x ** 2))), float(np.max(x))


def score_window(
    truth_targets: Sequence[StateSample],
    estimates: Sequence[StateSample],
    cyl: CylinderSpec = CylinderSpec(),
    *,
    flight_id: str = "",
    window_start_s: int = 0,
    method: str = "",
) -> EvalRow:
    """Horizontal great-circle and absolute vertical error at each query time.

    Raises:
        TimeGridMismatchError: if the two sequences are not on the same times.
    """
    T = samples_to_array(truth_targets)
    E = samples_to_array(estimates)
    if len(T) != len(E) or np.any(np.abs(T[:, 0] - E[:, 0]) > GRID_TOLERANCE_S):
        raise TimeGridMismatchError(
            f"{flight_id}:{window_start_s} {method}: truth has {len(T)} times, estimates {len(E)}"
        )
    h = haversine_array(T[:, 1], T[:, 2], E[:, 1], E[:, 2])
    v = np.abs(T[:, 3] - E[:, 3])
    inside = (h <= cyl.radius_m) & (v <= cyl.half_height_ft)
    frac = float(np.mean(inside)) if len(inside) else 1.0
    return EvalRow(flight_id, int(window_start_s), method, T[:, 0].tolist(), h.tolist(), v.tolist(), frac)


SUMMARY_COLUMNS = (
    "schema_version", "method", "n_windows",
    "h_mean_m", "h_median_m", "h_rmse_m",
    "v_mean_ft", "v_median_ft", "v_rmse_ft",
    "containment_mean", "n_failed",
)


def aggregate(rows: Sequence[EvalRow], failures: Mapping[str, int] | None = None) -> list[dict]:
    """Per-method summary, methods in first-appearance order.

    Means and medians are over per-window mean errors; RMSE pools the
    per-window RMSEs (root of the mean of their squares). ``failures``
    counts windows a method could not reconstruct; a method that failed
    everywhere still gets a row, with NaN metrics.

    Raises:
        EmptyInputError: if there are neither rows nor failures.
    """
    failures = dict(failures or {})
    if not rows and not failures:
        raise EmptyInputError("nothing to aggregate")
    groups: dict[str, list[EvalRow]] = {}
    for r in rows:
        groups.setdefault(r.method, []).append(r)
    for method in failures:
        groups.setdefault(method, [])
    out = []
    nan = float("nan")
    for method, rs in groups.items():
        if not rs:
            out.append({"schema_version": CSV_SCHEMA_VERSION, "method": method, "n_windows": 0,
                        **{c: nan for c in SUMMARY_COLUMNS[3:-1]}, "n_failed": failures[method]})
            continue
        hm = np.array([r.h_mean for r in rs])
        hr = np.array([r.h_rmse for r in rs])
        vm = np.array([r.v_mean for r in rs])
        vr = np.array([r.v_rmse for r in rs])
        out.append({
            "schema_version": CSV_SCHEMA_VERSION,
            "method": method,
            "n_windows": len(rs),
            "h_mean_m": float(np.mean(hm)),
            "h_median_m": float(np.median(hm)),
            "h_rmse_m": float(np.sqrt(np.mean(hr ** 2))),
            "v_mean_ft": float(np.mean(vm)),
            "v_median_ft": float(np.median(vm)),
            "v_rmse_ft": float(np.sqrt(np.mean(vr ** 2))),
            "containment_mean": float(np.mean([r.containment_fraction for r in rs])),
            "n_failed": failures.get(method, 0),
        })
    return out


# ---------------------------------------------------------------------- CSV

WINDOW_COLUMNS = (
    "schema_version", "flight_id", "window_start_s", "method", "n_times",
    "h_mean_m", "h_rmse_m", "h_max_m", "v_mean_ft", "v_rmse_ft", "v_max_ft", "containment_fraction",
)
POINT_COLUMNS = (
    "schema_version", "flight_id", "window_start_s", "method", "time_s", "horizontal_error_m", "vertical_error_ft",
)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    n = 0
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
        n += 1
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, path)
    return n


def write_window_csv(path: str | os.PathLike, rows: Sequence[EvalRow]) -> int:
    return _write_csv(Path(path), WINDOW_COLUMNS, (
        {"schema_version": CSV_SCHEMA_VERSION, "flight_id": r.flight_id, "window_start_s": r.window_start_s,
         "method": r.method, "n_times": len(r.times_s), "h_mean_m": r.h_mean, "h_rmse_m": r.h_rmse,
         "h_max_m": r.h_max, "v_mean_ft": r.v_mean, "v_rmse_ft": r.v_rmse, "v_max_ft": r.v_max,
         "containment_fraction": r.containment_fraction}
        for r in rows
    ))


def write_point_csv(path: str | os.PathLike, rows: Sequence[EvalRow]) -> int:
    def gen():
        for r in rows:
            for t, h, v in zip(r.times_s, r.horizontal_error_m, r.vertical_error_ft):
                yield {"schema_version": CSV_SCHEMA_VERSION, "flight_id": r.flight_id,
                       "window_start_s": r.window_start_s, "method": r.method,
                       "time_s": float(t), "horizontal_error_m": float(h), "vertical_error_ft": float(v)}
    return _write_csv(Path(path), POINT_COLUMNS, gen())


def write_summary_csv(path: str | os.PathLike, summary: Sequence[dict]) -> int:
    return _write_csv(Path(path), SUMMARY_COLUMNS, summary)


def read_csv(path: str | os.PathLike) -> list[dict]:
    """Read any report CSV back, converting numeric columns."""
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for rec in csv.DictReader(f):
            row = {}
            for k, v in rec.items():
                if k in ("flight_id", "method"):
                    row[k] = v
                elif k in ("schema_version", "window_start_s", "n_times", "n_windows", "n_failed"):
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
    return out


def read_eval_rows(window_csv: str | os.PathLike, point_csv: str | os.PathLike) -> list[EvalRow]:
    """Rebuild EvalRows from the window and point reports."""
    fracs = {(r["flight_id"], r["window_start_s"], r["method"]): r["containment_fraction"]
             for r in read_csv(window_csv)}
    pts: dict[tuple, list[dict]] = {}
    for r in read_csv(point_csv):
        pts.setdefault((r["flight_id"], r["window_start_s"], r["method"]), []).append(r)
    return [
        EvalRow(k[0], k[1], k[2], [p["time_s"] for p in v], [p["horizontal_error_m"] for p in v],
                [p["vertical_error_ft"] for p in v], fracs[k])
        for k, v in pts.items()
    ]


# ------------------------------------------------------------------- figures

TRUTH_STYLE = {"color": "red", "marker": "o", "linestyle": "none", "markersize": 4, "label": "Ground truth"}
PRED_STYLE = {"color": "blue", "marker": "x", "linestyle": "none", "markersize": 6, "label": "Prediction"}
ADSB_STYLE = {"color": "black", "marker": ".", "linestyle": "none", "markersize": 3, "label": "ADS-B data"}


def render_figure(
    truth: Sequence[StateSample],
    adsb_points: Sequence[StateSample],
    estimates: Sequence[StateSample],
    out_path: str | os.PathLike,
    title: str | None = None,
) -> Path:
    """Two-panel SVG: ground track on the left, altitude profile on the right.

    Truth is drawn as red dots, predictions as blue crosses and ADS-B points
    as black dots. Output bytes depend only on the inputs.

    Raises:
        FigureWriteError: on empty inputs or if the file cannot be written;
            no partial file is left behind.
    """
    if not truth or not adsb_points or not estimates:
        raise FigureWriteError("truth, ADS-B points and estimates must all be non-empty")
    import matplotlib

    from matplotlib.figure import Figure

    out_path = Path(out_path)
    T, A, E = samples_to_array(truth), samples_to_array(adsb_points), samples_to_array(estimates)
    rc = {"svg.hashsalt": "trajrecon", "svg.fonttype": "none", "path.simplify": False}
    with matplotlib.rc_context(rc):
        fig = Figure(figsize=(10, 4.2))
        ax_map, ax_alt = fig.subplots(1, 2, gridspec_kw={"width_ratios": [1, 1.6]})
        for ax, x, y, panel in ((ax_map, 2, 1, "track"), (ax_alt, 0, 3, "altitude")):
            for arr, style, gid in ((A, ADSB_STYLE, "adsb"), (T, TRUTH_STYLE, "truth"), (E, PRED_STYLE, "prediction")):
                (line,) = ax.plot(arr[:, x], arr[:, y], **style)
                line.set_gid(f"{gid}-{panel}")
        ax_map.set_xlabel("Longitude (deg)")
        ax_map.set_ylabel("Latitude (deg)")
        ax_map.set_aspect(1.0 / math.cos(math.radians(float(np.mean(T[:, 1])))), adjustable="datalim")
        ax_map.ticklabel_format(useOffset=False, style="plain")
        ax_alt.set_xlabel("Time (s)")
        ax_alt.set_ylabel("Altitude (ft)")
        ax_alt.ticklabel_format(useOffset=False, style="plain")
        ax_alt.legend(loc="best")
        ax_map.grid(True, linewidth=0.3)
        ax_alt.grid(True, linewidth=0.3)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        tmp = out_path.with_name(out_path.name + ".tmp")
        try:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(tmp, format="svg", metadata={"Date": None, "Creator": None})
            os.replace(tmp, out_path)
        except OSError as exc:
            with contextlib.suppress(OSError):
                tmp.unlink(missing_ok=True)
            raise FigureWriteError(f"cannot write {out_path}: {exc}") from exc
    return out_path
