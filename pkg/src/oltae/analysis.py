"""Fixed-vs-double comparison, truth errors with 3-sigma bands, and reports.

CSV column order (stable)::

    frame,
    q1_true q2_true q3_true  q1_dp q2_dp q3_dp  q1_fx q2_fx q3_fx,
    t1_true t2_true t3_true  t1_dp t2_dp t3_dp  t1_fx t2_fx t3_fx,
    sigma3_q1 sigma3_q2 sigma3_q3  sigma3_t1 sigma3_t2 sigma3_t3,
    rel_dev_q1 rel_dev_q2 rel_dev_q3  rel_dev_t1 rel_dev_t2 rel_dev_t3,
    saturation_count
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoError, LengthMismatch, OltaeError
from .estimator import (CLOSED_FORM, FIXED_POINT, attitude_covariance, estimate_pose,
                        three_sigma, translation_covariance)

EPS_FLOOR = 1e-6
# q3, t_x, t_z: the states excited by the default trajectory
MOTION_STATES = (2, 3, 5)
STATE_NAMES = ("q1", "q2", "q3", "t1", "t2", "t3")

CSV_COLUMNS = (
    ["frame"]
    + [f"q{i}_{tag}" for tag in ("true", "dp", "fx") for i in (1, 2, 3)]
    + [f"t{i}_{tag}" for tag in ("true", "dp", "fx") for i in (1, 2, 3)]
    + [f"sigma3_q{i}" for i in (1, 2, 3)]
    + [f"sigma3_t{i}" for i in (1, 2, 3)]
    + [f"rel_dev_{s}" for s in STATE_NAMES]
    + ["saturation_count"]
)


@dataclass
class FrameReport:
    frame_index: int
    q_true: np.ndarray
    q_dp: np.ndarray
    q_fx: np.ndarray
    t_true: np.ndarray
    t_dp: np.ndarray
    t_fx: np.ndarray
    sigma3_q: np.ndarray
    sigma3_t: np.ndarray
    rel_dev_percent: np.ndarray
    saturation_count: int = 0

    def row(self):
        return ([self.frame_index]
                + [*self.q_true, *self.q_dp, *self.q_fx]
                + [*self.t_true, *self.t_dp, *self.t_fx]
                + [*self.sigma3_q, *self.sigma3_t]
                + [*self.rel_dev_percent]
                + [self.saturation_count])


@dataclass
class RunSummary:
    max_rel_dev_percent: float
    coverage_fraction_q: float
    coverage_fraction_t: float
    n_frames: int
    max_rel_dev_all_percent: float = float("nan")
    states: tuple = MOTION_STATES


def relative_deviation(dp, fx, floor=EPS_FLOOR):
    """Per-state ``100 |x_fx - x_dp| / max(|x_dp|, floor)`` over the six states."""
    x_dp = _state(dp)
    x_fx = _state(fx)
    return 100.0 * np.abs(x_fx - x_dp) / np.maximum(np.abs(x_dp), floor)


def floor_limited(dp, floor=EPS_FLOOR):
    """Mask of states whose relative deviation used the floor denominator."""
    return np.abs(_state(dp)) < floor


def _state(x):
    if hasattr(x, "state"):
        return np.asarray(x.state, dtype=float)
    return np.asarray(x, dtype=float)


def coverage_check(errors, sigma3):
    """Fraction of per-axis samples with ``|error| <= sigma3``; NaNs are skipped."""
    e = np.asarray(errors, dtype=float)
    b = np.asarray(sigma3, dtype=float)
    if e.shape != b.shape:
        raise LengthMismatch(f"errors {e.shape} vs bounds {b.shape}")
    ok = np.isfinite(e) & np.isfinite(b)
    if not ok.any():
        return float("nan")
    return float(np.mean(np.abs(e[ok]) <= b[ok]))


def frame_report(frame_index, dp, fx, truth=None, sigma_bar=None):
    """Assemble one :class:`FrameReport` from double and fixed estimates.

    3-sigma bands come from the double-path information matrix; truth errors
    are those of the fixed-point estimate.
    """
    n = dp.diagnostics.get("n", 3)
    p_q = attitude_covariance(dp.info_matrix)
    if sigma_bar is None:
        sigma_bar = dp.diagnostics.get("sigma_bar", 0.0)
    p_t = translation_covariance(p_q, dp.q_hat, dp.diagnostics.get("a_bar", np.zeros(3)),
                                 n, sigma_bar)
    nan3 = np.full(3, np.nan)
    return FrameReport(
        frame_index=frame_index,
        q_true=truth.q if truth is not None else nan3,
        q_dp=dp.q_hat, q_fx=fx.q_hat,
        t_true=truth.t if truth is not None else nan3,
        t_dp=dp.t_hat, t_fx=fx.t_hat,
        sigma3_q=three_sigma(p_q), sigma3_t=three_sigma(p_t),
        rel_dev_percent=relative_deviation(dp, fx),
        saturation_count=int(fx.diagnostics.get("saturation_count", 0)),
    )


def analyze_frames(frames, scales=None, fixed_method=FIXED_POINT):
    """Run double and fixed-point estimates for every scenario frame."""
    reports = []
    for fr in frames:
        try:
            dp = estimate_pose(fr.correspondences, CLOSED_FORM)
            fx = estimate_pose(fr.correspondences, fixed_method, scales=scales)
        except OltaeError as exc:
            raise _with_frame(exc, fr.frame_index)
        attach_geometry(dp, fr.correspondences)
        reports.append(frame_report(fr.frame_index, dp, fx, fr.truth_pose))
    return reports


def _with_frame(exc, k):
    exc.frame_index = k
    exc.args = (f"frame {k}: {exc}",)
    return exc


def attach_geometry(result, correspondences):
    """Record centroid and rms sigma used by the translation covariance."""
    a = np.array([c.a for c in correspondences])
    sig = np.array([c.sigma for c in correspondences])
    result.diagnostics["a_bar"] = a.mean(axis=0)
    result.diagnostics["sigma_bar"] = float(np.sqrt(np.mean(sig ** 2)))
    result.diagnostics["n"] = len(correspondences)
    return result


def summarize(reports, states=MOTION_STATES):
    if not reports:
        raise OltaeError("nothing to report")
    dev = np.array([r.rel_dev_percent for r in reports])
    q_err = np.array([r.q_fx - r.q_true for r in reports])
    t_err = np.array([r.t_fx - r.t_true for r in reports])
    return RunSummary(
        max_rel_dev_percent=float(dev[:, list(states)].max()),
        coverage_fraction_q=coverage_check(q_err, np.array([r.sigma3_q for r in reports])),
        coverage_fraction_t=coverage_check(t_err, np.array([r.sigma3_t for r in reports])),
        n_frames=len(reports),
        max_rel_dev_all_percent=float(dev.max()),
        states=tuple(states),
    )


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def emit_report(reports, out_dir, format="csv", stem="report"):
    """Write reports as one CSV or as three whitespace-separated plot files.

    Returns the list of written paths.
    """
    if not reports:
        raise OltaeError("nothing to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if format == "csv":
            path = out / f"{stem}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(CSV_COLUMNS)
                for r in reports:
                    w.writerow([_fmt(v) for v in r.row()])
            return [path]
        if format == "plotdata":
            return _emit_plotdata(reports, out, stem)
    except OSError as exc:
        raise IoError(out, exc.strerror or str(exc)) from None
    raise ValueError(f"unknown report format {format!r}")


def _write_table(path, header, rows):
    lines = ["# " + " ".join(header)]
    lines += [" ".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _emit_plotdata(reports, out, stem):
    est_cols = ["frame"] + CSV_COLUMNS[1:19]
    est = _write_table(out / f"{stem}_estimates.dat", est_cols,
                       [r.row()[:19] for r in reports])
    err_cols = ["frame"] + [f"{s}_err" for s in STATE_NAMES] + [f"sigma3_{s}" for s in STATE_NAMES]
    err_rows = []
    for r in reports:
        err_rows.append([r.frame_index, *(r.q_fx - r.q_true), *(r.t_fx - r.t_true),
                         *r.sigma3_q, *r.sigma3_t])
    err = _write_table(out / f"{stem}_errors.dat", err_cols, err_rows)
    dev = _write_table(out / f"{stem}_reldev.dat",
                       ["frame"] + [f"rel_dev_{s}" for s in STATE_NAMES],
                       [[r.frame_index, *r.rel_dev_percent] for r in reports])
    return [est, err, dev]


def read_report_csv(path):
    try:
        fh = Path(path).open(newline="")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_COLUMNS:
        raise OltaeError(f"{path}: unexpected report header")
    reports = []
    for row in rows[1:]:
        v = np.array([float(x) for x in row[1:-1]])
        reports.append(FrameReport(
            frame_index=int(row[0]),
            q_true=v[0:3], q_dp=v[3:6], q_fx=v[6:9],
            t_true=v[9:12], t_dp=v[12:15], t_fx=v[15:18],
            sigma3_q=v[18:21], sigma3_t=v[21:24],
            rel_dev_percent=v[24:30],
            saturation_count=int(row[-1]),
        ))
    return reports
