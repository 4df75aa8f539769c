"""Command-line entry point.

Resolution order for every option: command-line flag, then ``--config``
file (flat ``key = value`` lines), then the ``OLTAE_OUT_DIR`` environment
variable (output directory only), then built-in defaults.  Each command
writes its fully resolved configuration to ``<out>/<command>.cfg``; passing
that file back through ``--config`` reproduces the run.

Exit codes: 0 success, 2 validation/config/IO error, 3 numerical failure,
4 acceptance threshold breached.
"""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, hwsim, scenario
from .errors import (DivideByZero, InvalidConfig, IoError, LengthMismatch, NumericalError,
                     OltaeError, ParseError)
from .estimator import (CLOSED_FORM, FIXED_POINT, JOINT, attitude_covariance, build_deltas,
                        estimate_pose, recover_translation, three_sigma,
                        translation_covariance)
from .fixedpoint import FxStatus, ScaleConfig, auto_scale

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_THRESHOLD = 0, 2, 3, 4
OUT_ENV = "OLTAE_OUT_DIR"
PATHS = ("double", "joint", "fixed", "hwsim")

DEFAULTS = {
    "generate": {"seed": 7, "frames": 25, "points": 40, "sigma": 0.02,
                 "sigma_mode": "constant"},
    "estimate": {"input": None, "path": "all", "alpha": None, "beta": None,
                 "scale_mode": "auto_pow2", "c_mac": hwsim.C_MAC, "c_div": hwsim.C_DIV},
    "compare": {"estimates": None, "truth": None, "reference": "double",
                "candidate": "fixed", "max_dev_percent": 7.0},
    "report": {"reports": None, "format": "plotdata"},
    "hwsim-trace": {"input": None, "frame": 0, "alpha": None, "beta": None,
                    "scale_mode": "auto_pow2"},
}

CASTS = {"seed": int, "frames": int, "points": int, "sigma": float, "alpha": float,
         "beta": float, "max_dev_percent": float, "c_mac": int, "c_div": int, "frame": int}


def read_kv_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ParseError("expected 'key = value'", lineno)
        key, value = (p.strip() for p in text.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def write_kv_config(path, cfg):
    lines = [f"{k} = {'' if v is None else v}" for k, v in sorted(cfg.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def resolve(command, args):
    cfg = dict(DEFAULTS[command])
    cfg["out"] = os.environ.get(OUT_ENV, "oltae_out")
    if args.config:
        for k, v in read_kv_config(args.config).items():
            if k not in cfg:
                raise InvalidConfig(f"unknown config key {k!r} for {command}")
            cfg[k] = v if v != "" else None
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    for k, cast in CASTS.items():
        if k in cfg and cfg[k] is not None:
            try:
                cfg[k] = cast(cfg[k])
            except (TypeError, ValueError):
                raise InvalidConfig(f"{k}: cannot interpret {cfg[k]!r}") from None
    return cfg


def _outdir(cfg, command):
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_kv_config(out / f"{command}.cfg", cfg)
    except OSError as exc:
        raise IoError(out, exc.strerror or str(exc)) from None
    return out


def _scales(cfg, deltas):
    mode = cfg["scale_mode"]
    if mode == "manual":
        if cfg["alpha"] is None or cfg["beta"] is None:
            raise InvalidConfig("manual scaling needs --alpha and --beta")
        return ScaleConfig(cfg["alpha"], cfg["beta"], "manual")
    if mode != "auto_pow2":
        raise InvalidConfig(f"unknown scale mode {mode!r}")
    return auto_scale(deltas)


# -- commands ----------------------------------------------------------------

def cmd_generate(cfg):
    if cfg["frames"] < 2:
        raise InvalidConfig(f"--frames must be >= 2 (got {cfg['frames']})")
    out = _outdir(cfg, "generate")
    traj = scenario.TrajectoryConfig(n_frames=cfg["frames"])
    terrain = scenario.TerrainConfig(seed=cfg["seed"])
    frames = scenario.build_scenario(traj, terrain, n_points=cfg["points"],
                                     sigma=cfg["sigma"], seed=cfg["seed"],
                                     sigma_mode=cfg["sigma_mode"])
    scenario.write_correspondences(out / "correspondences.txt", frames)
    scenario.write_truth(out / "truth.txt", frames)
    print(f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


EST_COLUMNS = (["frame", "path"] + [f"q{i}" for i in (1, 2, 3)] + [f"t{i}" for i in (1, 2, 3)]
               + [f"qp{i}_raw" for i in (1, 2, 3)]
               + ["alpha", "beta", "saturation_count", "status_word", "mac_ops",
                  "modeled_cycles"]
               + [f"sigma3_q{i}" for i in (1, 2, 3)] + [f"sigma3_t{i}" for i in (1, 2, 3)])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _estimate_frame(fr, paths, cfg):
    corr = fr.correspondences
    dp = estimate_pose(corr, CLOSED_FORM)
    analysis.attach_geometry(dp, corr)
    p_q = attitude_covariance(dp.info_matrix)
    p_t = translation_covariance(p_q, dp.q_hat, dp.diagnostics["a_bar"], dp.diagnostics["n"],
                                 dp.diagnostics["sigma_bar"])
    bands = [*three_sigma(p_q), *three_sigma(p_t)]
    deltas = build_deltas(corr)
    rows = []
    for path in paths:
        extra = [None] * 9
        if path == "double":
            q, t = dp.q_hat, dp.t_hat
        elif path == "joint":
            res = estimate_pose(corr, JOINT)
            q, t = res.q_hat, res.t_hat
        elif path == "fixed":
            sc = _scales(cfg, deltas)
            res = estimate_pose(corr, FIXED_POINT, scales=sc)
            q, t = res.q_hat, res.t_hat
            d = res.diagnostics
            extra = [*d["q_prime_raw"], sc.alpha, sc.beta, d["saturation_count"],
                     None, None, None]
        else:
            sc = _scales(cfg, deltas)
            fx = FxStatus()
            regs = hwsim.RegisterFile.from_deltas(deltas, sc, fx)
            qp, report, status = hwsim.core_run(regs, c_mac=cfg["c_mac"], c_div=cfg["c_div"])
            if status & hwsim.STATUS_DIVIDE_ERROR:
                raise DivideByZero("core reported a divide error")
            q = sc.alpha / sc.beta * np.asarray(qp, dtype=float) / (1 << 16)
            t = recover_translation(q, deltas)
            sat = fx.saturation_count + (1 if status & hwsim.STATUS_SATURATION else 0)
            extra = [*qp, sc.alpha, sc.beta, sat, status, report.mac_ops, report.modeled_cycles]
        rows.append([fr.frame_index, path, *q, *t, *extra, *bands])
    return rows


def cmd_estimate(cfg):
    path_sel = cfg["path"]
    if path_sel == "all":
        paths = ("double", "fixed", "hwsim")
    elif path_sel in PATHS:
        paths = (path_sel,)
    else:
        raise InvalidConfig(f"--path must be one of {PATHS + ('all',)}, got {path_sel!r}")
    if cfg["input"] is None:
        cfg["input"] = str(Path(cfg["out"]) / "correspondences.txt")
    frames = scenario.ingest_correspondences(cfg["input"])
    out = _outdir(cfg, "estimate")
    rows = []
    for fr in frames:
        try:
            rows.extend(_estimate_frame(fr, paths, cfg))
        except OltaeError as exc:
            exc.args = (f"frame {fr.frame_index}: {exc}",)
            raise
    with (out / "estimates.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EST_COLUMNS)
        for row in rows:
            w.writerow([row[0], row[1]] + [_fmt(v) for v in row[2:]])
    print(f"estimated {len(frames)} frames along {', '.join(paths)} -> {out / 'estimates.csv'}")
    return EXIT_OK


def read_estimates(path):
    """``{path_name: {frame: row_dict}}`` from an estimates CSV."""
    try:
        fh = Path(path).open(newline="")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None
    table = {}
    with fh:
        for row in csv.DictReader(fh):
            table.setdefault(row["path"], {})[int(row["frame"])] = row
    return table


class _Est:
    def __init__(self, row):
        self.q_hat = np.array([float(row[f"q{i}"]) for i in (1, 2, 3)])
        self.t_hat = np.array([float(row[f"t{i}"]) for i in (1, 2, 3)])
        self.state = np.concatenate([self.q_hat, self.t_hat])
        sat = row.get("saturation_count") or "0"
        self.saturation_count = int(sat)
        self.sigma3 = np.array([float(row[f"sigma3_q{i}"]) for i in (1, 2, 3)]
                               + [float(row[f"sigma3_t{i}"]) for i in (1, 2, 3)])


def cmd_compare(cfg):
    if cfg["estimates"] is None:
        cfg["estimates"] = str(Path(cfg["out"]) / "estimates.csv")
    if cfg["truth"] is None and (Path(cfg["out"]) / "truth.txt").exists():
        cfg["truth"] = str(Path(cfg["out"]) / "truth.txt")
    table = read_estimates(cfg["estimates"])
    ref, cand = cfg["reference"], cfg["candidate"]
    for p in (ref, cand):
        if p not in table:
            raise InvalidConfig(f"estimates file has no {p!r} rows (found {sorted(table)})")
    if sorted(table[ref]) != sorted(table[cand]):
        raise LengthMismatch(f"{ref} and {cand} cover different frames")
    truth = scenario.read_truth(cfg["truth"]) if cfg["truth"] else {}
    out = _outdir(cfg, "compare")
    reports = []
    nan3 = np.full(3, np.nan)
    for k in sorted(table[ref]):
        dp, fx = _Est(table[ref][k]), _Est(table[cand][k])
        tp = truth.get(k)
        reports.append(analysis.FrameReport(
            frame_index=k,
            q_true=tp.q if tp else nan3, q_dp=dp.q_hat, q_fx=fx.q_hat,
            t_true=tp.t if tp else nan3, t_dp=dp.t_hat, t_fx=fx.t_hat,
            sigma3_q=dp.sigma3[:3], sigma3_t=dp.sigma3[3:],
            rel_dev_percent=analysis.relative_deviation(dp.state, fx.state),
            saturation_count=fx.saturation_count,
        ))
    analysis.emit_report(reports, out, "csv")
    summary = analysis.summarize(reports)
    lines = [
        f"reference = {ref}",
        f"candidate = {cand}",
        f"n_frames = {summary.n_frames}",
        f"max_rel_dev_percent = {summary.max_rel_dev_percent:.6g}",
        f"max_rel_dev_all_percent = {summary.max_rel_dev_all_percent:.6g}",
        f"coverage_fraction_q = {summary.coverage_fraction_q:.6g}",
        f"coverage_fraction_t = {summary.coverage_fraction_t:.6g}",
        f"threshold_percent = {cfg['max_dev_percent']:.6g}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if summary.max_rel_dev_percent > cfg["max_dev_percent"]:
        print(f"FAIL: max deviation {summary.max_rel_dev_percent:.4g}% exceeds "
              f"{cfg['max_dev_percent']:.4g}%", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_report(cfg):
    if cfg["reports"] is None:
        cfg["reports"] = str(Path(cfg["out"]) / "report.csv")
    reports = analysis.read_report_csv(cfg["reports"])
    out = _outdir(cfg, "report")
    for p in analysis.emit_report(reports, out, cfg["format"]):
        print(p)
    return EXIT_OK


def cmd_hwsim_trace(cfg):
    if cfg["input"] is None:
        cfg["input"] = str(Path(cfg["out"]) / "correspondences.txt")
    frames = {fr.frame_index: fr for fr in scenario.ingest_correspondences(cfg["input"])}
    if cfg["frame"] not in frames:
        raise InvalidConfig(f"frame {cfg['frame']} not in {cfg['input']}")
    deltas = build_deltas(frames[cfg["frame"]].correspondences)
    sc = _scales(cfg, deltas)
    regs = hwsim.RegisterFile.from_deltas(deltas, sc)
    qp, report, status = hwsim.core_run(regs)
    out = _outdir(cfg, "hwsim-trace")
    path = out / f"hwsim_trace_frame{cfg['frame']}.txt"
    lines = [f"# frame {cfg['frame']} alpha={sc.alpha!r} beta={sc.beta!r}"] + regs.trace
    lines.append(f"# q_prime_raw {qp[0]} {qp[1]} {qp[2]} status 0x{status:X} "
                 f"mac_ops {report.mac_ops} divides {report.divides} "
                 f"modeled_cycles {report.modeled_cycles}")
    path.write_text("\n".join(lines) + "\n")
    print(path)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "estimate": cmd_estimate, "compare": cmd_compare,
            "report": cmd_report, "hwsim-trace": cmd_hwsim_trace}


def build_parser():
    p = argparse.ArgumentParser(prog="oltae", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--out", help=f"output directory (env {OUT_ENV})")

    def scaling(sp):
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--scale-mode", dest="scale_mode", choices=("auto_pow2", "manual"))

    g = sub.add_parser("generate", help="synthesise a TRN scenario")
    common(g)
    g.add_argument("--seed", type=int)
    g.add_argument("--frames", type=int)
    g.add_argument("--points", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--sigma-mode", dest="sigma_mode", choices=("constant", "range"))

    e = sub.add_parser("estimate", help="estimate poses along one or more solver paths")
    common(e)
    e.add_argument("--input")
    e.add_argument("--path", choices=PATHS + ("all",))
    scaling(e)
    e.add_argument("--c-mac", dest="c_mac", type=int)
    e.add_argument("--c-div", dest="c_div", type=int)

    c = sub.add_parser("compare", help="relative deviation and 3-sigma coverage")
    common(c)
    c.add_argument("--estimates")
    c.add_argument("--truth")
    c.add_argument("--reference", choices=PATHS)
    c.add_argument("--candidate", choices=PATHS)
    c.add_argument("--max-dev-percent", dest="max_dev_percent", type=float)

    r = sub.add_parser("report", help="re-emit a report CSV as plot data")
    common(r)
    r.add_argument("--reports")
    r.add_argument("--format", choices=("csv", "plotdata"))

    h = sub.add_parser("hwsim-trace", help="dump the register transaction log for one frame")
    common(h)
    h.add_argument("--input")
    h.add_argument("--frame", type=int)
    scaling(h)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OltaeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
