"""Command-line front end.

Exit codes: 0 success, 1 selftest failure, 2 nothing measurable in the
image (pallet or panel not detected, no valid edge hypothesis), 3 bad
configuration or arguments. Diagnostics go to standard error; results go to
standard output or ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .calibration import calibrate_camera_to_fork
from .edges import DEFAULT_EDGE_THRESHOLD, DEFAULT_RATIO_THRESHOLD
from .errors import ConfigError, DetectionFailure, PalletPitchError, RegionOutOfPanorama
from .geometry import default_camera
from .panorama import PanoramaSpec, build_panorama
from .pitch import PalletPose, measure_pitch
from .pose_search import DEFAULT_DETECT_THRESHOLD
from .specs import CargoBox, PalletSpec, PanelSpec
from .synthetic import SyntheticScene, render_scene
from .tolerance import InsertionError, InsertionGeometry, clearance_terms, is_safe_insertion, tolerance_region

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_NOT_DETECTED = 2
EXIT_CONFIG = 3

log = logging.getLogger("palletpitch")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not detection failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _unit_interval(text):
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1]")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return v


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _camera(args):
    return io.load_camera(args.camera) if args.camera else default_camera()


def _thresholds(p, detect=True):
    p.add_argument("--edge-threshold", type=_unit_interval, default=DEFAULT_EDGE_THRESHOLD,
                   help="normalised Sobel magnitude threshold")
    p.add_argument("--ratio-threshold", type=_unit_interval, default=DEFAULT_RATIO_THRESHOLD,
                   help="minimum Hough score ratio for a valid line")
    if detect:
        p.add_argument("--detect-threshold", type=_unit_interval, default=DEFAULT_DETECT_THRESHOLD,
                       help="minimum template similarity for a detection")


# ---------------------------------------------------------------------------
# commands


def cmd_calibrate(args) -> int:
    cam = _camera(args)
    img = io.read_image(args.image)
    panel = io.load_panel(args.panel) if args.panel else PanelSpec()
    res = calibrate_camera_to_fork(img, cam, panel, use_shift=not args.no_shift,
                                   detect_threshold=args.detect_threshold,
                                   edge_threshold=args.edge_threshold,
                                   ratio_threshold=args.ratio_threshold)
    _emit(io.dumps(res.to_dict()), args.out)
    return EXIT_OK


def _prior(args) -> PalletPose:
    if args.prior:
        return PalletPose.from_dict(io.read_json(args.prior))
    if args.prior_x is None or args.prior_z is None:
        raise ConfigError("give --prior FILE or at least --prior-x and --prior-z")
    return PalletPose(args.prior_x, args.prior_y, args.prior_z, args.prior_yaw)


def cmd_measure(args) -> int:
    cam = _camera(args)
    calib = io.load_calibration(args.calibration)
    img = io.read_image(args.image)
    spec = io.load_pallet(args.pallet) if args.pallet else PalletSpec(cargo=CargoBox())
    prior = _prior(args)
    if args.dump_panoramas:
        d = Path(args.dump_panoramas)
        d.mkdir(parents=True, exist_ok=True)
        for axis in ("x", "z"):
            pano = build_panorama(img, cam, PanoramaSpec.about(axis))
            io.write_image(d / f"panorama_{axis}.png", pano.intensity)
    res = measure_pitch(img, cam, calib, spec, prior, use_shift=args.use_shift,
                        detect_threshold=args.detect_threshold,
                        edge_threshold=args.edge_threshold,
                        ratio_threshold=args.ratio_threshold)
    _emit(io.dumps(res.to_dict()), args.out)
    return EXIT_OK


def _geometry(args) -> InsertionGeometry:
    try:
        return InsertionGeometry(args.ph, args.ft, args.fl)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _read_triples(path):
    """Rows of a CSV with columns dz_mm, dtheta_deg and optionally dx_mm (header required)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{p}: file not found")
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or ())
        if not {"dz_mm", "dtheta_deg"} <= fields:
            raise ConfigError(f"{p}: header must contain dz_mm and dtheta_deg")
        rows = []
        for i, row in enumerate(reader, start=2):
            try:
                rows.append(InsertionError(float(row.get("dx_mm") or 0.0), float(row["dz_mm"]),
                                           float(row["dtheta_deg"])))
            except ValueError as exc:
                raise ConfigError(f"{p}:{i}: {exc}") from exc
    return rows


def cmd_check_insertion(args) -> int:
    geom = _geometry(args)
    if args.csv:
        errs = _read_triples(args.csv)
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dx_mm", "dz_mm", "dtheta_deg", "margin_mm", "safe"])
        for e in errs:
            margin = min(float(t) for t in clearance_terms(geom, e.dz, e.dtheta_deg))
            w.writerow([e.dx, e.dz, e.dtheta_deg, f"{margin:.6g}",
                        "safe" if is_safe_insertion(geom, e) else "unsafe"])
        _emit(buf.getvalue(), args.out)
        return EXIT_OK
    if args.dz is None or args.dtheta is None:
        raise ConfigError("give --dz and --dtheta, or --csv FILE")
    try:
        err = InsertionError(args.dx, args.dz, args.dtheta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    safe = is_safe_insertion(geom, err)
    verdict = "safe" if safe else "unsafe"
    if args.json:
        margin = min(float(t) for t in clearance_terms(geom, err.dz, err.dtheta_deg))
        _emit(io.dumps({"dx_mm": err.dx, "dz_mm": err.dz, "dtheta_deg": err.dtheta_deg,
                        "safe": safe, "verdict": verdict, "margin_mm": margin}), args.out)
    else:
        _emit(verdict, args.out)
    return EXIT_OK


def cmd_region(args) -> int:
    geom = _geometry(args)
    if args.theta_max < args.theta_min:
        raise ConfigError("--theta-max must not be below --theta-min")
    rows = tolerance_region(geom, (args.theta_min, args.theta_max), args.theta_step)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta_deg", "z_min_mm", "z_max_mm"])
    for t, a, b in rows:
        w.writerow([f"{t:.6g}", "" if np.isnan(a) else f"{a:.6f}", "" if np.isnan(b) else f"{b:.6f}"])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_render(args) -> int:
    cam = _camera(args)
    try:
        scene = SyntheticScene.from_dict(io.read_json(args.scene)) if args.scene else SyntheticScene()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scene: {exc!r}") from exc
    img, truth = render_scene(scene, cam)
    io.write_image(args.out, img)
    truth_path = Path(args.truth) if args.truth else Path(args.out).with_suffix(".truth.json")
    io.write_json(truth_path, truth)
    log.info("wrote %s and %s", args.out, truth_path)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SELFTEST


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="palletpitch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("calibrate", help="camera-to-fork calibration from a panel image")
    c.add_argument("--camera", help="intrinsics JSON (default: built-in synthetic lens)")
    c.add_argument("--image", required=True)
    c.add_argument("--panel", help="panel spec JSON")
    c.add_argument("--no-shift", action="store_true", help="ignore the viewpoint-shift curve")
    c.add_argument("--out")
    _thresholds(c)
    c.set_defaults(func=cmd_calibrate)

    m = sub.add_parser("measure", help="pallet pitch from an image")
    m.add_argument("--camera")
    m.add_argument("--calibration", required=True,
                   help="calibration JSON (a render truth file also works)")
    m.add_argument("--image", required=True)
    m.add_argument("--pallet", help="pallet spec JSON")
    m.add_argument("--prior", help="JSON {x_mm, y_mm, z_mm, yaw_deg} in the fork frame")
    m.add_argument("--prior-x", type=float)
    m.add_argument("--prior-y", type=float, default=0.0)
    m.add_argument("--prior-z", type=float)
    m.add_argument("--prior-yaw", type=float, default=0.0)
    m.add_argument("--use-shift", action="store_true", help="project through the shift model")
    m.add_argument("--dump-panoramas", metavar="DIR", help="write the X and Z panoramas as PNG")
    m.add_argument("--out")
    _thresholds(m)
    m.set_defaults(func=cmd_measure)

    def geom_flags(q):
        q.add_argument("--ph", type=_positive, default=90.0, help="slot height, mm")
        q.add_argument("--ft", type=_positive, default=36.0, help="fork thickness, mm")
        q.add_argument("--fl", type=_positive, default=1070.0, help="fork length, mm")

    k = sub.add_parser("check-insertion", help="safe/unsafe for pose errors")
    geom_flags(k)
    k.add_argument("--dx", type=float, default=0.0)
    k.add_argument("--dz", type=float)
    k.add_argument("--dtheta", type=float, help="degrees")
    k.add_argument("--csv", help="batch input with columns dz_mm, dtheta_deg[, dx_mm]")
    k.add_argument("--json", action="store_true", help="single result as JSON")
    k.add_argument("--out")
    k.set_defaults(func=cmd_check_insertion)

    r = sub.add_parser("region", help="safe dZ interval per tilt as CSV")
    geom_flags(r)
    r.add_argument("--theta-min", type=float, default=-2.0)
    r.add_argument("--theta-max", type=float, default=2.0)
    r.add_argument("--theta-step", type=_positive, default=0.05)
    r.add_argument("--out")
    r.set_defaults(func=cmd_region)

    g = sub.add_parser("render", help="synthetic image plus ground truth")
    g.add_argument("--camera")
    g.add_argument("--scene", help="scene JSON (default: unloaded pallet, level)")
    g.add_argument("--out", required=True, help="image path (.png or .pgm)")
    g.add_argument("--truth", help="truth JSON path (default: next to the image)")
    g.set_defaults(func=cmd_render)

    s = sub.add_parser("selftest", help="run the built-in property checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (DetectionFailure, RegionOutOfPanorama) as exc:
        print(f"palletpitch: {exc}", file=sys.stderr)
        return EXIT_NOT_DETECTED
    except (PalletPitchError, ValueError, OSError) as exc:
        print(f"palletpitch: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
