"""Command-line front end: detect / calibrate / preprocess / simulate.

Every run is self-describing: the emitted report embeds the complete
resolved configuration (plus the backend and RNG actually used), and all
outputs are deterministic functions of the invocation, so re-running a
command reproduces its files byte for byte.  --workers is deliberately
absent from the echoed config: worker count never changes results, so it
must not change output bytes either.

Exit codes: 0 = detector stopped (or command completed), 1 = detect ran
out of data without stopping, 2 = configuration error, 3 = data error,
4 = calibration failure.
"""

import argparse
import sys

import numpy as np

from . import __version__, backend, preprocess, streamio
from .calibrate import (
    RNG_NAME,
    StreamSpec,
    calibrate_threshold,
    generate_stream,
    sparse_mean,
)
from .detectors import DetectorConfig, run_detector
from .errors import (
    CalibrationError,
    ConfigError,
    DataError,
    NumericError,
    ShiftScanError,
)
from .omd import SCHEDULE_KINDS, ConstraintSet, StepSchedule


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", choices=("acm", "asr", "mcusum", "glr"), default="acm")
    p.add_argument("--dim", type=int, default=None, help="observation dimension")
    p.add_argument("--window", type=int, default=50, help="trailing window of candidate change times")
    p.add_argument("--l1-radius", type=float, default=None, help="l1 ball radius for the mean estimates (default unconstrained)")
    p.add_argument("--schedule", choices=SCHEDULE_KINDS, default="inverse-count")
    p.add_argument("--schedule-scale", type=float, default=1.0)


def _add_calibration_flags(p: argparse.ArgumentParser, horizon_flag: str) -> None:
    p.add_argument("--tolerance", type=float, default=0.1, help="relative ARL tolerance")
    p.add_argument("--replicates", type=int, default=400, help="Monte Carlo replicates per threshold")
    p.add_argument(horizon_flag, dest="calib_horizon", type=int, default=None,
                   help="per-replicate truncation (default 20x target ARL)")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="shiftscan",
        description="Streaming detection of sparse mean shifts in high-dimensional Gaussian sequences",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run a detector over a stream")
    _add_detector_flags(d)
    d.add_argument("--threshold", type=float, default=None, help="stopping threshold b")
    d.add_argument("--target-arl", type=float, default=None, help="calibrate b to this ARL first")
    _add_calibration_flags(d, "--calib-horizon")
    d.add_argument("--input", default=None, help="observation CSV")
    d.add_argument("--frames", default=None, help="frame file or directory")
    d.add_argument("--mode", choices=("real", "diffraction"), default="real")
    d.add_argument("--train-frames", type=int, default=5)
    d.add_argument("--synthetic", action="store_true", help="generate the stream internally")
    d.add_argument("--horizon", type=int, default=None, help="synthetic stream length")
    d.add_argument("--nu", type=int, default=None, help="synthetic change point (samples 1..nu are pre-change)")
    d.add_argument("--shift-support", type=int, default=1)
    d.add_argument("--shift-magnitude", type=float, default=1.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("--trace", default=None, help="statistic trace CSV path")
    d.add_argument("--trace-every", type=int, default=1)
    d.add_argument("--out", default=None, help="report path (default stdout)")
    _add_diffraction_flags(d)
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("calibrate", help="bisect the threshold for a target ARL")
    _add_detector_flags(c)
    c.add_argument("--target-arl", type=float, required=True)
    _add_calibration_flags(c, "--horizon")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out", default=None, help="report path (default stdout)")
    c.set_defaults(func=cmd_calibrate)

    pp = sub.add_parser("preprocess", help="turn frames into observation rows")
    pp.add_argument("--frames", required=True, help="frame file or directory")
    pp.add_argument("--mode", choices=("real", "diffraction"), default="real")
    pp.add_argument("--train-frames", type=int, default=5)
    pp.add_argument("--out", required=True, help="observation CSV path")
    pp.add_argument("--report", default=None, help="sidecar report path (default <out>.report.json)")
    pp.add_argument("--save-baseline", default=None, help="persist the fitted baseline (raw float32)")
    _add_diffraction_flags(pp)
    pp.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("simulate", help="write a synthetic Gaussian stream as CSV")
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--nu", type=int, default=None)
    s.add_argument("--shift-support", type=int, default=1)
    s.add_argument("--shift-magnitude", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    return ap


def _add_diffraction_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("diffraction pipeline")
    g.add_argument("--bins", type=int, default=256)
    g.add_argument("--min-gap-width", type=int, default=3)
    g.add_argument("--hough-r-min", type=int, default=5)
    g.add_argument("--hough-r-max", type=int, default=None)
    g.add_argument("--hough-step", type=int, default=1)
    g.add_argument("--min-band-pixels", type=int, default=16)
    g.add_argument("--min-ring-radius", type=int, default=5)
    g.add_argument("--probe-offset", type=int, default=3)
    g.add_argument("--annulus-half-width", type=float, default=2.0)


def _diffraction_config(args) -> preprocess.DiffractionConfig:
    return preprocess.DiffractionConfig(
        bins=args.bins,
        min_gap_width=args.min_gap_width,
        hough_r_min=args.hough_r_min,
        hough_r_max=args.hough_r_max,
        hough_step=args.hough_step,
        min_band_pixels=args.min_band_pixels,
        min_ring_radius=args.min_ring_radius,
        probe_offset=args.probe_offset,
        annulus_half_width=args.annulus_half_width,
        training_frames=args.train_frames,
    )


def _schedule(args) -> StepSchedule:
    return StepSchedule(kind=args.schedule, scale=args.schedule_scale)


def _constraint(args) -> ConstraintSet:
    if args.l1_radius is None:
        return ConstraintSet.unconstrained()
    return ConstraintSet.l1_ball(args.l1_radius)


def _detector_config(args, dim: int) -> DetectorConfig:
    return DetectorConfig(
        kind=args.detector,
        dim=dim,
        window=args.window,
        schedule=_schedule(args),
        constraint=_constraint(args),
    )


def _shift_spec(args) -> StreamSpec:
    if args.horizon is None:
        raise ConfigError("--synthetic requires --horizon")
    if args.dim is None:
        raise ConfigError("--synthetic requires --dim")
    if args.nu is None:
        return StreamSpec(dim=args.dim, horizon=args.horizon, seed=args.seed)
    shift = sparse_mean(args.dim, args.shift_support, args.shift_magnitude)
    return StreamSpec(
        dim=args.dim,
        horizon=args.horizon,
        change_point=args.nu,
        mean_shift=shift,
        seed=args.seed,
    )


def _resolve_source(args):
    """Returns (X, source_echo, extras) for the detect command."""
    chosen = [s for s in ("input", "frames") if getattr(args, s)] + (
        ["synthetic"] if args.synthetic else []
    )
    if len(chosen) != 1:
        raise ConfigError("choose exactly one of --input, --frames, --synthetic")
    extras = {}
    if args.input:
        X = streamio.read_observations(args.input)
        echo = {"kind": "csv", "path": args.input, "rows": int(X.shape[0])}
    elif args.frames:
        frames = preprocess.load_frames(args.frames)
        if args.mode == "real":
            X, baseline = preprocess.realspace_observations(frames, args.train_frames)
            echo = {
                "kind": "frames",
                "path": args.frames,
                "mode": "real",
                "train_frames": args.train_frames,
                "rows": int(X.shape[0]),
            }
            extras["baseline"] = _baseline_echo(baseline)
        else:
            cfg = _diffraction_config(args)
            X, geometry, baseline = preprocess.diffraction_observations(frames, cfg)
            echo = {
                "kind": "frames",
                "path": args.frames,
                "mode": "diffraction",
                "train_frames": args.train_frames,
                "rows": int(X.shape[0]),
            }
            extras["geometry"] = geometry.to_dict()
            extras["baseline"] = _baseline_echo(baseline)
    else:
        spec = _shift_spec(args)
        X = generate_stream(spec)
        echo = {
            "kind": "synthetic",
            "dim": spec.dim,
            "horizon": spec.horizon,
            "nu": spec.change_point,
            "shift_support": args.shift_support if spec.change_point is not None else None,
            "shift_magnitude": args.shift_magnitude if spec.change_point is not None else None,
            "seed": spec.seed,
        }
    if args.dim is not None and X.shape[1] != args.dim:
        raise ConfigError(f"--dim {args.dim} does not match source dimension {X.shape[1]}")
    return X, echo, extras


def _baseline_echo(baseline) -> dict:
    return {
        "shape": list(baseline.mean.shape),
        "masked": int(baseline.mask.sum()),
        "training_frames": baseline.training_frames,
    }


def _run_echo(args) -> dict:
    return {
        "backend": backend.ACTIVE_BACKEND,
        "rng": RNG_NAME,
        "version": __version__,
    }


def _emit(doc: dict, out) -> None:
    text = streamio.dump_report(doc)
    if out:
        with open(out, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_detect(args) -> int:
    if (args.threshold is None) == (args.target_arl is None):
        raise ConfigError("give exactly one of --threshold and --target-arl")
    X, source_echo, extras = _resolve_source(args)
    config = _detector_config(args, X.shape[1])
    calib_doc = None
    if args.target_arl is not None:
        calib = calibrate_threshold(
            config,
            args.target_arl,
            tolerance=args.tolerance,
            replicates=args.replicates,
            t_max=args.calib_horizon,
            seed=args.seed,
            workers=args.workers,
        )
        threshold = calib.threshold
        calib_doc = calib.to_dict()
    else:
        threshold = args.threshold
    detector = config.build(threshold)
    report = run_detector(X, detector, trace_every=args.trace_every)
    if args.trace:
        streamio.write_trace(args.trace, report.trace)
    doc = {
        "command": "detect",
        "config": {
            "detector": config.describe(),
            "threshold": threshold,
            "target_arl": args.target_arl,
            "source": source_echo,
            "seed": args.seed,
            "trace": args.trace,
            "trace_every": args.trace_every,
            **_run_echo(args),
        },
        "calibration": calib_doc,
        "preprocess": extras or None,
        "result": report.to_dict(),
    }
    _emit(doc, args.out)
    return 0 if report.stopped else 1


def cmd_calibrate(args) -> int:
    if args.dim is None:
        raise ConfigError("calibrate requires --dim")
    config = _detector_config(args, args.dim)
    result = calibrate_threshold(
        config,
        args.target_arl,
        tolerance=args.tolerance,
        replicates=args.replicates,
        t_max=args.calib_horizon,
        seed=args.seed,
        workers=args.workers,
    )
    doc = {
        "command": "calibrate",
        "config": {
            "detector": config.describe(),
            "target_arl": args.target_arl,
            "tolerance": args.tolerance,
            "replicates": args.replicates,
            "truncation_horizon": result.truncation_horizon,
            "seed": args.seed,
            **_run_echo(args),
        },
        "result": result.to_dict(),
    }
    _emit(doc, args.out)
    return 0


def cmd_preprocess(args) -> int:
    frames = preprocess.load_frames(args.frames)
    echo = {
        "frames": args.frames,
        "mode": args.mode,
        "train_frames": args.train_frames,
        "frame_count": len(frames),
        "frame_shape": list(frames[0].pixels.shape),
        **_run_echo(args),
    }
    doc = {"command": "preprocess", "config": echo}
    if args.mode == "real":
        X, baseline = preprocess.realspace_observations(frames, args.train_frames)
        doc["baseline"] = _baseline_echo(baseline)
    else:
        cfg = _diffraction_config(args)
        X, geometry, baseline = preprocess.diffraction_observations(frames, cfg)
        doc["geometry"] = geometry.to_dict()
        doc["baseline"] = _baseline_echo(baseline)
    doc["rows"] = int(X.shape[0])
    doc["dim"] = int(X.shape[1])
    streamio.write_observations(args.out, X, header_lines=[f"d={X.shape[1]}"])
    if args.save_baseline:
        preprocess.save_baseline(args.save_baseline, baseline)
        doc["baseline_path"] = args.save_baseline
    report_path = args.report if args.report else f"{args.out}.report.json"
    streamio.write_report(report_path, doc)
    return 0


def cmd_simulate(args) -> int:
    spec = _shift_spec(args)
    X = generate_stream(spec)
    nu = "none" if spec.change_point is None else str(spec.change_point)
    streamio.write_observations(
        args.out, X, header_lines=[f"d={spec.dim} nu={nu} seed={spec.seed}"]
    )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"shiftscan: config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, NumericError) as exc:
        print(f"shiftscan: data error: {exc}", file=sys.stderr)
        return 3
    except CalibrationError as exc:
        print(f"shiftscan: calibration failed: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"shiftscan: i/o error: {exc}", file=sys.stderr)
        return 3
    except ShiftScanError as exc:  # any remaining domain error is a data problem
        print(f"shiftscan: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
