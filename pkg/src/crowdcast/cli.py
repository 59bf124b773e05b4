"""Command-line entry point chaining the full forecasting pipeline.

Exit codes: 0 success, 1 internal/check failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import checks
from .baselines import constvel_forecast, persistence_forecast
from .density import (
    AnnotationStream,
    DensitySequence,
    rasterize,
    read_sequence,
    write_sequence,
)
from .errors import CrowdcastError
from .metrics import evaluate_sequence
from .model import DensityForecastModel, T_IN, T_OUT
from .simulate import get_scenario, simulate, track_oracle
from .train import (
    TrainConfig,
    WINDOW,
    make_windows,
    train_autoencoder,
    train_forecaster,
)

USAGE_ERROR = 2
CHECK_FAILURE = 1


def _fail(message: str, code: int = USAGE_ERROR):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(code)


def _cmd_simulate(args):
    try:
        scenario = get_scenario(args.scenario)
    except (OSError, ValueError, TypeError) as exc:
        _fail(f"bad scenario: {exc}")
    overrides = {}
    if args.frames is not None:
        overrides["n_frames"] = args.frames
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        scenario = dataclasses.replace(scenario, **overrides)
        stream = simulate(scenario)
    except ValueError as exc:
        _fail(str(exc))
    stream.write_csv(args.out)
    print(f"wrote {len(stream)} annotations over {scenario.n_frames} frames to {args.out}")


def _cmd_rasterize(args):
    try:
        stream = AnnotationStream.read_csv(args.ann)
        n_frames = args.frames if args.frames is not None else stream.n_frames()
        if n_frames < 1:
            _fail("annotation stream is empty and --frames not given")
        seq = rasterize(stream, args.width, args.height, n_frames)
    except CrowdcastError as exc:
        _fail(str(exc))
    write_sequence(seq, args.out)
    print(f"wrote {len(seq)} frames of {args.width}x{args.height} to {args.out}")


def _load_data(path) -> DensitySequence:
    try:
        return read_sequence(path)
    except (OSError, CrowdcastError) as exc:
        _fail(str(exc))


def _train_common(args, model, stage):
    seq = _load_data(args.data)
    try:
        config = TrainConfig(batch_size=args.batch, iterations=args.iters,
                             learning_rate=args.lr, seed=args.seed)
        windows = make_windows(seq, args.stride)
    except ValueError as exc:
        _fail(str(exc))
    progress = lambda it, loss: print(f"iter={it} loss={loss}")
    try:
        if stage == "ae":
            train_autoencoder(windows, model, config, progress)
        else:
            train_forecaster(windows, model, config, progress)
    except CrowdcastError as exc:
        _fail(str(exc), CHECK_FAILURE)
    model.save(args.out)
    print(f"saved checkpoint to {args.out}")


def _cmd_train_ae(args):
    variant = "global" if args.variant == "global" else "patch"
    model = DensityForecastModel(args.latent_dim, seed=args.seed, variant=variant)
    _train_common(args, model, "ae")


def _cmd_train_forecaster(args):
    try:
        model = DensityForecastModel.from_checkpoint(args.ae)
    except (OSError, CrowdcastError) as exc:
        _fail(str(exc))
    _train_common(args, model, "forecaster")


def _window_slice(seq: DensitySequence, start: int) -> DensitySequence:
    if start < 0 or start + WINDOW > len(seq):
        _fail(f"window [{start}, {start + WINDOW}) out of range for {len(seq)} frames")
    return DensitySequence(seq.frames[start : start + T_IN], seq.frame_rate)


def _cmd_forecast(args):
    seq = _load_data(args.data)
    c_in = _window_slice(seq, args.window_start)
    try:
        model = DensityForecastModel.from_checkpoint(args.ae)
        fc = DensityForecastModel.from_checkpoint(args.fc)
    except (OSError, CrowdcastError) as exc:
        _fail(str(exc))
    # merge: autoencoder weights from --ae, forecaster weights from --fc
    for name, p in model.forecaster_parameters().items():
        p.data[...] = fc.forecaster_parameters()[name].data
    out = model.forecast(c_in)
    write_sequence(out, args.out)
    print(f"wrote {len(out)} forecast frames to {args.out}")


def _cmd_baseline(args):
    try:
        stream = AnnotationStream.read_csv(args.ann)
    except (OSError, CrowdcastError) as exc:
        _fail(str(exc))
    start = args.window_start
    last = start + T_IN - 1
    if start < 0 or last >= max(stream.n_frames(), 1):
        _fail(f"window start {start} out of range for {stream.n_frames()} annotated frames")
    if args.method == "persistence":
        try:
            window = AnnotationStream(
                [r for r in stream.records if start <= r.frame <= last])
            window = AnnotationStream(
                [dataclasses.replace(r, frame=r.frame - start) for r in window.records])
            c_in = rasterize(window, args.width, args.height, T_IN)
        except CrowdcastError as exc:
            _fail(str(exc))
        out = persistence_forecast(c_in, T_OUT)
    else:
        tracks = track_oracle(stream)
        out = constvel_forecast(tracks, T_OUT, args.width, args.height,
                                args.sigma, last_frame=last)
    write_sequence(out, args.out)
    print(f"wrote {len(out)} {args.method} frames to {args.out}")


def _cmd_evaluate(args):
    pred = _load_data(args.pred)
    gt = _load_data(args.gt)
    try:
        report = evaluate_sequence(pred, gt, sigma=args.sigma, prefactor=args.prefactor)
    except (CrowdcastError, ValueError) as exc:
        _fail(str(exc))
    report.write_csv(args.out)
    a = report.average
    print(f"average d_kl={a[0]:.6f} d_ikl={a[1]:.6f} d_js={a[2]:.6f}")
    f = report.final
    print(f"final d_kl={f[0]:.6f} d_ikl={f[1]:.6f} d_js={f[2]:.6f}")


def _cmd_selftest(args):
    if not checks.run_selftest():
        raise SystemExit(CHECK_FAILURE)


def _positive_int(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdcast",
                                     description="Crowd density forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic annotation CSV")
    p.add_argument("--scenario", default="two-groups",
                   help="preset name (two-groups, static, edge-in) or JSON file")
    p.add_argument("--frames", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("rasterize", help="annotation CSV -> density sequence file")
    p.add_argument("--ann", required=True)
    p.add_argument("--width", type=_positive_int, default=80)
    p.add_argument("--height", type=_positive_int, default=80)
    p.add_argument("--frames", type=_positive_int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rasterize)

    for name in ("train-ae", "train-forecaster"):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a density sequence")
        p.add_argument("--data", required=True)
        p.add_argument("--iters", type=_positive_int, default=1000)
        p.add_argument("--lr", type=float, default=0.001)
        p.add_argument("--batch", type=_positive_int, default=16)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--stride", type=_positive_int, default=1)
        p.add_argument("--out", required=True)
        if name == "train-ae":
            p.add_argument("--latent-dim", type=_positive_int, default=None)
            p.add_argument("--variant", choices=["patch", "global"], default="patch")
            p.set_defaults(func=_cmd_train_ae)
        else:
            p.add_argument("--ae", required=True)
            p.set_defaults(func=_cmd_train_forecaster)

    p = sub.add_parser("forecast", help="forecast 12 frames from a 20-frame window")
    p.add_argument("--data", required=True)
    p.add_argument("--ae", required=True)
    p.add_argument("--fc", required=True)
    p.add_argument("--window-start", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("baseline", help="constvel or persistence forecast")
    p.add_argument("--method", choices=["constvel", "persistence"], required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--window-start", type=int, default=0)
    p.add_argument("--width", type=_positive_int, default=80)
    p.add_argument("--height", type=_positive_int, default=80)
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("evaluate", help="score a forecast against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--prefactor", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("selftest", help="gradient and shape-pipeline checks")
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
