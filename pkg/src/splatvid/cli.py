"""Command-line front end.

Subcommands: fit, render, interpolate, corr, bench, oracle-check.
Exit codes: 0 success, 2 validation error, 3 format error, 4 numerical
failure (NaN detected).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from splatvid import fileio, fit as fit_mod, metrics, pipeline, synth
from splatvid.core import Density, FrameBuffer, ValidationError
from splatvid.fit import FitConfig, ParamVector, gradients
from splatvid.motion import FlowConvention
from splatvid.raster import Normalization, RenderConfig, render_dense, render_tiled

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_FORMAT = 3
EXIT_NUMERICAL = 4


def _load_frame(path) -> FrameBuffer:
    return fileio.load_ppm(path) if str(path).endswith(".ppm") else fileio.load_frm(path)


def _save_frame(path, frame: FrameBuffer) -> None:
    if str(path).endswith(".ppm"):
        fileio.save_ppm(path, frame)
    else:
        fileio.save_frm(path, frame)


def _density(arg: str) -> Density:
    return Density.ONE_PER_PIXEL if arg == "1" else Density.ONE_PER_FOUR_PIXELS


def _normalization(arg: str) -> Normalization:
    return Normalization.PAPER_DET if arg == "paper-det" else Normalization.SQRT_DET


def _convention(arg: str) -> FlowConvention:
    return FlowConvention.CONSISTENT if arg == "consistent" else FlowConvention.PAPER_LITERAL


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--density", choices=["1", "4"], default="1")
    p.add_argument(
        "--normalization", choices=["paper-det", "sqrt-det"], default="paper-det"
    )
    p.add_argument("--seed", type=int, default=0)


def _cmd_fit(args) -> int:
    target = _load_frame(args.input)
    cfg = FitConfig(
        iterations=args.iterations,
        normalization=_normalization(args.normalization),
        scale=args.scale if args.scale != 1.0 else None,
    )
    field, trace = fit_mod.fit_frame(target, _density(args.density), cfg)
    fileio.save_gsf(args.output, field)
    if trace:
        print(f"final loss {trace[-1]:.6f} after {len(trace)} iterations")
    return EXIT_OK


def _cmd_render(args) -> int:
    field = fileio.load_gsf(args.input)
    cfg = RenderConfig(
        scale=args.scale,
        normalization=_normalization(args.normalization),
    )
    cfg.validate(field.density)
    out = render_tiled(field, cfg)
    if not np.all(np.isfinite(out.pixels)):
        raise FloatingPointError("NaN in rendered output")
    _save_frame(args.output, out)
    return EXIT_OK


def _cmd_interpolate(args) -> int:
    frame0 = _load_frame(args.frame0)
    frame1 = _load_frame(args.frame1)
    flow01 = fileio.load_flo(args.flow01)
    flow10 = fileio.load_flo(args.flow10)
    timestamps = [float(t) for t in args.timestamps.split(",")]
    opts = pipeline.PipelineOptions(
        density=_density(args.density),
        fit=FitConfig(
            iterations=args.iterations,
            normalization=_normalization(args.normalization),
        ),
        flow_convention=_convention(args.flow_convention),
        normalization=_normalization(args.normalization),
        aow=args.aow,
        bank=fileio.load_bank(args.bank) if args.bank else None,
        fuser=fileio.load_fuser(args.weights) if args.weights else None,
    )
    outputs = pipeline.interpolate(
        frame0, frame1, (flow01, flow10), timestamps, args.scale, opts
    )
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, frame in zip(timestamps, outputs):
        _save_frame(out_dir / f"t{t:.4f}.{args.format}", frame)
    print(f"wrote {len(outputs)} frames to {out_dir}")
    return EXIT_OK


def _cmd_corr(args) -> int:
    frames = [_load_frame(p) for p in args.frames]
    cfg = FitConfig(iterations=args.iterations)
    density = _density(args.density)
    fields = [fit_mod.fit_frame(f, density, cfg)[0] for f in frames]
    report = metrics.stability_report(frames, fields)
    fileio.save_stability_csv(args.output, report)
    for i, g in enumerate(report.gaps):
        print(
            f"gap {g}: pixel pearson {report.pixel_pearson[i]:+.4f} "
            f"cov pearson {report.cov_pearson[i]:+.4f}"
        )
    return EXIT_OK


def _cmd_bench(args) -> int:
    w, h = (int(v) for v in args.resolution.split("x"))
    scales = [int(v) for v in args.temporal_scales.split(",")]
    records = pipeline.run_bench((w, h), args.scale, scales, args.repeats)
    fileio.save_bench_csv(args.output, records)
    for r in records:
        print(
            f"x{r.temporal_scale}: shared {r.shared_ms:.1f} ms, "
            f"per-frame {r.per_frame_ms_mean:.1f} ms"
        )
    return EXIT_OK


def _random_field(rng: np.random.Generator, w: int, h: int, density: Density):
    gw, gh = density.grid_shape(w, h)
    n = gw * gh
    from splatvid.core import GaussianField

    return GaussianField(
        lr_width=w,
        lr_height=h,
        density=density,
        offsets=rng.uniform(0.05, 0.95, (n, 2)),
        sigmas=rng.uniform(0.4, 2.0, (n, 2)),
        rhos=rng.uniform(-0.7, 0.7, n),
        colors=rng.uniform(0.0, 1.0, (n, 3)),
    )


def _cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst_render = 0.0
    for _ in range(20):
        f = _random_field(rng, 8, 8, Density.ONE_PER_PIXEL)
        cfg = RenderConfig(scale=args.scale, truncation_radius=6.0, clamp_output=False)
        diff = np.abs(
            render_tiled(f, cfg).pixels - render_dense(f, cfg).pixels
        ).max()
        worst_render = max(worst_render, float(diff))
    print(f"tiled-vs-dense max abs diff: {worst_render:.3e}")

    worst_grad = 0.0
    eps = 1e-4
    cfg = FitConfig(iterations=0)
    for _ in range(5):
        f = _random_field(rng, 4, 4, Density.ONE_PER_PIXEL)
        target = FrameBuffer(rng.uniform(0.0, 1.0, (4, 4, 3)))
        g = gradients(f, target, cfg)
        theta = ParamVector.from_field(f).raw
        for _ in range(10):
            i = rng.integers(theta.shape[0])
            j = rng.integers(theta.shape[1])
            tp = theta.copy()
            tp[i, j] += eps
            tm = theta.copy()
            tm[i, j] -= eps
            lp = fit_mod.loss(ParamVector(tp).to_field(f), target, cfg)[1]
            lm = fit_mod.loss(ParamVector(tm).to_field(f), target, cfg)[1]
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(g[i, j]), 1e-8)
            worst_grad = max(worst_grad, abs(fd - g[i, j]) / denom)
    print(f"gradient-vs-FD max rel err: {worst_grad:.3e}")

    ok = worst_render <= 1e-5 and worst_grad <= 1e-3
    print("oracle check:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatvid",
        description="Gaussian-kernel video representation: fit, render, interpolate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a kernel field to a frame")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--iterations", type=int, default=300)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("render", help="rasterize a stored field")
    p.add_argument("input")
    p.add_argument("output")
    _add_common(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("interpolate", help="render intermediate frames")
    p.add_argument("frame0")
    p.add_argument("frame1")
    p.add_argument("flow01")
    p.add_argument("flow10")
    p.add_argument("output_dir")
    p.add_argument("--timestamps", required=True, help="comma-separated, in [0,1]")
    p.add_argument(
        "--flow-convention", choices=["consistent", "paper"], default="consistent"
    )
    aow = p.add_mutually_exclusive_group()
    aow.add_argument("--aow", dest="aow", action="store_true", default=True)
    aow.add_argument("--no-aow", dest="aow", action="store_false")
    p.add_argument("--weights", default=None)
    p.add_argument("--bank", default=None)
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--format", choices=["ppm", "frm"], default="ppm")
    _add_common(p)
    p.set_defaults(func=_cmd_interpolate)

    p = sub.add_parser("corr", help="temporal stability report over a clip")
    p.add_argument("frames", nargs="+")
    p.add_argument("--output", required=True)
    p.add_argument("--iterations", type=int, default=200)
    _add_common(p)
    p.set_defaults(func=_cmd_corr)

    p = sub.add_parser("bench", help="latency benchmark")
    p.add_argument("--resolution", default="180x120")
    p.add_argument("--temporal-scales", default="2,4,8,16,32")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--output", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("oracle-check", help="tiled-vs-dense and gradient checks")
    _add_common(p)
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except fileio.FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
