"""Command-line front end: ``kfiou {iou,gauss,loss,evar,sweep,bench,selftest}``.

Exit codes: 0 success, 1 assertion or self-test failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict

import numpy as np

from . import consistency as cs
from .diff import grad_kf_loss
from .gaussian import NotSPDError, box_to_gaussian, gaussian_product, gaussian_volume
from .geometry import InvalidBoxError, RotatedBox2D, RotatedBox3D, rasterized_iou, skew_iou_2d, skew_iou_3d
from .losses import (
    CenterForm,
    KFForm,
    LossConfig,
    center_loss,
    gwd_distance,
    gwd_loss,
    kf_loss,
    kfiou,
    kfiou_rescaled,
    kld_distance,
    kld_loss,
    regression_loss,
)

FIELDS_2D = ("x", "y", "w", "h", "theta")
FIELDS_3D = ("x", "y", "z", "w", "h", "l", "theta")


class UsageError(Exception):
    """Bad arguments or input; maps to exit code 2."""


# ------------------------------------------------------------------ parsing


def parse_box(text: str, dims: int = 2, label: str = "box"):
    """Parse ``x,y,w,h,theta`` (2-D) or ``x,y,z,w,h,l,theta`` (3-D)."""
    names = FIELDS_2D if dims == 2 else FIELDS_3D
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != len(names):
        raise UsageError(f"{label}: expected {len(names)} comma-separated fields {','.join(names)}, got {len(parts)}")
    vals = []
    for name, raw in zip(names, parts):
        try:
            v = float(raw)
        except ValueError:
            raise UsageError(f"{label}: field '{name}' is not a number: {raw!r}") from None
        if not math.isfinite(v):
            raise UsageError(f"{label}: field '{name}' must be finite: {raw!r}")
        if name in ("w", "h", "l") and v <= 0:
            raise UsageError(f"{label}: field '{name}' must be > 0: {raw!r}")
        vals.append(v)
    try:
        return RotatedBox2D(*vals) if dims == 2 else RotatedBox3D(*vals)
    except InvalidBoxError as e:
        raise UsageError(f"{label}: {e}") from None


def _dims(args) -> int:
    return 3 if getattr(args, "three_d", False) else 2


def _box_pairs(args) -> list:
    """All box pairs from positional args or ``--file``; parsed before any output."""
    dims = _dims(args)
    if args.file:
        try:
            with open(args.file) as fh:
                lines = fh.read().splitlines()
        except OSError as e:
            raise UsageError(f"cannot read {args.file}: {e}") from None
        pairs = []
        for n, line in enumerate(lines, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 2:
                raise UsageError(f"{args.file}:{n}: expected two whitespace-separated boxes")
            pairs.append(tuple(parse_box(t, dims, f"{args.file}:{n} box {i + 1}") for i, t in enumerate(toks)))
        return pairs
    if len(args.boxes) != 2:
        raise UsageError(f"expected two boxes, got {len(args.boxes)}")
    return [tuple(parse_box(t, dims, f"box {i + 1}") for i, t in enumerate(args.boxes))]


def _parse_range(text: str, name: str, parts: int) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--{name}: expected numbers separated by ':', got {text!r}") from None
    if len(vals) != parts:
        raise UsageError(f"--{name}: expected {parts} ':'-separated values, got {text!r}")
    if vals[0] > vals[1]:
        raise UsageError(f"--{name}: start exceeds stop in {text!r}")
    if parts == 3 and vals[2] <= 0:
        raise UsageError(f"--{name}: step must be > 0 in {text!r}")
    return vals


def _parse_list(text: str, name: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"--{name}: empty list")
    return vals


def _methods(text: str | None, default) -> list:
    if text is None:
        return list(default)
    ms = [m.strip() for m in text.split(",") if m.strip()]
    for m in ms:
        if m not in cs.METHODS:
            raise UsageError(f"--methods: unknown method {m!r}; choose from {','.join(cs.METHODS)}")
    return ms


def loss_config(args) -> LossConfig:
    """Config file first, then any explicit flag on top."""
    base = {}
    if getattr(args, "config", None):
        try:
            base = LossConfig.from_file(args.config).to_dict()
        except (OSError, KeyError, ValueError) as e:
            raise UsageError(f"--config {args.config}: {e}") from None
    for key in ("kf_form", "center_form", "epsilon", "gwd_tau", "kld_tau", "gwd_f", "kld_f", "smooth_l1_sigma"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    if getattr(args, "rescale", False):
        base["rescale"] = True
    try:
        return LossConfig.from_dict(base)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _add_loss_flags(p):
    g = p.add_argument_group("loss configuration (flags override --config)")
    g.add_argument("--config", help="INI file with a [loss] section")
    g.add_argument("--form", dest="kf_form", choices=[f.value for f in KFForm])
    g.add_argument("--center", dest="center_form", choices=[c.value for c in CenterForm])
    g.add_argument("--epsilon", type=float)
    g.add_argument("--rescale", action="store_true", help="rescale KFIoU by its upper bound before the loss form")
    g.add_argument("--smooth-l1-sigma", dest="smooth_l1_sigma", type=float)
    g.add_argument("--gwd-tau", dest="gwd_tau", type=float)
    g.add_argument("--kld-tau", dest="kld_tau", type=float)
    g.add_argument("--gwd-f", dest="gwd_f", choices=["sqrt", "log1p"])
    g.add_argument("--kld-f", dest="kld_f", choices=["sqrt", "log1p"])


def _add_dims(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--2d", dest="three_d", action="store_false", help="x,y,w,h,theta boxes (default)")
    g.add_argument("--3d", dest="three_d", action="store_true", help="x,y,z,w,h,l,theta boxes")
    p.set_defaults(three_d=False)


def _add_protocol_flags(p):
    g = p.add_argument_group("pair protocol")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=1000, help="number of box pairs")
    g.add_argument("--max-dev", type=float, default=5.0, help="max center deviation in px")
    g.add_argument("--scale", type=float, default=1.0, help="extent multiplier")
    g.add_argument("--scale-deviation", action="store_true", help="scale the center deviation too")
    g.add_argument("--extent", default="4:50", help="long-side range lo:hi")
    g.add_argument("--aspect-range", default="1:8", help="aspect ratio range lo:hi")
    g.add_argument("--pred-shape", default="same", choices=cs.PRED_SHAPES)
    g.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${cs.THREADS_ENV} or 1)")


def protocol(args, **overrides) -> cs.PairProtocol:
    kw = dict(
        seed=args.seed,
        n_samples=args.n,
        max_center_dev=args.max_dev,
        extent_range=_parse_range(args.extent, "extent", 2),
        aspect_range=_parse_range(args.aspect_range, "aspect-range", 2),
        scale=args.scale,
        scale_deviation=args.scale_deviation,
        pred_shape=args.pred_shape,
    )
    kw.update(overrides)
    try:
        return cs.PairProtocol(**kw)
    except ValueError as e:
        raise UsageError(f"invalid protocol: {e}") from None


def _config_header(proto: cs.PairProtocol | None, cfg: LossConfig, extra: dict | None = None) -> str:
    lines = []
    if proto is not None:
        lines.append("# protocol: " + json.dumps(asdict(proto), sort_keys=True))
    lines.append("# loss_config: " + json.dumps(cfg.to_dict(), sort_keys=True))
    if extra:
        lines.append("# sweep: " + json.dumps(extra, sort_keys=True))
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------- commands


def cmd_iou(args) -> int:
    pairs = _box_pairs(args)
    if args.mode == "raster" and _dims(args) == 3:
        raise UsageError("--mode raster is 2-D only")
    if args.grid < 100:
        raise UsageError("--grid must be >= 100")
    lines = []
    for b1, b2 in pairs:
        exact = skew_iou_2d(b1, b2) if isinstance(b1, RotatedBox2D) else skew_iou_3d(b1, b2)
        if args.all:
            g1, g2 = box_to_gaussian(b1), box_to_gaussian(b2)
            lines.append(f"exact {exact:.6f} kfiou {kfiou(g1, g2):.6f} rescaled {kfiou_rescaled(g1, g2):.6f}")
        elif args.mode == "exact":
            lines.append(f"{exact:.6f}")
        elif args.mode == "kfiou":
            lines.append(f"{kfiou(box_to_gaussian(b1), box_to_gaussian(b2)):.6f}")
        else:
            lines.append(f"{rasterized_iou(b1, b2, args.grid):.6f}")
    print("\n".join(lines))
    return 0


def _matrix(m) -> list:
    return [[float(v) for v in row] for row in np.asarray(m, dtype=float)]


def cmd_gauss(args) -> int:
    dims = _dims(args)
    if len(args.boxes) not in (1, 2):
        raise UsageError("gauss takes one box, or two for their product")
    boxes = [parse_box(t, dims, f"box {i + 1}") for i, t in enumerate(args.boxes)]
    gs = [box_to_gaussian(b) for b in boxes]
    out = {
        "gaussians": [
            {"mu": [float(v) for v in g.mu], "sigma": _matrix(g.sigma), "volume": float(gaussian_volume(g.sigma))}
            for g in gs
        ]
    }
    if len(gs) == 2:
        prod = gaussian_product(*gs)
        out["product"] = {
            "mu": [float(v) for v in prod.gaussian.mu],
            "sigma": _matrix(prod.gaussian.sigma),
            "volume": float(gaussian_volume(prod.gaussian.sigma)),
            "alpha": float(prod.alpha),
            "kalman_gain": _matrix(prod.kalman_gain),
        }
        out["kfiou"] = float(kfiou(*gs))
    if args.format == "json":
        print(json.dumps(out, sort_keys=True))
        return 0
    for i, g in enumerate(out["gaussians"], 1):
        print(f"box {i}: mu={g['mu']} volume={g['volume']:.6g}")
        print(f"  sigma={g['sigma']}")
    if "product" in out:
        p = out["product"]
        print(f"product: mu={p['mu']} volume={p['volume']:.6g} alpha={p['alpha']:.6g}")
        print(f"  sigma={p['sigma']}")
        print(f"kfiou {out['kfiou']:.6f}")
    return 0


def cmd_loss(args) -> int:
    cfg = loss_config(args)
    dims = _dims(args)
    pred = parse_box(args.pred, dims, "pred")
    gt = parse_box(args.gt, dims, "gt")
    anchor = parse_box(args.anchor, dims, "anchor") if args.anchor else gt
    gp, gg = box_to_gaussian(pred), box_to_gaussian(gt)
    out = {
        "kf_loss": float(kf_loss(pred, gt, cfg)),
        "center_loss": float(center_loss(pred, gt, anchor, cfg)),
        "regression_loss": float(regression_loss(pred, gt, anchor, cfg)),
        "gwd_distance": float(gwd_distance(gp, gg)),
        "gwd_loss": float(gwd_loss(gp, gg, cfg.gwd_tau, cfg.gwd_f)),
        "kld_distance": float(kld_distance(gp, gg)),
        "kld_loss": float(kld_loss(gp, gg, cfg.kld_tau, cfg.kld_f)),
    }
    if args.grad:
        out["grad"] = [float(v) for v in grad_kf_loss(pred, gt, cfg, anchor)]
    if args.format == "json":
        print(json.dumps({"config": cfg.to_dict(), **out}, sort_keys=True))
        return 0
    sys.stdout.write(_config_header(None, cfg))
    for k, v in out.items():
        print(f"{k:<16} {v:.6f}" if k != "grad" else f"{k:<16} " + " ".join(f"{g:.6g}" for g in v))
    return 0


def render_evar(proto, methods, cfg: LossConfig, fmt: str = "csv", threads=None, literal_evar: bool = False, reports=None) -> str:
    """Report text for an EVar run; identical for any thread count."""
    if reports is None:
        reports = cs.evaluate_methods(proto, methods, cfg, literal_evar, threads)
    if fmt == "json":
        doc = {
            "protocol": asdict(proto),
            "config": cfg.to_dict(),
            "literal_evar": literal_evar,
            "reports": [json.loads(reports[m].to_json()) for m in methods],
        }
        return json.dumps(doc, sort_keys=True) + "\n"
    rows = [(m, reports[m].emean, reports[m].evar, reports[m].evar_literal) for m in methods]
    if fmt == "csv":
        body = "method,emean,evar,evar_literal,n\n" + "".join(
            f"{m},{e!r},{v!r},{vl!r},{proto.n_samples}\n" for m, e, v, vl in rows
        )
        return _config_header(proto, cfg) + body
    col = "evar(literal)" if literal_evar else "evar"
    lines = [f"{'method':<12} {'emean':>12} {col:>14}"]
    for m, e, v, vl in rows:
        lines.append(f"{m:<12} {e:>12.6f} {(vl if literal_evar else v):>14.6f}")
    return _config_header(proto, cfg) + "\n".join(lines) + "\n"


def cmd_evar(args) -> int:
    cfg = loss_config(args)
    proto = protocol(args)
    methods = _methods(args.methods, ("plain",) + cs.TABLE_ORDER)
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")
    reports = cs.evaluate_methods(proto, methods, cfg, args.literal_evar, args.threads)
    if args.out:
        _emit(render_evar(proto, methods, cfg, args.format, literal_evar=args.literal_evar, reports=reports), args.out)
        sys.stdout.write(render_evar(proto, methods, cfg, "text", literal_evar=args.literal_evar, reports=reports))
    else:
        sys.stdout.write(render_evar(proto, methods, cfg, args.format, literal_evar=args.literal_evar, reports=reports))
    if args.assert_order:
        missing = [m for m in cs.TABLE_ORDER if m not in reports]
        if missing:
            raise UsageError(f"--assert-order needs methods {','.join(missing)}")
        if not cs.evar_order_holds(reports):
            got = sorted(cs.TABLE_ORDER, key=lambda m: reports[m].reported_evar)
            print(f"ordering violated: expected {' < '.join(cs.TABLE_ORDER)}, got {' < '.join(got)}", file=sys.stderr)
            return 1
    return 0


def cmd_sweep(args) -> int:
    cfg = loss_config(args)
    if args.kind == "angle":
        lo, hi, step = _parse_range(args.range or "0:90:1", "range", 3)
        if args.aspect < 1:
            raise UsageError("--aspect must be >= 1")
        table = cs.angle_sweep(args.aspect, args.center_dev, (lo, hi), step, _methods(args.methods, cs.SWEEP_METHODS), cfg)
        extra, proto = {"kind": "angle", "aspect": args.aspect, "center_dev": args.center_dev}, None
    elif args.kind == "aspect":
        lo, hi, step = _parse_range(args.range or "1:8:0.5", "range", 3)
        if lo < 1:
            raise UsageError("--range: aspect must start at >= 1")
        table = cs.aspect_sweep(args.delta_theta, (lo, hi), step, _methods(args.methods, cs.SWEEP_METHODS), cfg)
        extra, proto = {"kind": "aspect", "delta_theta": args.delta_theta}, None
    elif args.kind == "deviation":
        if args.devs:
            devs = _parse_list(args.devs, "devs")
        else:
            lo, hi, step = _parse_range(args.range or "0:9:1", "range", 3)
            devs = cs._frange(lo, hi, step)
        if min(devs) < 0:
            raise UsageError("--devs must be >= 0")
        proto = protocol(args)
        table = cs.deviation_sweep(proto, devs, _methods(args.methods, cs.TABLE_ORDER), cfg, args.literal_evar, args.threads)
        extra = {"kind": "deviation"}
    else:
        scales = _parse_list(args.scales or "1,2,4,10", "scales")
        if min(scales) <= 0:
            raise UsageError("--scales must be > 0")
        proto = protocol(args, scale_deviation=args.joint or args.scale_deviation)
        table = cs.scale_sweep(proto, scales, _methods(args.methods, cs.TABLE_ORDER), cfg, args.literal_evar, args.threads)
        extra = {"kind": "scale"}
    _emit(_config_header(proto, cfg, extra) + table.to_csv(), args.out)
    return 0


def _time_per_op(fn, items) -> float:
    t0 = time.perf_counter_ns()
    for a, b in items:
        fn(a, b)
    return (time.perf_counter_ns() - t0) / len(items)


def cmd_bench(args) -> int:
    if args.n < 1000:
        raise UsageError("--n must be >= 1000")
    from .selftest import random_box2d, random_box3d

    rng = np.random.default_rng(args.seed)
    make = random_box2d if args.dims == 2 else random_box3d
    pairs = [(make(rng), make(rng)) for _ in range(args.n)]
    exact = skew_iou_2d if args.dims == 2 else skew_iou_3d
    rows = [
        ("skew_iou_exact", _time_per_op(exact, pairs)),
        ("kfiou", _time_per_op(lambda a, b: kfiou(box_to_gaussian(a), box_to_gaussian(b)), pairs)),
        ("grad_kf_loss", _time_per_op(grad_kf_loss, pairs)),
    ]
    print(f"# n={args.n} dims={args.dims}")
    for name, ns in rows:
        print(f"{name:<16} {ns:>14.1f} ns/op")
    a, b = pairs[0]
    print(f"# spot-check pair 0: exact {exact(a, b):.6f} kfiou {kfiou(box_to_gaussian(a), box_to_gaussian(b)):.6f}")
    return 0


def cmd_selftest(args) -> int:
    from . import selftest

    if args.list:
        print("\n".join(selftest.SUITES))
        return 0
    names = args.suite or list(selftest.SUITES)
    for n in names:
        if n not in selftest.SUITES:
            raise UsageError(f"unknown suite {n!r}; choose from {','.join(selftest.SUITES)}")
    t0 = time.perf_counter()
    results = []
    for n in names:
        r = selftest.SUITES[n]()
        results.append(r)
        if not args.json:
            print(r.line(), flush=True)
            if not r.passed and r.worst_case:
                print("       worst case: " + json.dumps(r.worst_case, sort_keys=True, default=str))
    total = time.perf_counter() - t0
    ok = all(r.passed for r in results)
    if args.json:
        print(json.dumps({"passed": ok, "seconds": total, "suites": [r.to_dict() for r in results]}, sort_keys=True, default=str))
    else:
        print(f"{sum(r.passed for r in results)}/{len(results)} suites passed in {total:.1f}s")
    return 0 if ok else 1


# ------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kfiou", description="Rotated-box IoU, Gaussian box losses and their trend consistency.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("iou", help="exact, KFIoU or rasterized IoU of box pairs")
    _add_dims(s)
    s.add_argument("boxes", nargs="*", help="two boxes, e.g. 0,0,2,2,0 1,0,2,2,0")
    s.add_argument("--file", help="one whitespace-separated box pair per line")
    s.add_argument("--mode", choices=("exact", "kfiou", "raster"), default="exact")
    s.add_argument("--all", action="store_true", help="exact, KFIoU and rescaled KFIoU side by side")
    s.add_argument("--grid", type=int, default=1000, help="raster grid size")
    s.set_defaults(func=cmd_iou)

    s = sub.add_parser("gauss", help="Gaussian of a box, or the product of two")
    _add_dims(s)
    s.add_argument("boxes", nargs="+")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_gauss)

    s = sub.add_parser("loss", help="regression and baseline losses for a prediction/target pair")
    _add_dims(s)
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("--anchor", help="anchor box for offset encoding (default: gt)")
    s.add_argument("--grad", action="store_true", help="also print the gradient w.r.t. pred")
    s.add_argument("--format", choices=("text", "json"), default="text")
    _add_loss_flags(s)
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("evar", help="EMean/EVar of each method against exact SkewIoU")
    _add_protocol_flags(s)
    _add_loss_flags(s)
    s.add_argument("--methods", help=f"comma-separated subset of {','.join(cs.METHODS)}")
    s.add_argument("--literal-evar", action="store_true", help="spread of approximate values about EMean")
    s.add_argument("--format", choices=("csv", "json", "text"), default="text")
    s.add_argument("--out", help="write the report here; a text summary still goes to stdout")
    s.add_argument("--assert-order", action="store_true", help="exit 1 unless the table EVar ordering holds")
    s.set_defaults(func=cmd_evar)

    s = sub.add_parser("sweep", help="plot-ready loss or EVar curves")
    s.add_argument("kind", choices=("angle", "aspect", "deviation", "scale"))
    s.add_argument("--aspect", type=float, default=4.0, help="angle sweep aspect ratio")
    s.add_argument("--center-dev", type=float, default=0.0, help="angle sweep center offset")
    s.add_argument("--delta-theta", type=float, default=10.0, help="aspect sweep angle offset")
    s.add_argument("--range", help="start:stop:step for angle, aspect or deviation sweeps")
    s.add_argument("--devs", help="comma-separated deviations")
    s.add_argument("--scales", help="comma-separated scales")
    s.add_argument("--joint", action="store_true", help="scale the center deviation with the extents")
    s.add_argument("--methods")
    s.add_argument("--literal-evar", action="store_true")
    s.add_argument("--out")
    _add_protocol_flags(s)
    _add_loss_flags(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("bench", help="ns/op of exact SkewIoU, KFIoU and grad_kf_loss")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--dims", type=int, choices=(2, 3), default=2)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("selftest", help="run the property and reproduction suites")
    s.add_argument("--json", action="store_true")
    s.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    s.add_argument("--list", action="store_true")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"kfiou: error: {e}", file=sys.stderr)
        return 2
    except (InvalidBoxError, NotSPDError) as e:
        print(f"kfiou: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
