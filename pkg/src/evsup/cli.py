"""``evsup`` command line: one subcommand per pipeline stage.

Every subcommand prints a single JSON summary to stdout.  Exit codes: 1 for
usage errors, 2 for I/O and format errors, 3 for contract violations.
Durations are integer microseconds.  ``EVSUP_SEED`` is the fallback for
``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, cmax, formats, metrics, synth, tokens
from .atc import AttentionWeights, atc
from .errors import EvsupError, FormatError
from .events import EventStream, encode_voxel, slice_by_time
from .flow import FlowField
from .losses import LossWeights, loss_report
from .suppression import IMOMask, MaskLogits, anticipate, dilate, suppress, warp_mask


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _default_seed() -> int:
    # read at parse time so tests can set the variable per call
    try:
        return int(os.environ.get("EVSUP_SEED", "0"))
    except ValueError:
        raise UsageError("EVSUP_SEED must be an integer")


def _window(stream: EventStream, args) -> EventStream:
    if args.t0 is None and args.t1 is None:
        return stream
    t0 = args.t0 if args.t0 is not None else (int(stream.t[0]) if len(stream) else 0)
    t1 = args.t1 if args.t1 is not None else (int(stream.t[-1]) + 1 if len(stream) else t0 + 1)
    return slice_by_time(stream, t0, t1)


def _load_logits(args) -> MaskLogits:
    if args.logits:
        return formats.read_logits(args.logits)
    if args.mask:
        return formats.read_pgm(args.mask).to_logits()
    raise UsageError("one of --logits or --mask is required")


def _read_labels(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["index", "label"]:
        raise FormatError(f"{path}: expected header index,label")
    try:
        data = np.array(rows[1:], dtype=np.int64).reshape(-1, 2)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise FormatError(f"{path}: indices must be 0..N-1 in order")
    return data[:, 1].astype(bool)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_synth(args) -> dict:
    if args.config:
        cfg = synth.SceneConfig.from_dict(json.loads(Path(args.config).read_text()))
        if args.seed_given:
            cfg = synth.SceneConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    else:
        preset = {"default": synth.default_scene, "single-edge": synth.single_edge_scene}[args.preset]
        cfg = preset(args.seed)
    ls = synth.generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_events(out / "events.evs1", ls.stream)
    with open(out / "labels.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "label"])
        w.writerows(enumerate(ls.labels.tolist()))
    for t, m in ls.masks.items():
        formats.write_pgm(out / f"mask_{t}.pgm", m)
    for t, fl in ls.flows.items():
        formats.write_flow(out / f"flow_{t}.flo1", fl)
    (out / "scene.json").write_text(cfg.to_json() + "\n")
    return {"events": len(ls.stream), "imo_events": int(ls.labels.sum()),
            "masks": sorted(ls.masks), "flows": sorted(ls.flows), "warnings": list(ls.warnings)}


def cmd_encode(args) -> dict:
    stream = formats.read_events(args.events)
    vg = encode_voxel(stream, args.bins, args.t0, args.t1)
    np.save(args.out, vg.data)
    return {"bins": vg.bins, "shape": list(vg.data.shape), "window": [vg.t0, vg.t1],
            "signed_mass": float(vg.data.sum()), "abs_mass": float(np.abs(vg.data).sum())}


def cmd_suppress(args) -> dict:
    stream = _window(formats.read_events(args.events), args)
    mask = formats.read_pgm(args.mask)
    if args.dilate:
        mask = dilate(mask, args.dilate)
    kept = suppress(stream, mask, args.keep)
    formats.write_events(args.out, kept)
    return {"input": len(stream), "kept": len(kept), "keep": args.keep}


def cmd_cmax(args) -> dict:
    stream = _window(formats.read_events(args.events), args)
    cfg = cmax.CmaxConfig(args.grid_range, args.grid_step, args.iters, args.step)
    params = cmax.estimate_flow_params(stream, args.tile, cfg, args.t0, args.t1)
    formats.write_flow(args.out, params.to_flow())
    return {"events": len(stream), "tile": params.tile, "grid": list(params.grid), "dur_ref": params.dur_ref,
            "u": params.u.round(6).tolist(), "v": params.v.round(6).tolist()}


def cmd_warp_mask(args) -> dict:
    logits = _load_logits(args)
    out = warp_mask(logits, formats.read_flow(args.flow), args.dtp)
    formats.write_logits(args.out, out)
    return {"shape": list(out.shape), "dtp": args.dtp, "imo_fraction": float((out.values >= 0).mean())}


def cmd_anticipate(args) -> dict:
    logits = _load_logits(args)
    mask = anticipate(logits, formats.read_flow(args.flow), args.dtp, args.tau)
    formats.write_pgm(args.out, mask)
    return {"shape": list(mask.shape), "dtp": args.dtp, "tau": args.tau, "imo_pixels": int(mask.values.sum())}


def cmd_metrics(args) -> dict:
    pred, gt = formats.read_pgm(args.pred), formats.read_pgm(args.gt)
    rep = metrics.hungarian_match(metrics.connected_components(pred), metrics.connected_components(gt))
    out = rep.to_json()
    out["iou"] = metrics.iou(pred, gt)
    out["piou"] = None
    if args.events:
        if not args.labels:
            raise UsageError("--events requires --labels")
        stream = formats.read_events(args.events)
        labels = _read_labels(args.labels)
        if len(labels) != len(stream):
            raise FormatError("label count does not match event count")
        lo, hi = 0, len(stream)
        if args.t0 is not None:
            lo = int(np.searchsorted(stream.t, args.t0))
        if args.t1 is not None:
            hi = int(np.searchsorted(stream.t, args.t1))
        sub = stream.take(slice(lo, hi))
        if sub.shape != pred.shape:
            raise FormatError("mask and event geometry differ")
        out["piou"] = metrics.piou(pred.values[sub.y, sub.x], labels[lo:hi])
    if args.json:
        _write_json(args.json, out)
    return out


def cmd_losses(args) -> dict:
    z = _load_logits(args)
    gt = formats.read_pgm(args.gt)
    fut_z = formats.read_logits(args.future_logits) if args.future_logits else None
    fut_gt = formats.read_pgm(args.future_gt) if args.future_gt else None
    pred = formats.read_flow(args.flow) if args.flow else None
    gtf = formats.read_flow(args.flow_gt) if args.flow_gt else None
    valid = formats.read_pgm(args.valid).values if args.valid else None
    events = _window(formats.read_events(args.events), args) if args.events else None
    rep = loss_report(z, gt.values, fut_z, None if fut_gt is None else fut_gt.values, pred, gtf, valid,
                      events, args.t0, LossWeights())
    if args.json:
        _write_json(args.json, rep)
    return rep


def _bench_case(args):
    h, w, n = args.height, args.width, args.events
    if args.op in ("warp", "anticipate"):
        fn = warp_mask if args.op == "warp" else anticipate

        def make(rng):
            return (MaskLogits(rng.normal(0, 5, (h, w))),
                    FlowField(rng.normal(0, 3, (h, w)), rng.normal(0, 3, (h, w)), 50_000))
        return (lambda a: fn(a[0], a[1], 100_000)), make, {"op": "warp", "H": h, "W": w}

    def events(rng):
        t = np.sort(rng.integers(0, 50_000, n))
        return EventStream(w, h, rng.integers(0, w, n), rng.integers(0, h, n), t, rng.choice([-1, 1], n))

    if args.op == "encode":
        return (lambda s: encode_voxel(s, 2, 0, 50_000)), events, None
    if args.op == "suppress":
        return (lambda a: suppress(a[0], a[1])), (lambda rng: (events(rng), IMOMask(rng.random((h, w)) < 0.1))), None
    if args.op == "iwe":
        def op(a):
            return cmax.variance_focus(cmax.build_iwe(cmax.transport_events(a[0], a[1], 0), h, w))
        return op, (lambda rng: (events(rng), FlowField.constant(h, w, *rng.normal(0, 4, 2), 50_000))), {"op": "splat", "N": n}
    if args.op == "atc":
        fh, fw = max(h // 16, 1), max(w // 16, 1)
        weights = AttentionWeights.init(args.channels, args.heads, args.seed)
        return ((lambda a: atc(a[0], a[1], weights)),
                (lambda rng: (rng.normal(size=(args.channels, fh, fw)), float(rng.uniform(0, 0.1)))),
                {"op": "atc", "C": args.channels, "H": fh, "W": fw, "heads": args.heads})
    raise UsageError(f"unknown bench op {args.op!r}")


def cmd_bench(args) -> dict:
    op, make, desc = _bench_case(args)
    rep = bench.time_op(op, make, args.trials, args.seed, args.threads, args.warmup)
    age = bench.prediction_age(args.forecast_ms, rep.mean_us / 1e3)
    out = {"op": args.op, "timing": rep.to_json(), "age": age.to_json(),
           "flops": bench.flop_estimate(desc) if desc else None}
    if args.json:
        _write_json(args.json, out)
    return out


def cmd_prune(args) -> dict:
    tg = tokens.mask_to_tokens(formats.read_pgm(args.mask), args.patch, args.dilate)
    out = tg.to_json()
    if args.json:
        _write_json(args.json, out)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evsup", description="Anticipatory motion suppression for event streams.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def window(sp):
        sp.add_argument("--t0", type=int, help="window start (us, inclusive)")
        sp.add_argument("--t1", type=int, help="window end (us, exclusive)")

    def mask_in(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--mask", help="binary PGM mask (converted to +/-10 logits)")
        g.add_argument("--logits", help="MLG1 logits")

    sp = sub.add_parser("synth", help="generate a synthetic labelled scene")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--preset", choices=["default", "single-edge"], default="default")
    sp.add_argument("--config", help="scene JSON (overrides --preset)")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("encode", help="two-bin (or B-bin) voxel grid as .npy")
    sp.add_argument("--events", required=True)
    sp.add_argument("--bins", type=int, default=2)
    window(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("suppress", help="keep IMO or ego events under a mask")
    sp.add_argument("--events", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--keep", choices=["imo", "ego"], default="imo")
    sp.add_argument("--dilate", type=int, default=0, help="dilate the mask first (3x3 iterations)")
    window(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_suppress)

    sp = sub.add_parser("cmax", help="contrast-maximization flow estimate")
    sp.add_argument("--events", required=True)
    sp.add_argument("--tile", type=int, default=32, help="tile size in px (default 32)")
    window(sp)
    sp.add_argument("--grid-range", type=float, default=16.0, help="+/- px searched (default 16)")
    sp.add_argument("--grid-step", type=float, default=1.0, help="grid spacing px (default 1)")
    sp.add_argument("--iters", type=int, default=50, help="ascent iterations (default 50)")
    sp.add_argument("--step", type=float, default=0.05, help="ascent step px (default 0.05)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_cmax)

    sp = sub.add_parser("warp-mask", help="warp mask logits into the future")
    mask_in(sp)
    sp.add_argument("--flow", required=True)
    sp.add_argument("--dtp", type=int, required=True, help="prediction horizon (us)")
    sp.add_argument("--out", required=True, help="MLG1 output")
    sp.set_defaults(func=cmd_warp_mask)

    sp = sub.add_parser("anticipate", help="warp then threshold a mask")
    mask_in(sp)
    sp.add_argument("--flow", required=True)
    sp.add_argument("--dtp", type=int, required=True, help="prediction horizon (us)")
    sp.add_argument("--tau", type=float, default=0.5, help="probability threshold (default 0.5)")
    sp.add_argument("--out", required=True, help="PGM output")
    sp.set_defaults(func=cmd_anticipate)

    sp = sub.add_parser("metrics", help="IoU, mIoU, R@0.5 and optional pIoU")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--events", help="events for pIoU")
    sp.add_argument("--labels", help="labels.csv matching --events")
    window(sp)
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("losses", help="loss report")
    mask_in(sp)
    sp.add_argument("--gt", required=True, help="GT mask PGM")
    sp.add_argument("--future-logits")
    sp.add_argument("--future-gt")
    sp.add_argument("--flow", help="predicted flow FLO1")
    sp.add_argument("--flow-gt")
    sp.add_argument("--valid", help="PGM of pixels with valid GT flow")
    sp.add_argument("--events", help="events for the unsupervised term")
    window(sp)
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_losses)

    sp = sub.add_parser("bench", help="wall-clock timing and prediction age")
    sp.add_argument("--op", required=True, choices=["warp", "anticipate", "encode", "suppress", "iwe", "atc"])
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--warmup", type=int, default=bench.WARMUP)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--height", type=int, default=480)
    sp.add_argument("--width", type=int, default=640)
    sp.add_argument("--events", type=int, default=20_000, help="events per random input")
    sp.add_argument("--channels", type=int, default=64)
    sp.add_argument("--heads", type=int, default=4)
    sp.add_argument("--forecast-ms", type=float, default=100.0)
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("prune", help="token keep-set from a mask")
    sp.add_argument("--mask", required=True)
    sp.add_argument("--patch", type=int, default=16)
    sp.add_argument("--dilate", type=int, default=0)
    sp.add_argument("--json")
    sp.set_defaults(func=cmd_prune)
    return p


def _validate(args) -> None:
    for name in ("trials", "threads", "bins", "tile", "patch", "iters"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise UsageError(f"--{name} must be >= 1")
    for name in ("dilate", "warmup"):
        v = getattr(args, name, None)
        if v is not None and v < 0:
            raise UsageError(f"--{name} must be >= 0")
    tau = getattr(args, "tau", None)
    if tau is not None and not 0 < tau < 1:
        raise UsageError("--tau must lie in (0, 1)")


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        if hasattr(args, "seed"):
            args.seed_given = args.seed is not None
            if args.seed is None:
                args.seed = _default_seed()
        summary = {"command": args.command, **args.func(args)}
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (FormatError, OSError) as e:
        print(f"evsup: {e}", file=sys.stderr)
        return 2
    except (EvsupError, ValueError) as e:
        print(f"evsup: {e}", file=sys.stderr)
        return 3
    print(json.dumps(summary, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(run())
