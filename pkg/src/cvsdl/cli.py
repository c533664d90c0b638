"""Command-line entry point: ``cvsdl encode|decode|bench|dict-compare``.

Exit codes: 0 success, 2 configuration / input error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .container import ContainerError, read_container, write_container
from .keyframe import DivergenceError
from .nonkey import ConvergenceError
from .pipeline import (PLOT_SCRIPT, PipelineConfig, bench, config_hash, decode, desk_config,
                       dict_compare, encode, quality_rows, write_rows)
from .synthetic import moving_sequence
from .video import VideoFormatError, VideoSequence, load_sequence, save_sequence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3

log = logging.getLogger("cvsdl")


class ConfigError(ValueError):
    pass


def _format_for(path, explicit=None):
    if explicit:
        return explicit
    return "y4m-luma" if str(path).endswith(".y4m") else "raw8"


def _load(args, path):
    fmt = _format_for(path, getattr(args, "format", None))
    if fmt == "y4m-luma":
        fmt = "y4m"
    return load_sequence(path, format=fmt, rows=getattr(args, "rows", None),
                         cols=getattr(args, "cols", None), max_frames=getattr(args, "max_frames", None))


def _base_config(args) -> PipelineConfig:
    cfg = desk_config() if getattr(args, "desk", False) else PipelineConfig()
    return cfg


def _input_sequence(args):
    if args.input == "synthetic":
        n = args.max_frames or 20
        return moving_sequence(n, seed=args.seed)
    return _load(args, args.input)


def cmd_encode(args) -> int:
    seq = _load(args, args.input)
    cfg = replace(_base_config(args), block_side=args.block, mr_key=args.mrk,
                  mr_nonkey=args.mrnk, gop_size=args.gop, seed=args.seed)
    _validate(cfg)
    ms = encode(seq, cfg)
    write_container(ms, args.out)
    log.info("wrote %d frames to %s", ms.frame_count, args.out)
    return EXIT_OK


def _decode_config(args, ms) -> PipelineConfig:
    cfg = _base_config(args)
    cfg = replace(cfg, block_side=ms.block_side, gop_size=ms.gop_size,
                  mr_key=ms.mr_key, mr_nonkey=ms.mr_nonkey, seed=ms.seed_key)
    cfg = cfg.with_method(args.dict)
    key, nonkey = cfg.key, cfg.nonkey
    if args.omega is not None:
        key = replace(key, omega=args.omega)
    if args.lam is not None:
        key = replace(key, lam=args.lam)
        nonkey = replace(nonkey, lam=args.lam)
    if args.tau is not None:
        nonkey = replace(nonkey, tau=args.tau)
    return replace(cfg, key=key, nonkey=nonkey)


def cmd_decode(args) -> int:
    ms = read_container(args.input)
    cfg = _decode_config(args, ms)
    results = decode(ms, cfg)
    frames = [r.frame for r in results]
    save_sequence(VideoSequence(frames, fps=ms.fps), args.out,
                  format="y4m" if _format_for(args.out) == "y4m-luma" else "raw8")
    if args.ref:
        ref = _load(args, args.ref)
        if ref.frame_count < ms.frame_count or (ref.rows, ref.cols) != (ms.rows, ms.cols):
            raise ConfigError("reference sequence does not match the container geometry")
        csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))
        write_rows(quality_rows(results, ref, cfg), csv_path)
        log.info("quality report in %s", csv_path)
    return EXIT_OK


def cmd_bench(args) -> int:
    seq = _input_sequence(args)
    cfg = replace(_base_config(args), block_side=args.block, gop_size=args.gop, seed=args.seed)
    scenarios = ["equal", "fixed-key"] if args.scenario == "both" else [args.scenario]
    rows = []
    for sc in scenarios:
        rows += bench(seq, cfg, args.mr_list, scenario=sc, trials=args.trials,
                      fixed_key_mr=args.fixed_key_mr)
    out = Path(args.out)
    write_rows(rows, out)
    script = out.with_name(out.stem + "_plot.py")
    script.write_text(PLOT_SCRIPT.format(csv_name=out.name))
    log.info("wrote %s and %s", out, script)
    return EXIT_OK


def cmd_dict_compare(args) -> int:
    seq = _input_sequence(args)
    if not 0 <= args.frame_index < seq.frame_count:
        raise ConfigError(f"frame index {args.frame_index} outside 0..{seq.frame_count - 1}")
    cfg = replace(_base_config(args), block_side=args.block, seed=args.seed)
    rows = dict_compare(seq.frames[args.frame_index], cfg, mr_key=args.mrk,
                        outer_iters=args.iterations)
    write_rows(rows, args.out)
    return EXIT_OK


def _validate(cfg: PipelineConfig):
    for mr in (cfg.mr_key, cfg.mr_nonkey):
        if not 0 < mr <= 1:
            raise ConfigError(f"measurement ratio {mr} outside (0, 1]")
    if cfg.gop_size < 1:
        raise ConfigError("gop size must be >= 1")


def _mr_list(text):
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad MR list {text!r}") from None
    if not vals or any(not 0 < v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("MR values must lie in (0, 1]")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvsdl", description="Compressive video sensing codec")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_input=True):
        if with_input:
            sp.add_argument("--in", dest="input", required=True)
        sp.add_argument("--format", choices=["raw8", "y4m", "y4m-luma"])
        sp.add_argument("--rows", type=int)
        sp.add_argument("--cols", type=int)
        sp.add_argument("--max-frames", type=int)
        sp.add_argument("--desk", action="store_true",
                        help="reduced solver settings for small frames")

    e = sub.add_parser("encode", help="measure a sequence into a .cvsm container")
    common(e)
    e.add_argument("--out", required=True)
    e.add_argument("--block", type=int, default=32)
    e.add_argument("--mrk", type=float, default=0.5)
    e.add_argument("--mrnk", type=float, default=0.3)
    e.add_argument("--gop", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="reconstruct a sequence from a container")
    common(d)
    d.add_argument("--out", required=True)
    d.add_argument("--ref", help="reference sequence for the PSNR/SSIM report")
    d.add_argument("--csv", help="report path (default: output path with .csv)")
    d.add_argument("--dict", choices=["ksvd", "mod", "mdu"], default="ksvd")
    d.add_argument("--lambda", dest="lam", type=float)
    d.add_argument("--tau", type=float)
    d.add_argument("--omega", type=float)
    d.set_defaults(func=cmd_decode)

    b = sub.add_parser("bench", help="rate-distortion sweep")
    common(b, with_input=False)
    b.add_argument("--in", dest="input", default="synthetic",
                   help="sequence path or 'synthetic' (default)")
    b.add_argument("--out", default="bench.csv")
    b.add_argument("--mr-list", type=_mr_list, default=[0.1, 0.3, 0.5])
    b.add_argument("--scenario", choices=["equal", "fixed-key", "both"], default="equal")
    b.add_argument("--fixed-key-mr", type=float, default=0.5)
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--block", type=int, default=32)
    b.add_argument("--gop", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("dict-compare", help="K-SVD / MOD / MDU on one key frame")
    common(c, with_input=False)
    c.add_argument("--in", dest="input", default="synthetic")
    c.add_argument("--out", default="dict_compare.csv")
    c.add_argument("--frame-index", type=int, default=20)
    c.add_argument("--mrk", type=float, default=0.3)
    c.add_argument("--iterations", type=int, default=20)
    c.add_argument("--block", type=int, default=32)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_dict_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DivergenceError, ConvergenceError, FloatingPointError) as exc:
        print(f"cvsdl: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ContainerError, VideoFormatError, ValueError, OSError) as exc:
        print(f"cvsdl: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
