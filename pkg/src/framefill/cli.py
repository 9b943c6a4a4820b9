"""Batch command-line entry point.

Subcommands: inpaint, synth, eval, align-debug, profile. Exit codes:
0 success, 1 usage error, 2 input/output error, 3 numeric failure. Every
failure prints one diagnostic line to stderr. Config files are flat
``key = value`` text; unknown keys are errors and command-line flags win
over config values.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .align import AlignConfig, estimate_affine
from .datasynth import SynthParams, composite_holes, synth_background, synth_mask_sequence
from .errors import ConfigError, FramefillError, InputDataError, NumericFailure
from .features import ENCODER_KINDS, EncoderSpec
from .losses import LossWeights
from .matcher import SOFTMAX_MODES
from .media import (
    HoleMask, VideoClip, _list_images, load_clip, load_frame, load_frames,
    load_mask, mask_to_visibility, save_clip, save_gray, save_masks,
)
from .metrics import psnr, ssim, temporal_profile
from .pipeline import InpaintConfig, inpaint_video

log = logging.getLogger("framefill")

_INPAINT_KEYS = {
    "max_refs", "ref_stride", "bidirectional", "reference_update",
    "softmax_mode",
    "encoder.kind", "encoder.stride", "encoder.channels", "encoder.seed",
    "encoder.layers",
    "align.pyramid_levels", "align.max_iters_per_level", "align.tol",
    "align.charbonnier_eps", "align.init",
    "loss.align", "loss.hole_visible", "loss.hole_invisible",
    "loss.non_hole", "loss.perceptual", "loss.style", "loss.tv",
}

_SYNTH_KEYS = {
    "synth.n_frames", "synth.out_size", "synth.rotation_deg",
    "synth.shear_deg", "synth.scale_pct", "synth.translation_px",
    "synth.mask_scale_max",
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting."""

    def error(self, message: str) -> None:  # noqa: D102 - argparse hook
        raise ConfigError(f"{message}\n{self.format_usage().rstrip()}")


def parse_config_text(text: str, allowed: set[str]) -> dict[str, str]:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _read_config(path: str | None, allowed: set[str]) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputDataError(f"cannot read config file {p}: {exc}") from exc
    return parse_config_text(text, allowed)


def _to_int(cfg: dict[str, str], key: str, default: int) -> int:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key}: not an integer: {cfg[key]!r}") from exc


def _to_float(cfg: dict[str, str], key: str, default: float) -> float:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key}: not a number: {cfg[key]!r}") from exc


def _to_bool(cfg: dict[str, str], key: str, default: bool) -> bool:
    if key not in cfg:
        return default
    v = cfg[key].lower()
    if v in ("1", "true", "on", "yes"):
        return True
    if v in ("0", "false", "off", "no"):
        return False
    raise ConfigError(f"config key {key}: not a boolean: {cfg[key]!r}")


def build_inpaint_config(cfg: dict[str, str],
                         args: argparse.Namespace) -> tuple[InpaintConfig, LossWeights]:
    kind = cfg.get("encoder.kind", "raw-pool")
    if kind not in ENCODER_KINDS:
        raise ConfigError(f"config key encoder.kind: unknown encoder {kind!r}")
    channels = _to_int(cfg, "encoder.channels", 0) or None
    encoder = EncoderSpec(
        kind=kind,
        stride=_to_int(cfg, "encoder.stride", 4),
        channels=channels,
        seed=_to_int(cfg, "encoder.seed", 0),
        layers=_to_int(cfg, "encoder.layers", 3),
    )
    align = AlignConfig(
        pyramid_levels=_to_int(cfg, "align.pyramid_levels", 4),
        max_iters_per_level=_to_int(cfg, "align.max_iters_per_level", 100),
        tol=_to_float(cfg, "align.tol", 1e-5),
        charbonnier_eps=_to_float(cfg, "align.charbonnier_eps", 1e-3),
        init=cfg.get("align.init", "previous"),
    )
    ref_stride: int | None = None
    if cfg.get("ref_stride", "auto") != "auto":
        ref_stride = _to_int(cfg, "ref_stride", 0)

    bidirectional = _to_bool(cfg, "bidirectional", True)
    reference_update = _to_bool(cfg, "reference_update", True)
    softmax_mode = cfg.get("softmax_mode", "masked")
    if getattr(args, "no_bidirectional", False):
        bidirectional = False
    if getattr(args, "no_ref_update", False):
        reference_update = False
    if getattr(args, "softmax", None):
        softmax_mode = args.softmax
    if softmax_mode not in SOFTMAX_MODES:
        raise ConfigError(f"unknown softmax mode {softmax_mode!r}")

    weights = LossWeights(
        align=_to_float(cfg, "loss.align", 2.0),
        hole_visible=_to_float(cfg, "loss.hole_visible", 10.0),
        hole_invisible=_to_float(cfg, "loss.hole_invisible", 20.0),
        non_hole=_to_float(cfg, "loss.non_hole", 6.0),
        perceptual=_to_float(cfg, "loss.perceptual", 0.01),
        style=_to_float(cfg, "loss.style", 24.0),
        tv=_to_float(cfg, "loss.tv", 0.1),
    )
    try:
        config = InpaintConfig(
            max_refs=_to_int(cfg, "max_refs", 10),
            ref_stride=ref_stride,
            encoder=encoder,
            align=align,
            bidirectional=bidirectional,
            reference_update=reference_update,
            softmax_mode=softmax_mode,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config, weights


def build_synth_params(cfg: dict[str, str], seed: int) -> SynthParams:
    try:
        return SynthParams(
            n_frames=_to_int(cfg, "synth.n_frames", 5),
            out_size=_to_int(cfg, "synth.out_size", 256),
            rotation_deg=_to_float(cfg, "synth.rotation_deg", 2.0),
            shear_deg=_to_float(cfg, "synth.shear_deg", 2.0),
            scale_pct=_to_float(cfg, "synth.scale_pct", 2.0),
            translation_px=_to_float(cfg, "synth.translation_px", 5.0),
            mask_scale_max=_to_float(cfg, "synth.mask_scale_max", 0.5),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_inpaint(args: argparse.Namespace) -> int:
    cfg_map = _read_config(args.config, _INPAINT_KEYS)
    cfg, _ = build_inpaint_config(cfg_map, args)
    clip = load_clip(Path(args.frames), Path(args.masks))
    log.info("inpainting %d frames (%dx%d)", clip.n, clip.height, clip.width)
    out_clip, report = inpaint_video(clip, cfg, threads=args.threads)
    save_clip(out_clip, Path(args.out))
    if args.report:
        report_path = Path(args.report)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report.save_csv(report_path)
    if args.debug_dir:
        debug = Path(args.debug_dir)
        debug.mkdir(parents=True, exist_ok=True)
        for entry in report.forward:
            if entry.c_mask is not None:
                save_gray(entry.c_mask, debug / f"cmask_{entry.frame:05d}.png")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg_map = _read_config(args.config, _SYNTH_KEYS)
    params = build_synth_params(cfg_map, args.seed)
    images = _list_images(Path(args.images))
    object_masks = _list_images(Path(args.object_masks))
    if not images:
        raise InputDataError(f"no images found in {args.images}")
    if not object_masks:
        raise InputDataError(f"no object masks found in {args.object_masks}")

    rng = np.random.default_rng(args.seed)
    src_path = images[int(rng.integers(len(images)))]
    omask_path = object_masks[int(rng.integers(len(object_masks)))]
    source = load_frame(src_path)
    omask = load_mask(omask_path)

    bg = synth_background(source, params, rng)
    masks = synth_mask_sequence(omask, params, rng)
    input_clip, truth_clip = composite_holes(bg, masks)

    out = Path(args.out)
    save_clip(input_clip, out / "input_frames")
    save_masks(input_clip.masks, out / "input_masks")
    save_clip(truth_clip, out / "truth_frames")
    manifest = "\n".join([
        f"seed = {args.seed}",
        f"source_image = {src_path.name}",
        f"object_mask = {omask_path.name}",
        f"n_frames = {params.n_frames}",
        f"out_size = {params.out_size}",
        f"rotation_deg = {params.rotation_deg}",
        f"shear_deg = {params.shear_deg}",
        f"scale_pct = {params.scale_pct}",
        f"translation_px = {params.translation_px}",
        f"mask_scale_max = {params.mask_scale_max}",
    ]) + "\n"
    (out / "manifest.txt").write_text(manifest)
    log.info("synthesized %d frames into %s", params.n_frames, out)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    preds = load_frames(Path(args.pred))
    truths = load_frames(Path(args.truth))
    if len(preds) != len(truths):
        raise InputDataError(
            f"frame count mismatch: {len(preds)} predictions vs {len(truths)} truths"
        )
    masks: list[HoleMask] | None = None
    if args.masks:
        files = _list_images(Path(args.masks))
        if len(files) != len(preds):
            raise InputDataError(
                f"mask count mismatch: {len(files)} masks vs {len(preds)} frames"
            )
        masks = [load_mask(p) for p in files]

    lines = ["frame,psnr_full,psnr_hole,ssim"]
    full_vals = []
    hole_vals = []
    ssim_vals = []
    for i, (p, t) in enumerate(zip(preds, truths)):
        if p.data.shape != t.data.shape:
            raise InputDataError(f"frame {i}: prediction/truth size mismatch")
        full = psnr(p, t)
        s = ssim(p, t)
        full_vals.append(full)
        ssim_vals.append(s)
        hole_txt = ""
        if masks is not None and not masks[i].is_empty():
            hole = psnr(p, t, masks[i])
            hole_vals.append(hole)
            hole_txt = f"{hole:.4f}"
        lines.append(f"{i},{full:.4f},{hole_txt},{s:.6f}")
    mean_hole = f"{np.mean(hole_vals):.4f}" if hole_vals else ""
    lines.append(
        f"mean,{np.mean(full_vals):.4f},{mean_hole},{np.mean(ssim_vals):.6f}"
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    return 0


def _cmd_align_debug(args: argparse.Namespace) -> int:
    target = load_frame(Path(args.target))
    ref = load_frame(Path(args.ref))
    if args.mask_t:
        v_t = mask_to_visibility(load_mask(Path(args.mask_t)))
    else:
        v_t = mask_to_visibility(
            HoleMask(np.zeros((target.height, target.width), dtype=np.uint8))
        )
    if args.mask_r:
        v_r = mask_to_visibility(load_mask(Path(args.mask_r)))
    else:
        v_r = mask_to_visibility(
            HoleMask(np.zeros((ref.height, ref.width), dtype=np.uint8))
        )
    rows = ["level,iter,objective"]
    est = estimate_affine(
        target, v_t, ref, v_r, AlignConfig(),
        callback=lambda lv, it, obj: rows.append(f"{lv},{it},{obj:.8f}"),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n")
    print(
        "affine: "
        f"a11={est.a11:.6f} a12={est.a12:.6f} a21={est.a21:.6f} "
        f"a22={est.a22:.6f} tx={est.tx:.6f} ty={est.ty:.6f}"
    )
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    frames = load_frames(Path(args.frames))
    empty = HoleMask(np.zeros((frames[0].height, frames[0].width), dtype=np.uint8))
    clip = VideoClip(tuple(frames), tuple(empty for _ in frames))
    if not 0 <= args.row < clip.height:
        raise ConfigError(f"row {args.row} out of range for height {clip.height}")
    prof = temporal_profile(clip, args.row)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    arr = np.rint(np.clip(prof, 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        Image.fromarray(arr, mode="RGB").save(out)
    except OSError as exc:
        raise InputDataError(f"cannot write {out}: {exc}") from exc
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="framefill",
                     description="Feed-forward video inpainting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inpaint", help="complete the holes of a clip")
    p.add_argument("--frames", required=True, help="input frame directory")
    p.add_argument("--masks", required=True, help="hole mask directory")
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--no-bidirectional", action="store_true",
                   help="forward pass only, no reverse blend")
    p.add_argument("--no-ref-update", action="store_true",
                   help="do not replace references with completed frames")
    p.add_argument("--softmax", choices=list(SOFTMAX_MODES),
                   help="weight normalization mode")
    p.add_argument("--report", help="write per-frame diagnostics CSV here")
    p.add_argument("--debug-dir",
                   help="write per-frame never-visible masks as grayscale PNGs")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=_cmd_inpaint)

    p = sub.add_parser("synth", help="generate a synthetic holed clip")
    p.add_argument("--images", required=True, help="directory of source still images")
    p.add_argument("--object-masks", required=True, help="directory of object masks")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--config", help="flat key = value config file")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="PSNR/SSIM of predictions against truth")
    p.add_argument("--pred", required=True, help="predicted frame directory")
    p.add_argument("--truth", required=True, help="ground-truth frame directory")
    p.add_argument("--masks", help="hole mask directory for hole-only PSNR")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("align-debug", help="dump per-level objective traces")
    p.add_argument("--target", required=True, help="target image file")
    p.add_argument("--ref", required=True, help="reference image file")
    p.add_argument("--mask-t", help="target hole mask file")
    p.add_argument("--mask-r", help="reference hole mask file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_align_debug)

    p = sub.add_parser("profile", help="stack one pixel row across frames")
    p.add_argument("--frames", required=True, help="frame directory")
    p.add_argument("--row", required=True, type=int)
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=_cmd_profile)
    return parser


def run(argv: list[str]) -> int:
    """Execute one subcommand; returns the process exit code."""
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (InputDataError, OSError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return 2
    except (NumericFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FramefillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
