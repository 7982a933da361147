"""Command-line interface.

Exit codes: 0 success, 2 invalid input (bad arguments, config, tensor
contents or shapes), 3 I/O failure.
"""

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ._validation import ValidationError
from .dvts import LtamParams
from .efficiency import CostProfile, cost_report
from .pipeline import BudgetPlan, VideoPlan, plan_budget, run_video, run_vision_stage
from .tensor_store import Rng, TensorFormatError, load_tensor, row_softmax, save_tensor

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3

DEFAULTS = {
    "ratio": [3, 1],
    "kernel_size": 3,
    "w1": 0.3,
    "w2": 0.3,
    "w3": 0.5,
    "sigma_floor": 1e-6,
    "tgvc": True,
    "tgvc_iterations": 1,
    "cross_modal_axis": "text",
    "eq6_swap": False,
    "seed": 0,
    "vision_layer": 23,
    "llm_layer": 2,
    "stage1_rate": 0.5,
}

MASK_DROPPED, MASK_COMPLEMENT, MASK_DOMINANT = 0, 128, 255


class UsageError(ValidationError):
    pass


def _schema():
    return json.loads(resources.files("tokentrim").joinpath("config.schema.json").read_text())


def effective_config(config_path=None, **flags):
    """Defaults, overridden by non-None flags, overridden by the config file."""
    cfg = dict(DEFAULTS)
    cfg.update({k: v for k, v in flags.items() if v is not None})
    if config_path is not None:
        try:
            with open(config_path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{config_path}: invalid JSON ({exc})") from exc
        cfg.update(doc)
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = config_path or "flags"
        raise ValidationError(f"{where}: invalid config: {exc.message}") from exc
    return cfg


def _ltam(cfg):
    return LtamParams(cfg["kernel_size"], cfg["w1"], cfg["w2"], cfg["w3"], cfg["sigma_floor"])


def _plan(cfg, total):
    if "retain" not in cfg:
        raise UsageError("a retain budget is required (--retain or config)")
    return BudgetPlan(total=total, retain=cfg["retain"], ratio=tuple(cfg["ratio"]),
                      ltam=_ltam(cfg), iterations=cfg["tgvc_iterations"], tgvc=cfg["tgvc"],
                      swap_alpha=cfg["eq6_swap"], cross_modal_axis=cfg["cross_modal_axis"],
                      final_retain=cfg.get("final_retain"), stage2_rate=cfg.get("stage2_rate"),
                      vision_layer=cfg["vision_layer"], llm_layer=cfg["llm_layer"])


def _load(path, rank=None):
    try:
        t = load_tensor(path)
    except TensorFormatError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if rank is not None and t.ndim != rank:
        raise ValidationError(f"{path}: expected rank {rank}, got dims {list(t.shape)}")
    return t


def parse_grid(text, n=None):
    if text is None:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise UsageError(f"{n} tokens do not form a square grid; pass --grid HxW")
        return side, side
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--grid must look like HxW, got {text!r}") from None
    if h <= 0 or w <= 0 or (n is not None and h * w != n):
        raise UsageError(f"grid {text} does not cover {n} tokens")
    return h, w


def parse_ratio(text):
    try:
        a, b = (float(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"--ratio must look like a:b, got {text!r}") from None
    return [int(a) if a.is_integer() else a, int(b) if b.is_integer() else b]


def _dump_json(obj, path=None):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def write_pgm(path, grid, selection):
    h, w = grid
    cells = np.full(h * w, MASK_DROPPED, dtype=np.uint8)
    cells[selection.center_indices] = MASK_COMPLEMENT
    cells[selection.member_indices] = MASK_COMPLEMENT
    cells[selection.dominant_indices] = MASK_DOMINANT
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(cells.tobytes())


def _selection_report(sel):
    return {
        "K": sel.k,
        "R": sel.r,
        "alpha": sel.alpha,
        "dominant_indices": sel.dominant_indices.tolist(),
        "center_indices": sel.center_indices.tolist(),
        "member_indices": sel.member_indices.tolist(),
        "labels": sel.labels.tolist(),
        "merge_weights": sel.merge_weights.tolist(),
        "provenance": sel.provenance,
        "source_indices": sel.source_indices.tolist(),
        "scores": {k: v.tolist() for k, v in sel.scores.items()},
    }


def cmd_prune(args):
    feats = _load(args.features, rank=2)
    attn = _load(args.cls_attn, rank=2)
    text = _load(args.text, rank=2) if args.text else None
    cfg = effective_config(args.config, retain=args.retain, ratio=args.ratio)
    grid = parse_grid(args.grid, len(feats))
    sel = run_vision_stage(feats, attn, grid, text, _plan(cfg, len(feats)))
    save_tensor(sel.final_tokens, args.out)
    report = _selection_report(sel)
    report["config"] = cfg
    report["grid"] = list(grid)
    report["output_dims"] = list(sel.final_tokens.shape)
    if args.indices_out:
        _dump_json(report, args.indices_out)
    if args.mask_out:
        write_pgm(args.mask_out, grid, sel)
    _dump_json({"K": sel.k, "R": sel.r, "alpha": sel.alpha,
                "output_dims": report["output_dims"], "out": str(args.out)})
    return EXIT_OK


def cmd_prune_video(args):
    frames = _load(args.features, rank=3)
    attn = _load(args.cls_attn, rank=3)
    text = _load(args.text, rank=2)
    cfg = effective_config(args.config, retain=args.retain, ratio=args.ratio,
                           keep_frames=args.keep_frames)
    keep = cfg.get("keep_frames", len(frames))
    plan = VideoPlan(total_retain=cfg.get("retain", 136), keep_frames=keep,
                     ratio=tuple(cfg["ratio"]), ltam=_ltam(cfg), iterations=cfg["tgvc_iterations"])
    grid = parse_grid(args.grid, frames.shape[1])
    results, clusters = run_video(frames, attn, grid, text, plan)
    tokens = np.vstack([r.final_tokens for r in results])
    save_tensor(tokens, args.out)
    report = {
        "config": cfg,
        "center_frames": clusters.center_frames.tolist(),
        "frame_assignment": clusters.assignment.tolist(),
        "frame_similarity": clusters.similarity.tolist(),
        "per_frame": [_selection_report(r) for r in results],
        "output_dims": list(tokens.shape),
    }
    if args.indices_out:
        _dump_json(report, args.indices_out)
    _dump_json({"frames": keep, "output_dims": list(tokens.shape), "out": str(args.out)})
    return EXIT_OK


def cmd_plan(args):
    ratio = parse_ratio(args.ratio) if args.ratio else [3, 1]
    k, r = plan_budget(args.total, args.retain, tuple(ratio))
    _dump_json({"K": k, "R": r})
    return EXIT_OK


def cmd_flops(args):
    profile = CostProfile(n=args.tokens, d=args.hidden, m=args.ffn, layers=args.layers,
                          kv_bytes_per_element=args.bytes_per_element,
                          gamma=args.retain_fraction)
    _dump_json(cost_report(profile, binary=args.mib))
    return EXIT_OK


def synth_fixture(seed, tokens, dim, heads, text_len, frames=None):
    """Deterministic features, [CLS] attention rows and text features."""
    rng = Rng(seed)
    lead = () if frames is None else (frames,)
    feats = rng.uniform(lead + (tokens, dim), -1.0, 1.0)
    logits = rng.uniform(lead + (heads, tokens), -4.0, 4.0)
    attn = row_softmax(logits.reshape(-1, tokens)).reshape(logits.shape)
    text = rng.uniform((text_len, dim), -1.0, 1.0)
    return feats, attn, text


def cmd_synth(args):
    grid = parse_grid(args.grid, args.tokens)
    for name in ("tokens", "dim", "heads", "text_len"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    feats, attn, text = synth_fixture(args.seed, args.tokens, args.dim, args.heads,
                                      args.text_len, args.frames)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(feats, out / "features.vttf")
    save_tensor(attn, out / "cls_attn.vttf")
    save_tensor(text, out / "text.vttf")
    manifest = {"seed": args.seed, "grid": list(grid), "features": list(feats.shape),
                "cls_attn": list(attn.shape), "text": list(text.shape)}
    _dump_json(manifest, out / "manifest.json")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tokentrim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("prune", help="prune one image's visual tokens")
    pr.add_argument("--features", required=True)
    pr.add_argument("--cls-attn", required=True)
    pr.add_argument("--text")
    pr.add_argument("--grid")
    pr.add_argument("--retain", type=int)
    pr.add_argument("--ratio", type=parse_ratio)
    pr.add_argument("--config")
    pr.add_argument("--out", required=True)
    pr.add_argument("--indices-out")
    pr.add_argument("--mask-out")
    pr.set_defaults(func=cmd_prune)

    pv = sub.add_parser("prune-video", help="inter-frame clustering plus per-frame pruning")
    pv.add_argument("--features", required=True, help="(F, N, d) frames")
    pv.add_argument("--cls-attn", required=True, help="(F, H, N) attention")
    pv.add_argument("--text", required=True)
    pv.add_argument("--grid")
    pv.add_argument("--retain", type=int, help="total tokens over all kept frames")
    pv.add_argument("--keep-frames", type=int)
    pv.add_argument("--ratio", type=parse_ratio)
    pv.add_argument("--config")
    pv.add_argument("--out", required=True)
    pv.add_argument("--indices-out")
    pv.set_defaults(func=cmd_prune_video)

    pl = sub.add_parser("plan", help="split a budget into dominant and complement counts")
    pl.add_argument("--total", type=int, required=True)
    pl.add_argument("--retain", type=int, required=True)
    pl.add_argument("--ratio")
    pl.set_defaults(func=cmd_plan)

    fl = sub.add_parser("flops", help="FLOPs and KV-cache report")
    fl.add_argument("--tokens", type=int, required=True)
    fl.add_argument("--hidden", type=int, required=True)
    fl.add_argument("--ffn", type=int, required=True)
    fl.add_argument("--layers", type=int, required=True)
    fl.add_argument("--retain-fraction", type=float, default=1.0)
    fl.add_argument("--bytes-per-element", type=int, default=2)
    fl.add_argument("--mib", action="store_true", help="report binary MiB instead of MB")
    fl.set_defaults(func=cmd_flops)

    sy = sub.add_parser("synth", help="write a deterministic synthetic fixture")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--tokens", type=int, default=576)
    sy.add_argument("--dim", type=int, default=64)
    sy.add_argument("--heads", type=int, default=16)
    sy.add_argument("--text-len", type=int, default=8)
    sy.add_argument("--grid")
    sy.add_argument("--frames", type=int)
    sy.add_argument("--out-dir", required=True)
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
