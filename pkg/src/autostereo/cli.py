"""Command-line entry point: ``autostereo <command> [options]``.

Every option can also come from a ``key = value`` file passed with
``--config``; flags given on the command line win.  The fully resolved
configuration is written next to the outputs so a run can be replayed with
``--config``.  Exit status: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("autostereo")

IMAGE_COMMANDS = {"encode", "decode-classic", "decode-neural", "neuralgram",
                  ("watermark", "embed"), ("watermark", "decode"), ("gen", "depth")}


class UsageError(Exception):
    """Bad command-line input; the message says how to fix it."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# value parsers (raise UsageError with a remedy)
# --------------------------------------------------------------------------

def _pair(text, sep, flag, example):
    try:
        a, b = str(text).lower().split(sep)
        return int(a), int(b)
    except ValueError:
        raise UsageError(f"{flag}: expected {example}, got {text!r}") from None


def parse_window(text):
    return _pair(text, "x", "--window", "HxW such as 3x17")


def parse_range(text):
    if text in (None, "auto"):
        return None
    return _pair(text, ":", "--range", "LO:HI such as 16:36, or 'auto'")


def parse_size(text):
    return _pair(text, "x", "--size", "HxW such as 64x64")


def parse_period(text):
    if text in (None, "auto"):
        return None
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"--period: expected 'auto' or an integer, got {text!r}") from None


def parse_smoothing(text):
    from .classic import MatchConfig
    from .errors import SearchRangeInvalid
    try:
        MatchConfig(smoothing=text)
    except SearchRangeInvalid:
        raise UsageError(f"--smooth: expected 'none' or 'median:K' such as median:5, got {text!r}") from None
    return text


def parse_conditions(text):
    from .imgcore import DegradeSpec
    out = []
    for c in str(text).split(","):
        c = c.strip()
        if not c:
            continue
        if c != "clean":
            try:
                DegradeSpec.parse(c)
            except Exception:
                raise UsageError(f"--conditions: unknown condition {c!r}; use clean, blur:S, jpeg:Q, "
                                 "gain:G or noise:S") from None
        out.append(c)
    return out


# --------------------------------------------------------------------------
# config files
# --------------------------------------------------------------------------

def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"--config {path}:{n}: expected 'key = value', got {line!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        values[k.replace("-", "_")] = v
    return values


def _coerce(action, raw):
    if isinstance(action, argparse.BooleanOptionalAction):
        return str(raw).lower() in ("1", "true", "yes", "on")
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        truthy = str(raw).lower() in ("1", "true", "yes", "on")
        return truthy if isinstance(action, argparse._StoreTrueAction) else not truthy
    if raw == "None":
        return None
    if action.type is not None:
        try:
            return action.type(raw)
        except (TypeError, ValueError):
            raise UsageError(f"config key {action.dest}: bad value {raw!r}") from None
    return raw


def format_config(ns, argv):
    skip = {"config", "func"}
    lines = ["# autostereo " + __version__, "# argv: " + " ".join(argv)]
    for k in sorted(vars(ns)):
        if k in skip:
            continue
        v = getattr(ns, k)
        if isinstance(v, (list, tuple)):
            v = ",".join(map(str, v))
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def config_hash(ns):
    d = {k: str(v) for k, v in sorted(vars(ns).items()) if k not in ("config", "func")}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


# --------------------------------------------------------------------------
# command implementations
# --------------------------------------------------------------------------

def _geometry(args, width):
    from .stereogram import StereoGeometry
    stripe = args.stripe if getattr(args, "stripe", None) else max(2, width // 8)
    return StereoGeometry(beta=args.beta, stripe_width=stripe)


def _out_file(args, what="--out"):
    if not args.out:
        raise UsageError(f"{what}: an output path is required, e.g. --out result.png")
    return Path(args.out)


def cmd_encode(args):
    from .imgcore import GrayImage, load_image, save_image
    from .stereogram import EncodeOptions, RandomDotTexture, encode
    if not args.depth:
        raise UsageError("encode: --depth PNG is required")
    out = _out_file(args)
    depth = load_image(args.depth).data
    if args.invert_depth:
        depth = 1.0 - depth
    g = _geometry(args, depth.shape[1])
    tex_arg = args.texture or f"random:{args.seed}"
    if tex_arg.startswith("random:"):
        try:
            tseed = int(tex_arg.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"--texture: expected random:SEED or a PNG path, got {tex_arg!r}") from None
        tex = RandomDotTexture(tseed).render(depth.shape[0], g.stripe_width)
    else:
        tex = load_image(tex_arg)
    img = encode(GrayImage(depth), EncodeOptions(geometry=g, texture=tex, rounding=args.rounding))
    save_image(img, out)
    log.info("wrote %s (stripe %d, beta %.3f)", out, g.stripe_width, g.beta)
    return [out]


def cmd_decode_classic(args):
    from .classic import decode_auto
    from .imgcore import load_image, save_image
    if not args.inp:
        raise UsageError("decode-classic: --in PNG is required")
    out = _out_file(args)
    window, smoothing = parse_window(args.window), parse_smoothing(args.smooth)
    period, search = parse_period(args.period), parse_range(args.range)
    img = load_image(args.inp)
    depth = decode_auto(img, beta=args.beta, window=window, smoothing=smoothing, period=period, search=search)
    if args.invert_depth:
        depth = 1.0 - depth.data
    save_image(depth, out)
    return [out]


def _load_checkpoint(args):
    from .neural.training import load_model
    if not args.checkpoint:
        raise UsageError(f"{args.command}: --checkpoint FILE is required")
    return load_model(args.checkpoint)


def _fit_input(model, img):
    from .imgcore import resize
    n = model.cfg.input_size
    if img.shape != (n, n):
        log.info("resizing input %dx%d to %dx%d", img.shape[0], img.shape[1], n, n)
        img = resize(img, n, n, "bilinear")
    return img


def cmd_decode_neural(args):
    from .imgcore import load_image, save_image
    from .neural.evaluate import decode
    if not args.inp:
        raise UsageError(f"{args.command}: --in PNG is required")
    out = _out_file(args)
    model, _ = _load_checkpoint(args)
    img = _fit_input(model, load_image(args.inp))
    save_image(decode(model, img), out)
    outputs = [out]
    if args.raw:
        np.save(args.raw, decode(model, img, raw=True))
        outputs.append(Path(args.raw))
    return outputs


def _model_config(args, head):
    from .neural.models import ModelConfig
    return ModelConfig(backbone=args.backbone, input_size=args.input_size,
                       use_disparity_conv=not args.no_disparity_conv, norm=args.norm,
                       feature_fusion=args.feature_fusion, m=args.m, head=head,
                       num_classes=args.num_classes, base_channels=args.base_channels)


def _train_config(args, loss):
    from .neural.training import TrainConfig
    drop = args.lr_drop_step if args.lr_drop_step is not None else args.steps // 2
    return TrainConfig(lr=args.lr, batch_size=args.batch_size, steps=args.steps,
                       lr_drop_step=drop if drop >= 0 else None, seed=args.seed, loss=loss,
                       checkpoint_every=args.checkpoint_every)


def _dataset_config(args):
    from . import datagen
    aug = datagen.AugConfig.training() if args.augment else datagen.AugConfig()
    n = args.input_size
    return datagen.DatasetConfig(scene=datagen.SceneSpec(args.scene, size=(n, n), pose=_poses(args.scene)),
                                 aug=aug, texture=datagen.TextureSpec(args.texture_kind))


def _poses(kind):
    from . import datagen
    return datagen.GLYPH_POSES if kind == "glyph" else datagen.SHAPE_POSES


def _train_arrays(args):
    from . import datagen
    cfg = _dataset_config(args)
    if args.mnist:
        imgs, labels = args.mnist.split(",") if "," in args.mnist else (args.mnist, None)
        pairs = datagen.idx_depth_pairs(imgs, labels, (args.input_size, args.input_size))[:args.train_count]
        g = cfg.resolved_geometry()
        samples = [datagen.external_sample(d, g, datagen.derive_seed(args.seed, k), lab)
                   for k, (d, lab) in enumerate(pairs)]
        return datagen.stack_pairs(samples)
    stream, idx = datagen.split_take(cfg, args.seed, "train", args.train_count)
    return datagen.stack_pairs(stream.items(idx))


def cmd_train(args):
    from .neural import build_model, load_model, train_classifier, train_decoder, train_watermark
    args.out = args.out or "run"
    out = Path(args.out)
    x, y, labels = _train_arrays(args)
    task = args.task
    if task == "watermark":
        if args.init:
            model, _ = load_model(args.init)
        else:
            model = build_model(_model_config(args, "pixel_regression"), args.seed)
        res = train_watermark(model, (x, y), _train_config(args, "l2"), out, "model", progress=args.log_every)
    elif task == "classifier":
        head = f"categories({args.num_classes})"
        model = build_model(_model_config(args, head), args.seed)
        res = train_classifier(model, (x, y, labels), _train_config(args, "ce"), out, "model",
                               progress=args.log_every)
    else:
        model = build_model(_model_config(args, "pixel_regression"), args.seed)
        res = train_decoder(model, (x, y), _train_config(args, "l2"), out, "model", progress=args.log_every)
    log.info("trained %s for %d steps in %.1fs; final loss %.5f", model.cfg.name, len(res.losses),
             res.seconds, res.losses[-1][1] if res.losses else float("nan"))
    print(f"checkpoint: {res.checkpoint}")
    return [res.checkpoint, out / "model_loss.csv"]


def _test_arrays(args, cfg=None):
    from . import datagen
    cfg = cfg or _dataset_config(args)
    stream, idx = datagen.split_take(cfg, args.seed, "test", args.count, clean=True)
    return datagen.stack_pairs(stream.items(idx))


def cmd_eval(args):
    from .neural.evaluate import accuracy, evaluate
    args.out = args.out or "eval"
    out = Path(args.out)
    model, _ = _load_checkpoint(args)
    args.input_size = model.cfg.input_size
    x, y, labels = _test_arrays(args)
    if model.cfg.head == "categories":
        acc = accuracy(model, x, labels)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.csv").write_text(f"condition,accuracy,n\nclean,{acc:.4f},{len(x)}\n")
        print(f"accuracy {acc:.4f} on {len(x)} test images")
        return [out / "eval.csv"]
    report = evaluate(model, x, y, parse_conditions(args.conditions), not args.no_classic, args.seed)
    report.write(out)
    sys.stdout.write(report.to_text())
    return [out / "eval.csv", out / "eval.txt"]


def cmd_watermark(args):
    from .imgcore import load_image, save_image
    from .stereogram import watermark_embed
    if args.action == "embed":
        if not args.stereo or not args.carrier:
            raise UsageError("watermark embed: --stereo PNG and --carrier PNG are required")
        out = _out_file(args)
        save_image(watermark_embed(load_image(args.stereo), load_image(args.carrier), args.alpha), out)
        return [out]
    return cmd_decode_neural(args)


def _target_depth(args, size):
    from . import datagen
    from .imgcore import load_image, resize
    t = args.target or "glyph:7"
    if t.startswith("glyph:"):
        try:
            cat = int(t.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"--target: expected glyph:N or a PNG path, got {t!r}") from None
        return datagen.gen_depth(datagen.SceneSpec("glyph", size=(size, size), category=cat), args.seed)
    img = load_image(t)
    return img if img.shape == (size, size) else resize(img, size, size, "bilinear")


def cmd_neuralgram(args):
    from .imgcore import save_image
    from .neural.applications import self_decode_psnr, synthesize_neural_autostereogram
    out = _out_file(args)
    model, _ = _load_checkpoint(args)
    target = _target_depth(args, model.cfg.input_size)
    res = synthesize_neural_autostereogram(model, target, steps=args.steps, lr=args.lr,
                                           tv_weight=args.tv_weight, init=args.init, seed=args.seed)
    save_image(res.image, out)
    p = self_decode_psnr(model, res.image, target)
    print(f"loss {res.initial_loss:.6f} -> {res.final_loss:.6f} ({res.reduction:.1f}x); "
          f"self-decode PSNR {p:.2f} dB")
    return [out]


def cmd_retrieve(args):
    from . import datagen
    from .imgcore import load_image
    from .neural.applications import precision_at_k, retrieve
    model, _ = _load_checkpoint(args)
    n = model.cfg.input_size
    if args.db:
        rows = datagen.load_manifest(args.db)
        db = np.stack([_fit_input(model, im).data for im, _ in rows])
        labels = [lab for _, lab in rows]
    else:
        args.input_size, args.scene = n, "glyph"
        db, _, labels = _test_arrays(args)
    if args.category is None and not args.query:
        raise UsageError("retrieve: give --category N or --query PNG")
    query = args.category if args.category is not None else _fit_input(model, load_image(args.query))
    hits = retrieve(model, db, query, args.k)
    lines = ["rank,index,label,score"]
    for r, h in enumerate(hits, 1):
        lines.append(f"{r},{h.index},{'' if labels[h.index] is None else labels[h.index]},{h.score:.6f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.category is not None and len(labels) and labels[0] is not None:
        print(f"precision@{len(hits)}: {precision_at_k(hits, labels, args.category):.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "retrieval.csv").write_text(text)
        return [out / "retrieval.csv"]
    return []


def cmd_gradcheck(args):
    from .gradcheck import CASES, run_suite
    dtype = np.float64 if args.precision == "double" else np.float32
    names = [n.strip() for n in args.ops.split(",")] if args.ops else None
    unknown = [n for n in names or [] if n not in CASES]
    if unknown:
        raise UsageError(f"--ops: unknown op(s) {unknown}; choose from {', '.join(CASES)}")
    results = run_suite(args.instances, args.seed, dtype, names)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<26} max rel err {r.max_rel_error:.2e}")
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} ops passed ({args.precision} precision)")
    return 0 if ok else 2


def cmd_gen(args):
    from . import datagen
    from .imgcore import save_image
    h, w = parse_size(args.size)
    spec = datagen.SceneSpec(args.kind, size=(h, w), pose=datagen.PoseRange() if args.identity
                             else _poses(args.kind), category=args.category)
    if args.action == "depth":
        out = _out_file(args)
        save_image(datagen.gen_depth(spec, args.seed), out)
        return [out]
    args.out = args.out or "dataset"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    aug = datagen.AugConfig.training() if args.augment else datagen.AugConfig()
    cfg = datagen.DatasetConfig(scene=spec, aug=aug, texture=datagen.TextureSpec(args.texture_kind))
    stream = datagen.dataset_stream(args.count, cfg, args.seed)
    rows = ["path,label,split,depth"]
    for k in range(len(stream)):
        p = stream[k]
        save_image(p.stereogram, out / f"{k:05d}_stereo.png")
        save_image(p.depth, out / f"{k:05d}_depth.png")
        split = "test" if stream.is_test(k) else "train"
        rows.append(f"{k:05d}_stereo.png,{'' if p.label is None else p.label},{split},{k:05d}_depth.png")
    (out / "manifest.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {len(stream)} pairs to {out}")
    return [out / "manifest.csv"]


def cmd_version(args):
    print(f"autostereo {__version__} config {config_hash(args)}")
    return None


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    p.add_argument("--out", default=None, help="output file (image commands) or directory")
    p.add_argument("--config", default=None, help="key = value file supplying defaults")
    p.add_argument("-v", "--verbose", action="store_true")


def _geometry_args(p):
    p.add_argument("--beta", type=float, default=0.5, help="geometry constant beta in (0,1)")
    p.add_argument("--stripe", type=int, default=None, help="far-plane stripe width (default width/8)")
    p.add_argument("--invert-depth", action="store_true", help="treat white as near instead of far")


def _model_args(p):
    p.add_argument("--backbone", choices=["unet_tiny", "resnet_lite"], default="unet_tiny")
    p.add_argument("--norm", choices=["none", "batch", "instance"], default="batch")
    p.add_argument("--no-disparity-conv", action="store_true")
    p.add_argument("--feature-fusion", action="store_true")
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--m", type=int, default=None, help="max shift (default input_size/4)")
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--base-channels", type=int, default=16)


def _data_args(p):
    p.add_argument("--scene", choices=["glyph", "composite", "ellipsoid", "polygon", "ramp"], default="glyph")
    p.add_argument("--texture-kind", choices=["mixed", "random_dot", "value_noise"], default="mixed")
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=True)


def build_parser():
    root = _Parser(prog="autostereo", description="autostereogram encoding and decoding toolkit")
    root.add_argument("--version", action="version", version=f"autostereo {__version__}")
    sub = root.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("encode", help="depth map -> autostereogram")
    _common(p)
    _geometry_args(p)
    p.add_argument("--depth", help="depth PNG (white = far)")
    p.add_argument("--texture", default=None, help="texture PNG or random:SEED")
    p.add_argument("--rounding", choices=["half_even", "floor"], default="half_even")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode-classic", help="window-matching decoder")
    _common(p)
    p.add_argument("--in", dest="inp", help="stereogram PNG")
    p.add_argument("--period", default="auto", help="'auto' or the stripe width in pixels")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--window", default="3x17", help="matching window HxW")
    p.add_argument("--range", default="auto", help="shift search range LO:HI or 'auto'")
    p.add_argument("--smooth", default="median:5", help="'none' or 'median:K'")
    p.add_argument("--invert-depth", action="store_true")
    p.set_defaults(func=cmd_decode_classic)

    p = sub.add_parser("decode-neural", help="decode with a trained network")
    _common(p)
    p.add_argument("--in", dest="inp", help="stereogram PNG")
    p.add_argument("--checkpoint", help="model checkpoint")
    p.add_argument("--raw", default=None, help="also save the raw output as .npy")
    p.set_defaults(func=cmd_decode_neural)

    p = sub.add_parser("train", help="train a decoder, classifier or watermark decoder")
    _common(p)
    p.add_argument("task", choices=["decoder", "classifier", "watermark"])
    _model_args(p)
    _data_args(p)
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--lr-drop-step", type=int, default=None, help="default steps/2; negative disables")
    p.add_argument("--train-count", type=int, default=2000)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--init", default=None, help="checkpoint to fine-tune (watermark)")
    p.add_argument("--mnist", default=None, help="IDX images[,labels] to use instead of glyph scenes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM table on a fixed test stream")
    _common(p)
    _data_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--conditions", default="clean,blur:1,jpeg:20,gain:1.5")
    p.add_argument("--no-classic", action="store_true", help="skip the window-matching baseline row")
    p.set_defaults(func=cmd_eval, augment=False)

    p = sub.add_parser("watermark", help="embed a stereogram in a carrier, or decode one")
    _common(p)
    p.add_argument("action", choices=["embed", "decode"])
    p.add_argument("--stereo")
    p.add_argument("--carrier")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--in", dest="inp")
    p.add_argument("--checkpoint")
    p.add_argument("--raw", default=None)
    p.set_defaults(func=cmd_watermark)

    p = sub.add_parser("neuralgram", help="optimize an input image for a frozen decoder")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--target", default="glyph:7", help="depth PNG or glyph:N")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--tv-weight", type=float, default=0.0)
    p.add_argument("--init", choices=["noise", "texture"], default="noise")
    p.set_defaults(func=cmd_neuralgram)

    p = sub.add_parser("retrieve", help="rank a stereogram set by category or query image")
    _common(p)
    _data_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--db", default=None, help="directory with manifest.csv (default: toy test set)")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--category", type=int, default=None)
    p.add_argument("--query", default=None)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_retrieve, augment=False)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    _common(p)
    p.add_argument("--precision", choices=["double", "single"], default="double")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--ops", default=None, help="comma-separated subset")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen", help="procedural depth maps or datasets")
    _common(p)
    p.add_argument("action", choices=["depth", "dataset"])
    p.add_argument("--kind", choices=["glyph", "composite", "ellipsoid", "polygon", "ramp"], default="glyph")
    p.add_argument("--category", type=int, default=None)
    p.add_argument("--size", default="64x64")
    p.add_argument("--identity", action="store_true", help="no random pose")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--texture-kind", choices=["mixed", "random_dot", "value_noise"], default="mixed")
    p.add_argument("--augment", action="store_true")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("version", help="print version and config hash")
    _common(p)
    p.set_defaults(func=cmd_version)
    return root


def _subparser(root, name):
    for action in root._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv):
    root = build_parser()
    ns = root.parse_args(argv)
    if not ns.command:
        raise UsageError("autostereo: a command is required (try 'autostereo --help')")
    if ns.config:
        sp = _subparser(root, ns.command)
        explicit = _explicit_dests(sp, argv[argv.index(ns.command) + 1:])
        by_dest = {a.dest: a for a in sp._actions}
        for key, raw in read_config(ns.config).items():
            if key in ("command", "func", "config"):
                continue
            if key not in by_dest:
                raise UsageError(f"--config: unknown key {key!r} for {ns.command}")
            if key not in explicit:
                setattr(ns, key, _coerce(by_dest[key], raw))
    return ns


def _explicit_dests(parser, argv):
    """Destinations set on the command line itself (parse with defaults suppressed)."""
    saved = [(a, a.default) for a in parser._actions]
    saved_defaults = dict(parser._defaults)
    try:
        for a in parser._actions:
            a.default = argparse.SUPPRESS
        parser._defaults.clear()
        ns = parser.parse_args(argv)
    finally:
        for a, d in saved:
            a.default = d
        parser._defaults.update(saved_defaults)
    return set(vars(ns))


def _config_path(ns):
    key = ns.command if not hasattr(ns, "action") and not hasattr(ns, "task") else \
        (ns.command, getattr(ns, "action", getattr(ns, "task", None)))
    if ns.out is None:
        return None
    out = Path(ns.out)
    if key in IMAGE_COMMANDS:
        return out.with_name(out.name + ".config.txt")
    return out / "config.txt"


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    from .errors import AutostereoError
    try:
        status = ns.func(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AutostereoError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    cfg_path = _config_path(ns)
    if cfg_path is not None and ns.command != "version":
        cfg_path.parent.mkdir(parents=True, exist_ok=True)
        cfg_path.write_text(format_config(ns, argv))
    return status if isinstance(status, int) else 0


if __name__ == "__main__":
    sys.exit(main())
