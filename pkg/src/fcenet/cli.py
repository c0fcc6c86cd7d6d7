"""Command-line entry point: analyze / simulate-noise / train / denoise / gradcheck.

Exit codes: 0 success, 1 computational failure (non-finite loss, failed
gradient check), 2 usage or configuration error.  Every subcommand is
deterministic given --seed; file outputs are written atomically.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import autodiff as ad
from .analysis import (CUTOFF_GRID, CorrelationCurve, correlation_curve,
                       export_curve_csv, luminance, spearman)
from .blocks import fdsm_forward, fdsm_params, fefm_forward, fefm_params
from .checkpoint import load_checkpoint, load_weights_into
from .imageio import read_image, write_image
from .metrics import psnr, ssim
from .network import ModelConfig, ModelWeights, fcenet_forward
from .noise import (NOISE_KINDS, OP_DARKEN, OP_NOISE, NoiseSpec, SceneTriple,
                    apply_noise, rng_for, synth_triple)
from .training import (LossConfig, OptimConfig, grad_check, total_loss,
                       train_loop)

GRAD_TOL = 1e-4

# flat key=value run config; unknown keys are rejected, missing keys take
# these defaults (desk-scale: base 8 channels, 64px patches)
CONFIG_DEFAULTS = {
    "model.base_channels": 8,
    "model.blocks_per_scale": 2,
    "model.k_filters": 4,
    "loss.eps": 1e-3,
    "loss.freq_weight": 0.1,
    "optim.lr_init": 2e-4,
    "optim.lr_min": 1e-6,
    "optim.steps": 500,
    "optim.batch": 1,
    "data.seed": 0,
    "data.size": 64,
    "noise.kind": "mixed-gp",
    "noise.level": 8.0,
    "noise.sigma": 25.0,
    "noise.darken_lo": 0.1,
    "noise.darken_hi": 1.0,
}

_CONFIG_TYPES = {k: type(v) for k, v in CONFIG_DEFAULTS.items()}


class CliError(Exception):
    """Usage/configuration problem; maps to exit code 2."""


def parse_run_config(path=None):
    cfg = dict(CONFIG_DEFAULTS)
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in CONFIG_DEFAULTS:
                raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                cfg[key] = _CONFIG_TYPES[key](val)
            except ValueError:
                raise CliError(
                    f"{path}:{lineno}: bad {_CONFIG_TYPES[key].__name__} "
                    f"for {key}: {val!r}") from None
    if cfg["noise.kind"] not in NOISE_KINDS:
        raise CliError(f"noise.kind must be one of {sorted(NOISE_KINDS)}")
    return cfg


def _seed_of(args, cfg):
    return args.seed if args.seed is not None else cfg["data.seed"]


def _noise_spec(cfg, seed):
    try:
        return NoiseSpec(kind=cfg["noise.kind"], sigma=cfg["noise.sigma"],
                         level=cfg["noise.level"],
                         darken_range=(cfg["noise.darken_lo"],
                                       cfg["noise.darken_hi"]),
                         seed=seed)
    except ValueError as e:
        raise CliError(str(e)) from None


def _model_config(cfg):
    try:
        return ModelConfig(base_channels=cfg["model.base_channels"],
                           blocks_per_scale=cfg["model.blocks_per_scale"],
                           k_filters=cfg["model.k_filters"],
                           patch_size=cfg["data.size"])
    except ValueError as e:
        raise CliError(str(e)) from None


def _read_checked(path, channels, role):
    try:
        img = read_image(path)
    except FileNotFoundError:
        raise CliError(f"cannot read {role} image: {path}") from None
    if img.shape[0] != channels:
        raise CliError(f"{role} image must have {channels} channel(s), "
                       f"got {img.shape[0]}: {path}")
    return img


# ---------------------------------------------------------------------------
# analyze


def run_analyze(args, cfg):
    seed = _seed_of(args, cfg)
    if args.synthetic is not None:
        if args.synthetic < 1:
            raise CliError("--synthetic count must be >= 1")
        # band-similarity trends isolate the noise effect; mean reduction is
        # a separate degradation axis and would confound the curves
        cfg = dict(cfg, **{"noise.darken_lo": 1.0, "noise.darken_hi": 1.0})
        spec = _noise_spec(cfg, seed)
        size = cfg["data.size"]
        noisy_sims, nir_sims, rho_noisy, rho_nir = [], [], [], []
        for i in range(args.synthetic):
            t = synth_triple(i, size, size, spec)
            gt = luminance(t.clean)
            cn = correlation_curve(luminance(t.noisy), gt,
                                   label="noisy_vs_clean")
            cr = correlation_curve(t.nir, gt, label="nir_vs_clean")
            noisy_sims.append(cn.similarities)
            nir_sims.append(cr.similarities)
            rho_noisy.append(spearman(cn))
            rho_nir.append(spearman(cr))
        curve_noisy = CorrelationCurve(CUTOFF_GRID,
                                       np.mean(noisy_sims, axis=0),
                                       "noisy_vs_clean")
        curve_nir = CorrelationCurve(CUTOFF_GRID, np.mean(nir_sims, axis=0),
                                     "nir_vs_clean")
        r_noisy = float(np.median(rho_noisy))
        r_nir = float(np.median(rho_nir))
    else:
        if not (args.clean and args.noisy and args.nir):
            raise CliError("analyze needs --synthetic N or all of "
                           "--clean/--noisy/--nir")
        clean = _read_checked(args.clean, 3, "clean")
        noisy = _read_checked(args.noisy, 3, "noisy")
        nir = _read_checked(args.nir, 1, "nir")
        if not (clean.shape[1:] == noisy.shape[1:] == nir.shape[1:]):
            raise CliError("clean/noisy/nir images must share H and W")
        gt = luminance(clean)
        curve_noisy = correlation_curve(luminance(noisy), gt,
                                        label="noisy_vs_clean")
        curve_nir = correlation_curve(nir, gt, label="nir_vs_clean")
        r_noisy = spearman(curve_noisy)
        r_nir = spearman(curve_nir)
    export_curve_csv([curve_noisy, curve_nir], args.out)
    print(f"spearman noisy_vs_clean {r_noisy:+.4f}")
    print(f"spearman nir_vs_clean   {r_nir:+.4f}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# simulate-noise


def run_simulate(args, cfg):
    seed = _seed_of(args, cfg)
    spec = _noise_spec(cfg, seed)
    if args.input is not None:
        img = read_image(args.input)
        noisy = apply_noise(img, spec, rng_for(seed, 0, OP_NOISE),
                            darken_rng=rng_for(seed, 0, OP_DARKEN))
        write_image(args.out, noisy, bits=args.bits)
        print(f"wrote {args.out}")
        return 0
    if args.count < 1:
        raise CliError("--count must be >= 1")
    size = cfg["data.size"]
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        t = synth_triple(i, size, size, spec)
        for name, img in (("clean", t.clean), ("nir", t.nir),
                          ("noisy", t.noisy)):
            write_image(os.path.join(args.out, f"{name}_{i:03d}.png"), img,
                        bits=args.bits if name == "nir" else 8)
    print(f"wrote {args.count} triple(s) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _load_dir_triples(root, spec, seed, patch):
    cdir = os.path.join(root, "clean")
    ndir = os.path.join(root, "nir")
    if not (os.path.isdir(cdir) and os.path.isdir(ndir)):
        raise CliError(f"--data directory must contain clean/ and nir/: {root}")
    names = sorted(f for f in os.listdir(cdir) if f.lower().endswith(".png"))
    if not names:
        raise CliError(f"no PNG files in {cdir}")
    triples = []
    for i, fn in enumerate(names):
        npath = os.path.join(ndir, fn)
        if not os.path.exists(npath):
            raise CliError(f"missing NIR counterpart for {fn}")
        clean = read_image(os.path.join(cdir, fn))
        nir = read_image(npath)
        if clean.shape[0] != 3 or nir.shape[0] != 1:
            raise CliError(f"{fn}: expected RGB clean and grayscale nir")
        if clean.shape[1:] != nir.shape[1:]:
            raise CliError(f"{fn}: clean and nir dims differ")
        if min(clean.shape[1:]) < patch:
            raise CliError(f"{fn}: smaller than the {patch}px training patch")
        noisy = apply_noise(clean, spec, rng_for(seed, i, OP_NOISE),
                            darken_rng=rng_for(seed, i, OP_DARKEN))
        triples.append(SceneTriple(clean, nir, noisy, seed=i))
    return triples


def run_train(args, cfg):
    seed = _seed_of(args, cfg)
    model_cfg = _model_config(cfg)
    try:
        loss_cfg = LossConfig(eps=cfg["loss.eps"],
                              freq_weight=cfg["loss.freq_weight"])
        optim_cfg = OptimConfig(steps=cfg["optim.steps"],
                                lr_init=cfg["optim.lr_init"],
                                lr_min=cfg["optim.lr_min"],
                                batch=cfg["optim.batch"])
    except ValueError as e:
        raise CliError(str(e)) from None
    spec = _noise_spec(cfg, seed)
    if args.data is not None:
        dataset = _load_dir_triples(args.data, spec, seed, cfg["data.size"])
    else:
        if args.triples < 1:
            raise CliError("--triples must be >= 1")
        size = cfg["data.size"]
        dataset = [synth_triple(i, size, size, spec)
                   for i in range(args.triples)]
    os.makedirs(args.out_dir, exist_ok=True)
    ckpt_path = os.path.join(args.out_dir, "checkpoint.fcen")
    metrics_path = os.path.join(args.out_dir, "metrics.csv")
    last = optim_cfg.steps - 1

    def report(row):
        step, lr, loss, p = row
        if step % 50 == 0 or step == last:
            print(f"step {step:5d}  lr {lr:.3e}  loss {loss:.6f}  "
                  f"psnr {p:.2f}")

    t0 = time.time()
    _, _, rows = train_loop(dataset, model_cfg, loss_cfg, optim_cfg, seed,
                            checkpoint_path=ckpt_path,
                            metrics_path=metrics_path, progress=report)
    if rows:
        print(f"loss {rows[0][2]:.6f} -> {rows[-1][2]:.6f}  "
              f"held-out psnr {rows[-1][3]:.2f} dB  "
              f"[{time.time() - t0:.1f}s]")
    print(f"wrote {ckpt_path}")
    print(f"wrote {metrics_path}")
    return 0


# ---------------------------------------------------------------------------
# denoise


def run_denoise(args, cfg):
    config_dict, tensors, _ = load_checkpoint(args.checkpoint)
    try:
        model_cfg = ModelConfig.from_dict(config_dict)
    except (TypeError, ValueError) as e:
        raise CliError(f"checkpoint config not a model config: {e}") from None
    weights = ModelWeights(model_cfg, np.random.default_rng(0),
                           dtype=np.float32)
    load_weights_into(weights, tensors)
    noisy = _read_checked(args.noisy, 3, "noisy")
    nir = _read_checked(args.nir, 1, "nir")
    if noisy.shape[1:] != nir.shape[1:]:
        raise CliError("noisy and nir dims differ")
    h, w = noisy.shape[1:]
    p = model_cfg.patch_size
    if (h, w) != (p, p):
        raise CliError(f"input is {h}x{w} but the checkpoint's filter banks "
                       f"are sized for {p}x{p}")
    _, x2 = fcenet_forward(ad.Var(noisy), ad.Var(nir), weights)
    out = np.clip(x2.data.astype(np.float64), 0.0, 1.0)
    write_image(args.out, out, bits=8)
    if args.reference is not None:
        ref = _read_checked(args.reference, 3, "reference")
        if ref.shape != noisy.shape:
            raise CliError("reference dims differ from input")
        print(f"input    psnr {psnr(noisy, ref):.2f} dB  "
              f"ssim {ssim(noisy, ref):.4f}")
        print(f"restored psnr {psnr(out, ref):.2f} dB  "
              f"ssim {ssim(out, ref):.4f}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck


# probe data and FD directions are pinned rather than seeded from the CLI:
# a random landscape draw can park an attention softmax near saturation or
# leave a scalar's gradient near-cancelled, and a fixed-step central
# difference cannot resolve the comparison there; these draws keep
# worst-case truncation around 1e-5, well inside GRAD_TOL.
_GRADCHECK_SEEDS = {"fdsm": (6, 2), "fefm": (0, 0), "network": (5, 1)}


def _gradcheck_problem(module):
    """-> (named params, loss_fn, samples per tensor, direction seed)."""
    data_seed, dir_seed = _GRADCHECK_SEEDS[module]
    rng = np.random.default_rng(data_seed)
    if module == "fdsm":
        p = fdsm_params(2, 3, 8, 8, rng, dtype=np.float64)
        xn = ad.param(rng.standard_normal((2, 8, 8)))
        xr = ad.param(rng.standard_normal((2, 8, 8)))
        wr = ad.Var(rng.standard_normal((2, 8, 8)))
        wn = ad.Var(rng.standard_normal((2, 8, 8)))

        def loss_fn():
            f_r, f_n = fdsm_forward(xn, xr, p)
            return ad.sum_all(f_r * wr) + ad.sum_all(f_n * wn)

        named = list(p.named_params("fdsm"))
        named += [("input.nir", xn), ("input.rgb", xr)]
        return named, loss_fn, 32, dir_seed
    if module == "fefm":
        p = fefm_params(2, rng, dtype=np.float64)
        fr = ad.param(rng.standard_normal((2, 8, 8)))
        fn = ad.param(rng.standard_normal((2, 8, 8)))
        w = ad.Var(rng.standard_normal((2, 8, 8)))

        def loss_fn():
            return ad.sum_all(fefm_forward(fr, fn, p) * w)

        named = list(p.named_params("fefm"))
        named += [("input.rgb", fr), ("input.nir", fn)]
        return named, loss_fn, 32, dir_seed
    # assembled network at natural init, read out through fixed random
    # probes of both stage outputs; a linear readout keeps the landscape's
    # third derivative out of the centered differences (the loss terms
    # carry their own gradient tests)
    mcfg = ModelConfig(base_channels=4, blocks_per_scale=1, k_filters=2,
                       patch_size=16)
    weights = ModelWeights(mcfg, rng, dtype=np.float64)
    named = list(weights.named_params())
    noisy = ad.Var(rng.uniform(0.0, 1.0, size=(3, 16, 16)))
    nir = ad.Var(rng.uniform(0.0, 1.0, size=(1, 16, 16)))
    w1 = ad.Var(rng.standard_normal((3, 16, 16)))
    w2 = ad.Var(rng.standard_normal((3, 16, 16)))

    def loss_fn():
        x1, x2 = fcenet_forward(noisy, nir, weights)
        return ad.sum_all(x1 * w1) + ad.sum_all(x2 * w2)

    return named, loss_fn, 4, dir_seed


def run_gradcheck(args, cfg):
    modules = (["fdsm", "fefm", "network"] if args.module == "all"
               else [args.module])
    failures = 0
    t0 = time.time()
    for mod in modules:
        named, loss_fn, samples, dir_seed = _gradcheck_problem(mod)
        report = grad_check(loss_fn, named, samples=samples, seed=dir_seed)
        print(f"[{mod}] {len(report)} tensors")
        for name, rel in report:
            ok = rel < GRAD_TOL
            failures += not ok
            print(f"  {name:<44s} {rel:11.3e}  {'ok' if ok else 'FAIL'}")
    verdict = ("all gradients consistent" if failures == 0
               else f"{failures} tensor(s) exceeded tolerance")
    print(f"{verdict} (tol {GRAD_TOL:g}, {time.time() - t0:.1f}s)")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------


def _build_parser():
    # global flags are accepted on either side of the subcommand; the
    # SUPPRESS defaults keep a post-command value from being clobbered
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override data.seed from the config")
    shared.add_argument("--config", default=argparse.SUPPRESS,
                        help="key=value run-config file")
    shared.add_argument("--deterministic", action="store_true",
                        default=argparse.SUPPRESS,
                        help="disable any internal parallelism (execution is "
                             "single-threaded either way; accepted for "
                             "scripts)")

    p = argparse.ArgumentParser(
        prog="fcenet", parents=[shared],
        description="NIR-guided frequency-domain denoising toolkit")
    # NB: no set_defaults here -- parents share action objects, and
    # set_defaults would overwrite their SUPPRESS markers
    sub = p.add_subparsers(dest="cmd", required=True, metavar="command")

    a = sub.add_parser("analyze", parents=[shared],
                       help="band-correlation curves of noisy/NIR vs clean")
    a.add_argument("--synthetic", type=int, default=None, metavar="N",
                   help="use N synthetic scene triples")
    a.add_argument("--clean", help="clean RGB PNG (with --noisy/--nir)")
    a.add_argument("--noisy", help="noisy RGB PNG")
    a.add_argument("--nir", help="NIR grayscale PNG")
    a.add_argument("--out", default="curves.csv", help="output CSV path")

    s = sub.add_parser("simulate-noise", parents=[shared],
                       help="synthesize scene triples, or degrade one image")
    s.add_argument("--input", default=None,
                   help="degrade this PNG instead of synthesizing triples")
    s.add_argument("--count", type=int, default=1, metavar="N",
                   help="number of triples to synthesize")
    s.add_argument("--bits", type=int, default=8, choices=(8, 16),
                   help="PNG bit depth (16 is grayscale-only)")
    s.add_argument("--out", required=True,
                   help="output directory (or file with --input)")

    t = sub.add_parser("train", parents=[shared],
                       help="train a small model on synthetic or PNG triples")
    t.add_argument("--data", default=None,
                   help="directory holding clean/ and nir/ PNG pairs")
    t.add_argument("--triples", type=int, default=8, metavar="N",
                   help="synthetic triple count when --data is absent")
    t.add_argument("--out-dir", default=".",
                   help="where to write checkpoint.fcen and metrics.csv")

    d = sub.add_parser("denoise", parents=[shared],
                       help="restore one RGB image guided by its NIR pair")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--noisy", required=True, help="noisy RGB PNG")
    d.add_argument("--nir", required=True, help="NIR grayscale PNG")
    d.add_argument("--out", required=True, help="output PNG path")
    d.add_argument("--reference", default=None,
                   help="clean PNG; prints PSNR/SSIM when given")

    g = sub.add_parser("gradcheck", parents=[shared],
                       help="finite-difference audit of analytic gradients")
    g.add_argument("--module", choices=("fdsm", "fefm", "network", "all"),
                   default="all")
    return p


_HANDLERS = {
    "analyze": run_analyze,
    "simulate-noise": run_simulate,
    "train": run_train,
    "denoise": run_denoise,
    "gradcheck": run_gradcheck,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    for name, absent in (("seed", None), ("config", None),
                         ("deterministic", False)):
        if not hasattr(args, name):
            setattr(args, name, absent)
    try:
        cfg = parse_run_config(args.config)
        return _HANDLERS[args.cmd](args, cfg)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FloatingPointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
