"""Loss, optimizer, schedule, gradient checker, and the training loop.

Loss (per output pair X1, X2 against target T):
  charbonnier(X1,T) + charbonnier(X2,T) + w_f · charbonnier(DFT(X2), DFT(T))
with the spectral term applied to re/im planes independently and averaged;
spectra are scaled by 1/sqrt(H·W) so the term is resolution-independent.

Optimizer: bias-corrected Adam under cosine-annealed lr, with a global-norm
gradient clip (1.0) applied by the loop, not by adam_step — adam_step is the
textbook update so it can be checked against scalar oracles.
"""

import numpy as np

from . import autodiff as ad
from . import spectral
from .checkpoint import _atomic_write, save_checkpoint
from .metrics import psnr
from .network import ModelWeights, fcenet_forward
from .noise import OP_TRAIN, rng_for

CLIP_NORM = 1.0


class LossConfig:
    def __init__(self, eps=1e-3, freq_weight=0.1):
        if eps <= 0:
            raise ValueError("charbonnier eps must be positive")
        if freq_weight < 0:
            raise ValueError("freq_weight must be >= 0")
        self.eps = float(eps)
        self.freq_weight = float(freq_weight)


class OptimConfig:
    def __init__(self, steps=500, lr_init=2e-4, lr_min=1e-6, batch=1,
                 beta1=0.9, beta2=0.999, adam_eps=1e-8):
        if steps < 0 or batch < 1:
            raise ValueError("steps must be >= 0, batch >= 1")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if lr_init <= 0 or lr_min <= 0 or lr_min > lr_init:
            raise ValueError("need 0 < lr_min <= lr_init")
        self.steps = int(steps)
        self.lr_init = float(lr_init)
        self.lr_min = float(lr_min)
        self.batch = int(batch)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.adam_eps = float(adam_eps)


def charbonnier(x, t, eps=1e-3):
    """mean sqrt((x-t)^2 + eps^2); x may be a Var, t a plain array."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = ad.as_var(x)
    t = t.data if isinstance(t, ad.Var) else np.asarray(t)
    if x.data.shape != t.shape:
        raise ValueError(f"shape mismatch {x.data.shape} vs {t.shape}")
    d = x - t
    return ad.mean_all(ad.sqrt(d * d + eps * eps))


def frequency_loss(x, t, eps=1e-3):
    """Charbonnier distance between spectra, re/im averaged."""
    x = ad.as_var(x)
    t = t.data if isinstance(t, ad.Var) else np.asarray(t)
    if x.data.shape != t.shape:
        raise ValueError(f"shape mismatch {x.data.shape} vs {t.shape}")
    h, w = t.shape[-2], t.shape[-1]
    s = float(1.0 / np.sqrt(h * w))
    zr, zi = spectral.dft_pair(x)
    zt = spectral.dft2d(t)
    return (charbonnier(zr * s, zt.real * s, eps)
            + charbonnier(zi * s, zt.imag * s, eps)) * 0.5


def total_loss(x1, x2, t, cfg):
    spatial = charbonnier(x1, t, cfg.eps) + charbonnier(x2, t, cfg.eps)
    if cfg.freq_weight == 0.0:
        return spatial
    return spatial + frequency_loss(x2, t, cfg.eps) * cfg.freq_weight


class OptimState:
    def __init__(self, params, cfg):
        self.step = 0
        self.lr_init = cfg.lr_init
        self.lr_min = cfg.lr_min
        self.total_steps = cfg.steps
        self.beta1 = cfg.beta1
        self.beta2 = cfg.beta2
        self.adam_eps = cfg.adam_eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def cosine_lr(step, state):
    if step > state.total_steps:
        raise ValueError(f"step {step} beyond schedule ({state.total_steps})")
    if state.total_steps == 0:
        return state.lr_init
    cos = np.cos(np.pi * step / state.total_steps)
    return state.lr_min + 0.5 * (state.lr_init - state.lr_min) * (1.0 + cos)


def adam_step(params, grads, state, lr):
    """Standard bias-corrected Adam (no clipping here; see train_loop)."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ValueError("gradient shape mismatch")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient encountered")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.adam_eps)


def clip_global_norm(grads, max_norm=CLIP_NORM):
    """-> (clipped grads, pre-clip norm)."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm and total > 0:
        scale = max_norm / total
        grads = [g * scale for g in grads]
    return grads, total


def grad_check(loss_fn, named_params, fd_step=1e-5, samples=32, seed=0):
    """Compare tape gradients of loss_fn() against central differences.

    Each probe perturbs a whole tensor along a random unit direction and
    compares grad.d with the centered difference, so every coordinate
    takes part in every comparison; single-coordinate probes at a fixed
    step cannot resolve entries whose gradient nearly cancels.  Returns
    [(name, max relative error)] over `samples` directions per tensor;
    denominator max(|a|,|b|,1e-8).
    """
    named_params = list(named_params)
    ad.zero_grads([p for _, p in named_params])
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise FloatingPointError("non-finite loss in grad_check")
    ad.backward(loss)
    rng = np.random.default_rng(seed)
    report = []
    for name, p in named_params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        base = p.data.copy()
        worst = 0.0
        for _ in range(samples):
            d = rng.standard_normal(p.data.shape)
            d = d / np.sqrt((d * d).sum())
            a = float((g * d).sum())
            p.data = base + fd_step * d
            fp = float(loss_fn().data)
            p.data = base - fd_step * d
            fm = float(loss_fn().data)
            p.data = base
            num = (fp - fm) / (2.0 * fd_step)
            rel = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, rel)
        report.append((name, worst))
    return report


def _crop(arr, y0, x0, size):
    return arr[:, y0:y0 + size, x0:x0 + size]


def write_metrics_csv(rows, path):
    lines = ["step,lr,loss,psnr"]
    for step, lr, loss, p in rows:
        lines.append(f"{step},{lr:.6f},{loss:.6f},{p:.6f}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def train_loop(dataset, config, loss_cfg, optim_cfg, seed,
               checkpoint_path=None, metrics_path=None, progress=None):
    """Overfit-style trainer at desk scale.

    Trains on dataset[:-1] (all of it if only one triple), holding out the
    last triple for the logged PSNR.  Returns (weights, state, rows); writes
    the metric CSV and final checkpoint when paths are given.  A non-finite
    loss aborts with FloatingPointError after dumping the last good state.
    """
    if not dataset:
        raise ValueError("empty dataset")
    rng = rng_for(seed, 0, OP_TRAIN)
    weights = ModelWeights(config, rng, dtype=np.float32)
    named = list(weights.named_params())
    params = [v for _, v in named]
    state = OptimState(params, optim_cfg)
    train_set = dataset[:-1] if len(dataset) > 1 else dataset
    held_out = dataset[-1]
    patch = config.patch_size
    rows = []
    pool = []

    def save_all():
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, config.to_dict(),
                            [(n, v.data) for n, v in named], optim=state)
        if metrics_path is not None:
            write_metrics_csv(rows, metrics_path)

    def eval_psnr():
        noisy = ad.Var(held_out.noisy[:, :patch, :patch])
        nir = ad.Var(held_out.nir[:, :patch, :patch])
        _, x2 = fcenet_forward(noisy, nir, weights)
        return psnr(np.clip(x2.data, 0.0, 1.0), held_out.clean[:, :patch, :patch])

    for step in range(optim_cfg.steps):
        lr = cosine_lr(step, state)
        ad.zero_grads(params)
        batch_loss = 0.0
        for _ in range(optim_cfg.batch):
            if not pool:
                pool = list(rng.permutation(len(train_set)))
            triple = train_set[pool.pop()]
            _, hh, ww = triple.clean.shape
            y0 = int(rng.integers(0, hh - patch + 1)) if hh > patch else 0
            x0 = int(rng.integers(0, ww - patch + 1)) if ww > patch else 0
            noisy = ad.Var(_crop(triple.noisy, y0, x0, patch))
            nir = ad.Var(_crop(triple.nir, y0, x0, patch))
            target = _crop(triple.clean, y0, x0, patch)
            x1, x2 = fcenet_forward(noisy, nir, weights)
            loss = total_loss(x1, x2, target, loss_cfg) * (1.0 / optim_cfg.batch)
            if not np.isfinite(loss.data):
                save_all()
                raise FloatingPointError(f"non-finite loss at step {step}")
            ad.backward(loss)
            batch_loss += float(loss.data)
        grads, _ = clip_global_norm([p.grad for p in params])
        adam_step(params, grads, state, lr)
        rows.append((step, lr, batch_loss, eval_psnr()))
        if progress is not None:
            progress(rows[-1])
    save_all()
    return weights, state, rows
