"""Degradation protocols and seeded synthetic scene triples.

Noise models: signal-dependent Poisson shot noise mixed with Gaussian read
noise (level 1..16), or plain additive Gaussian in 8-bit units.  Synthetic
triples pair a piecewise-smooth RGB scene with a grayscale guide that shares
its sharp structure (edges, fine texture) while low-frequency content —
region intensities and illumination — is independently remapped.

All randomness flows through counter-based Philox streams keyed by
(base seed, image id, op id): generation order never matters.
"""

import numpy as np

from . import spectral

NOISE_KINDS = ("mixed-gp", "gaussian")

# op ids for the keyed RNG streams
OP_SCENE = 0
OP_NIR = 1
OP_DARKEN = 2
OP_NOISE = 3
OP_TRAIN = 4

# mixed-gp protocol constants: level l -> shot scale 3000/l photons per unit
# intensity, read sigma l/255.  Both degrade monotonically with l.
SHOT_PHOTONS = 3000.0

# scene amplitude constants (tuned so the band-similarity trends of the
# analysis module hold with wide margins; see tests)
_TEXTURE_AMP = 0.08
_SMOOTH_AMP_RGB = 0.05
_SMOOTH_AMP_NIR = 0.12
_REGION_LEVELS = 5


def rng_for(seed, image_id, op_id):
    """Independent deterministic stream for one (image, operation) pair."""
    ss = np.random.SeedSequence((int(seed), int(image_id), int(op_id)))
    return np.random.Generator(np.random.Philox(ss))


class NoiseSpec:
    def __init__(self, kind="mixed-gp", sigma=25.0, level=8.0,
                 darken_range=(1.0, 1.0), seed=0):
        if kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {kind!r}")
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 1.0 <= level <= 16.0:
            raise ValueError("level must lie in [1, 16]")
        lo, hi = darken_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("darken range must satisfy 0 < lo <= hi <= 1")
        self.kind = kind
        self.sigma = float(sigma)
        self.level = float(level)
        self.darken_range = (float(lo), float(hi))
        self.seed = int(seed)

    @property
    def darken(self):
        return self.darken_range != (1.0, 1.0)


class SceneTriple:
    def __init__(self, clean, nir, noisy, seed):
        if clean.shape[0] != 3 or nir.shape[0] != 1 or noisy.shape[0] != 3:
            raise ValueError("expected 3/1/3-channel clean/nir/noisy")
        if not (clean.shape[1:] == nir.shape[1:] == noisy.shape[1:]):
            raise ValueError("triple images must share H, W")
        for a in (clean, nir, noisy):
            if a.min() < 0.0 or a.max() > 1.0:
                raise ValueError("triple values must lie in [0, 1]")
        self.clean = clean
        self.nir = nir
        self.noisy = noisy
        self.seed = seed


def darken(image, rng, darken_range=(0.1, 1.0)):
    """Scale the whole image by one uniform draw from darken_range."""
    lo, hi = darken_range
    scale = rng.uniform(lo, hi)
    return np.clip(image * scale, 0.0, 1.0).astype(image.dtype)


def mixed_noise(image, level, rng):
    """Poisson shot noise at 3000/level photons plus level/255 read noise."""
    if not 1.0 <= level <= 16.0:
        raise ValueError("level must lie in [1, 16]")
    s = SHOT_PHOTONS / level
    sigma_g = level / 255.0
    x = np.asarray(image, dtype=np.float64)
    y = rng.poisson(x * s) / s + rng.normal(0.0, sigma_g, size=x.shape)
    return np.clip(y, 0.0, 1.0).astype(image.dtype)


def gaussian_noise(image, sigma, rng):
    """Additive N(0, (sigma/255)^2), sigma in 8-bit units."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return np.array(image, copy=True)
    x = np.asarray(image, dtype=np.float64)
    y = x + rng.normal(0.0, sigma / 255.0, size=x.shape)
    return np.clip(y, 0.0, 1.0).astype(image.dtype)


def apply_noise(image, spec, noise_rng, darken_rng=None):
    """Full degradation: optional darkening, then the configured noise."""
    out = image
    if spec.darken:
        if darken_rng is None:
            raise ValueError("darkening enabled but no darken rng supplied")
        out = darken(out, darken_rng, spec.darken_range)
    if spec.kind == "mixed-gp":
        return mixed_noise(out, spec.level, noise_rng)
    return gaussian_noise(out, spec.sigma, noise_rng)


def _shaped_field(rng, height, width, gains):
    """Unit-variance random field with the given spectral gain profile."""
    z = rng.standard_normal((height, width))
    f = spectral.idft2d(spectral.dft2d(z) * gains)
    return f / f.std()


def _lowpass_field(rng, height, width, r0):
    r = spectral.radial_freq(height, width)
    return _shaped_field(rng, height, width, np.exp(-((r / r0) ** 2)))


def _texture_field(rng, height, width):
    # 1/f-style falloff, no DC: detail present at every cutoff of the
    # analysis grid but decaying, so flat sensor noise overtakes it
    r = spectral.radial_freq(height, width)
    gains = np.where(r > 0.04, (0.15 / (r + 0.10)) ** 1.5, 0.0)
    return _shaped_field(rng, height, width, gains)


def synth_triple(seed, height, width, spec):
    """Procedural clean/nir/noisy triple, bit-reproducible from its key."""
    for n in (height, width):
        if n < 32 or not spectral.is_pow2(n):
            raise ValueError("dims must be powers of two >= 32")
    scene = rng_for(spec.seed, seed, OP_SCENE)
    nir_rng = rng_for(spec.seed, seed, OP_NIR)

    # piecewise-constant regions from a quantized smooth field: sharp
    # boundaries shared by both modalities
    u = _lowpass_field(scene, height, width, 0.06)
    edges = np.quantile(u, np.linspace(0, 1, _REGION_LEVELS + 1)[1:-1])
    region = np.digitize(u, edges)
    colors = scene.uniform(0.15, 0.85, size=(_REGION_LEVELS, 3))
    texture = _texture_field(scene, height, width)

    clean = colors[region].transpose(2, 0, 1)
    for c in range(3):
        clean[c] += _SMOOTH_AMP_RGB * _lowpass_field(scene, height, width, 0.10)
    clean = np.clip(clean + _TEXTURE_AMP * texture, 0.0, 1.0)

    # guide channel: same regions, intensities remapped monotonically in the
    # clean luminance (edge signs agree), independent illumination field
    order = np.argsort(colors.mean(axis=1))
    gray = np.empty(_REGION_LEVELS)
    gray[order] = (np.linspace(0.2, 0.8, _REGION_LEVELS)
                   + nir_rng.uniform(-0.04, 0.04, _REGION_LEVELS))
    nir = gray[region]
    nir += _SMOOTH_AMP_NIR * _lowpass_field(nir_rng, height, width, 0.10)
    nir = np.clip(nir + _TEXTURE_AMP * texture, 0.0, 1.0)[None]

    clean = clean.astype(np.float32)
    nir = nir.astype(np.float32)
    noisy = apply_noise(clean, spec,
                        noise_rng=rng_for(spec.seed, seed, OP_NOISE),
                        darken_rng=rng_for(spec.seed, seed, OP_DARKEN))
    return SceneTriple(clean, nir, noisy, seed)
