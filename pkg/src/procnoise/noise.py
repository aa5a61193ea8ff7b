"""Deterministic Gabor, Perlin, and uniform-random perturbation fields.

Every field is a pure function of (kind, params, seed, side): regenerating
with the same arguments is bit-identical.  Procedural fields are generated
as a single d x d grayscale grid and replicated across the three colour
channels when scaled into a perturbation; the uniform-random baseline is
generated per channel because its definition is explicitly d x d x 3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateField
from .image import PerturbationField
from .params import GaborParams, PerlinParams, ProceduralParams

SQRT2 = math.sqrt(2.0)
# Max magnitude of one octave of 2-d unit-gradient lattice noise; dividing by
# this puts a single octave exactly in [-1, 1].
PERLIN_SCALE = SQRT2 / 2.0

# Beyond 3/sigma the Gaussian envelope is below e^{-9*pi} ~ 5e-13; kernels
# are only accumulated inside a window of that radius.
TRUNCATION = 3.0

# Expected number of kernels covering each pixel.
COVERAGE = 4.0

# Guard against pathological point counts for spike-like kernels at large
# image sides; never binds at desk scale (d = 32).
MAX_POINTS = 1 << 19


@dataclass
class NoiseField:
    """Pre-scaling noise grid in [-1, 1]: (d, d) for the procedural kinds,
    (d, d, 3) for the uniform-random baseline."""

    values: np.ndarray
    kind: str
    seed: int
    params: ProceduralParams | None

    @property
    def side(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# Perlin noise
# ---------------------------------------------------------------------------

def fade(t):
    """Quintic interpolant 6t^5 - 15t^4 + 10t^3."""
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


@dataclass(frozen=True)
class PerlinLattice:
    """Seeded permutation table and the fixed table of unit gradients."""

    permutation: np.ndarray
    gradients: np.ndarray
    seed: int

    TABLE = 256

    @classmethod
    def build(cls, seed: int) -> "PerlinLattice":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(cls.TABLE)
        angles = 2.0 * np.pi * np.arange(8) / 8.0
        grads = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return cls(permutation=perm, gradients=grads, seed=seed)

    def corner_gradients(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Gradient vectors hashed from integer lattice corners (i, j)."""
        q = self.permutation
        idx = q[(q[i % self.TABLE] + j) % self.TABLE] % len(self.gradients)
        return self.gradients[idx]


def _perlin_raw(x, y, lattice: PerlinLattice):
    """One octave of lattice-gradient noise, scaled into [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    i = np.floor(x).astype(np.int64)
    j = np.floor(y).astype(np.int64)
    u = x - i
    v = y - j

    g00 = lattice.corner_gradients(i, j)
    g10 = lattice.corner_gradients(i + 1, j)
    g01 = lattice.corner_gradients(i, j + 1)
    g11 = lattice.corner_gradients(i + 1, j + 1)

    n00 = g00[..., 0] * u + g00[..., 1] * v
    n10 = g10[..., 0] * (u - 1.0) + g10[..., 1] * v
    n01 = g01[..., 0] * u + g01[..., 1] * (v - 1.0)
    n11 = g11[..., 0] * (u - 1.0) + g11[..., 1] * (v - 1.0)

    su = fade(u)
    sv = fade(v)
    nx0 = n00 + su * (n10 - n00)
    nx1 = n01 + su * (n11 - n01)
    return (nx0 + sv * (nx1 - nx0)) / PERLIN_SCALE


def perlin_value(x: float, y: float, lattice: PerlinLattice) -> float:
    """Noise value of a single octave at one point."""
    return float(_perlin_raw(x, y, lattice))


def perlin_octave_sum(xs, ys, p: PerlinParams, lattice: PerlinLattice):
    """Plain sum of octaves n = 1..Omega, each at double the previous frequency."""
    total = np.zeros(np.broadcast(np.asarray(xs), np.asarray(ys)).shape)
    for n in range(1, p.octaves + 1):
        f = float(2 ** (n - 1))
        total += _perlin_raw(np.asarray(xs) * (f / p.lambda_x), np.asarray(ys) * (f / p.lambda_y), lattice)
    return total


def perlin_field(p: PerlinParams, d: int, seed: int) -> NoiseField:
    """Octave-summed Perlin noise passed through the sine colour map."""
    p.validate(d)
    lattice = PerlinLattice.build(seed)
    ys, xs = np.mgrid[0:d, 0:d].astype(np.float64)
    s = perlin_octave_sum(xs, ys, p, lattice)
    values = np.sin(s * (2.0 * np.pi * p.phi_sine))
    return NoiseField(values=values, kind="perlin", seed=seed, params=p)


# ---------------------------------------------------------------------------
# Gabor noise
# ---------------------------------------------------------------------------

def gabor_kernel(x, y, p: GaborParams):
    """Circular Gaussian times an oriented harmonic:
    exp(-pi*sigma^2*(x^2+y^2)) * cos((2*pi/lambda)*(x*cos(omega) + y*sin(omega)))."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    envelope = np.exp(-np.pi * p.sigma * p.sigma * (x * x + y * y))
    phase = (2.0 * np.pi / p.lambda_) * (x * np.cos(p.omega) + y * np.sin(p.omega))
    return envelope * np.cos(phase)


def effective_radius(sigma: float, d: int) -> float:
    """Radius where the Gaussian envelope falls to e^{-pi} (~4%), which is
    what visually populates the image; floored at half a pixel for
    spike-like kernels and capped at the image diagonal."""
    return min(max(1.0 / sigma, 0.5), SQRT2 * d)


def gabor_points(p: GaborParams, d: int, seed: int) -> np.ndarray:
    """Seeded uniform point process over the image extended by the kernel
    truncation radius, dense enough for an expected coverage of ~4 kernels
    per pixel at the envelope's effective radius."""
    r_eff = effective_radius(p.sigma, d)
    density = COVERAGE / (math.pi * r_eff * r_eff)
    margin = min(TRUNCATION / p.sigma, 2.0 * d)
    extended = d + 2.0 * margin
    n = max(4, math.ceil(density * extended * extended))
    n = min(n, MAX_POINTS)
    rng = np.random.default_rng(seed)
    return rng.uniform(-margin, d + margin, size=(n, 2))


def _orientation_fields(points: np.ndarray, p: GaborParams, angles: list[float],
                        d: int) -> np.ndarray:
    """Sparse convolutions of one point set with single-orientation kernels,
    one (d, d) field per angle.  The Gaussian envelope is shared across
    angles; each orientation only differs in the cosine phase."""
    radius = TRUNCATION / p.sigma
    freq = 2.0 * np.pi / p.lambda_
    cos_sin = [(math.cos(a), math.sin(a)) for a in angles]
    sig2pi = np.pi * p.sigma * p.sigma

    if radius >= d:
        # Wide kernels, few points: accumulate each over the full grid.
        ys, xs = np.mgrid[0:d, 0:d].astype(np.float64)
        fields = np.zeros((len(angles), d, d))
        for px, py in points:
            xo = xs - px
            yo = ys - py
            env = np.exp(-sig2pi * (xo * xo + yo * yo))
            for ai, (ca, sa) in enumerate(cos_sin):
                fields[ai] += env * np.cos(freq * (xo * ca + yo * sa))
        return fields

    m = math.ceil(radius)
    w = 2 * m + 1
    pad = 2 * m
    side = d + 2 * pad
    canvases = np.zeros((len(angles), side * side))
    # Below radius 0.5 only the nearest cell centre can sit inside the
    # truncation disc, so the window collapses to a single cell.
    narrow = radius < 0.5
    offsets = np.zeros(1, dtype=np.int64) if narrow else np.arange(-m, m + 1)
    w = len(offsets)
    chunk = max(1, (1 << 22) // (w * w))
    for lo in range(0, len(points), chunk):
        pts = points[lo:lo + chunk]
        px, py = pts[:, 0], pts[:, 1]
        anchor_x = np.rint(px) if narrow else np.floor(px)
        anchor_y = np.rint(py) if narrow else np.floor(py)
        cols = anchor_x.astype(np.int64)[:, None] + offsets[None, :]
        rows = anchor_y.astype(np.int64)[:, None] + offsets[None, :]
        xo = cols - px[:, None]
        yo = rows - py[:, None]
        xo2 = xo * xo
        yo2 = yo * yo
        env = np.exp(-sig2pi * (xo2[:, None, :] + yo2[:, :, None]))
        flat = ((rows[:, :, None] + pad) * side + (cols[:, None, :] + pad)).ravel()
        for ai, (ca, sa) in enumerate(cos_sin):
            vals = env * np.cos(freq * (xo[:, None, :] * ca + yo[:, :, None] * sa))
            canvases[ai] += np.bincount(flat, weights=vals.ravel(), minlength=side * side)
    fields = canvases.reshape(len(angles), side, side)
    return fields[:, pad:pad + d, pad:pad + d].copy()


def orientation_field(points: np.ndarray, p: GaborParams, angle: float, d: int) -> np.ndarray:
    """Sparse convolution of the point set with a single-orientation kernel."""
    return _orientation_fields(points, p, [angle], d)[0]


def gabor_orientations(p: GaborParams) -> list[float]:
    """The xi harmonic orientations omega + n*pi/xi, n = 1..xi."""
    return [p.omega + n * math.pi / p.xi for n in range(1, p.xi + 1)]


def gabor_field_raw(p: GaborParams, d: int, seed: int) -> np.ndarray:
    """Pre-normalization field: the mean of the xi single-orientation sparse
    convolutions over one shared point set."""
    p.validate(d)
    points = gabor_points(p, d, seed)
    return np.mean(_orientation_fields(points, p, gabor_orientations(p), d), axis=0)


def normalize_variance(raw: np.ndarray, window_sigma: float) -> np.ndarray:
    """Equalize local contrast by dividing out the Gaussian-weighted local
    RMS, then clamp to [-1, 1]."""
    raw = np.asarray(raw, dtype=np.float64)
    global_rms = math.sqrt(float(np.mean(raw * raw)))
    if global_rms == 0.0:
        raise DegenerateField("zero global RMS")
    local_ms = ndimage.gaussian_filter(raw * raw, sigma=window_sigma, mode="reflect")
    local_rms = np.sqrt(np.maximum(local_ms, 0.0))
    floor = 1e-9 * global_rms
    return np.clip(raw / np.maximum(local_rms, floor), -1.0, 1.0)


def gabor_window_sigma(p: GaborParams, d: int) -> float:
    """Normalization window: the kernel's effective radius, floored at 4 px
    and capped at 2d to bound the blur cost."""
    return max(4.0, min(effective_radius(p.sigma, d), 2.0 * d))


def gabor_field(p: GaborParams, d: int, seed: int) -> NoiseField:
    raw = gabor_field_raw(p, d, seed)
    values = normalize_variance(raw, gabor_window_sigma(p, d))
    return NoiseField(values=values, kind="gabor", seed=seed, params=p)


# ---------------------------------------------------------------------------
# Uniform-random baseline and scaling
# ---------------------------------------------------------------------------

def uniform_random_field(d: int, seed: int) -> NoiseField:
    """sgn(r) for r ~ U(-1, 1)^{d x d x 3}; r = 0 maps to +1."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(-1.0, 1.0, size=(d, d, 3))
    values = np.where(r >= 0.0, 1.0, -1.0)
    return NoiseField(values=values, kind="uniform", seed=seed, params=None)


def to_perturbation(field: NoiseField, eps: float) -> PerturbationField:
    """Scale into [-eps, +eps] and broadcast grayscale fields to 3 channels."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    vals = field.values
    if vals.ndim == 2:
        vals = np.repeat(vals[:, :, None], 3, axis=2)
    return PerturbationField(values=np.clip(eps * vals, -eps, eps), eps=eps)


def generate_field(kind: str, params: ProceduralParams | None, d: int, seed: int) -> NoiseField:
    if kind == "gabor":
        assert isinstance(params, GaborParams)
        return gabor_field(params, d, seed)
    if kind == "perlin":
        assert isinstance(params, PerlinParams)
        return perlin_field(params, d, seed)
    if kind == "uniform":
        return uniform_random_field(d, seed)
    raise ValueError(f"unknown noise kind {kind!r}")
