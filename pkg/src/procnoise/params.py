"""Noise parameter vectors, their bounds, and the 4-d search box.

Both noise families are controlled by four parameters: three continuous
coordinates and one small integer (isotropy count for Gabor, octave count
for Perlin).  Optimizers work in a normalized [0, 1]^4 box; the discrete
coordinate is relaxed to continuous there and snapped back to its integer
grid whenever a vector is turned into actual parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

TWO_PI = 2.0 * math.pi

XI_MAX = 12
OCTAVES_MAX = 4

# Strictly positive floor for the length-like coordinates whose formal range
# is (0, d].  Keeps the search box closed without admitting zero.
CONT_LO = 0.125


@dataclass(frozen=True)
class GaborParams:
    """Gabor noise parameters: Gaussian width, harmonic period and
    orientation, and the isotropy count."""

    sigma: float
    lambda_: float
    omega: float
    xi: int

    def validate(self, side: int) -> None:
        _check_positive_bounded("sigma", self.sigma, side)
        _check_positive_bounded("lambda", self.lambda_, side)
        if not (0.0 <= self.omega <= TWO_PI):
            raise ValueError(f"omega ∈ [0, 2π], got {self.omega}")
        if not (isinstance(self.xi, (int, np.integer)) and 1 <= self.xi <= XI_MAX):
            raise ValueError(f"xi ∈ [1,{XI_MAX}], got {self.xi}")

    def as_tuple(self) -> tuple[float, float, float, int]:
        return (self.sigma, self.lambda_, self.omega, int(self.xi))


@dataclass(frozen=True)
class PerlinParams:
    """Perlin noise parameters: per-axis wavelengths, sine colour-map
    frequency, and the octave count."""

    lambda_x: float
    lambda_y: float
    phi_sine: float
    octaves: int

    def validate(self, side: int) -> None:
        _check_positive_bounded("lambda_x", self.lambda_x, side)
        _check_positive_bounded("lambda_y", self.lambda_y, side)
        _check_positive_bounded("phi_sine", self.phi_sine, side)
        if not (isinstance(self.octaves, (int, np.integer)) and 1 <= self.octaves <= OCTAVES_MAX):
            raise ValueError(f"octaves ∈ [1,{OCTAVES_MAX}], got {self.octaves}")

    def as_tuple(self) -> tuple[float, float, float, int]:
        return (self.lambda_x, self.lambda_y, self.phi_sine, int(self.octaves))


ProceduralParams = GaborParams | PerlinParams


def _check_positive_bounded(name: str, value: float, side: int) -> None:
    if not (0.0 < value <= side):
        raise ValueError(f"{name} ∈ (0,{side}], got {value}")


def params_to_dict(p: ProceduralParams) -> dict:
    d = {f.name.rstrip("_"): getattr(p, f.name) for f in fields(p)}
    d["kind"] = "gabor" if isinstance(p, GaborParams) else "perlin"
    return d


def params_from_dict(d: dict) -> ProceduralParams:
    kind = d["kind"]
    if kind == "gabor":
        return GaborParams(float(d["sigma"]), float(d["lambda"]), float(d["omega"]), int(d["xi"]))
    if kind == "perlin":
        return PerlinParams(
            float(d["lambda_x"]), float(d["lambda_y"]), float(d["phi_sine"]), int(d["octaves"])
        )
    raise ValueError(f"unknown params kind {kind!r}")


class ParamSpace:
    """Bounded 4-d parameter box with a normalized-coordinate view.

    Coordinates 0..2 are continuous with per-coordinate (lo, hi); coordinate
    3 is an integer in {1..levels}.  Normalized vectors live in [0, 1]^4 and
    `snap` rounds the discrete coordinate onto its feasible grid.
    """

    DIM = 4

    def __init__(self, kind: str, side: int):
        if kind not in ("gabor", "perlin"):
            raise ValueError(f"unknown noise kind {kind!r}")
        self.kind = kind
        self.side = int(side)
        if kind == "gabor":
            self.names = ("sigma", "lambda", "omega", "xi")
            self.lows = np.array([CONT_LO, CONT_LO, 0.0])
            self.highs = np.array([float(side), float(side), TWO_PI])
            self.levels = XI_MAX
        else:
            self.names = ("lambda_x", "lambda_y", "phi_sine", "octaves")
            self.lows = np.array([CONT_LO, CONT_LO, CONT_LO])
            self.highs = np.array([float(side), float(side), float(side)])
            self.levels = OCTAVES_MAX

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Clip to [0,1]^4 and round the discrete coordinate to its grid."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        k = np.rint(x[..., 3] * (self.levels - 1))
        x = x.copy()
        x[..., 3] = k / (self.levels - 1)
        return x

    def level_of(self, x3: float) -> int:
        return 1 + int(round(float(x3) * (self.levels - 1)))

    def to_params(self, x: np.ndarray) -> ProceduralParams:
        x = self.snap(np.asarray(x, dtype=float))
        cont = self.lows + x[:3] * (self.highs - self.lows)
        level = self.level_of(x[3])
        if self.kind == "gabor":
            return GaborParams(cont[0], cont[1], cont[2], level)
        return PerlinParams(cont[0], cont[1], cont[2], level)

    def from_params(self, p: ProceduralParams) -> np.ndarray:
        vals = p.as_tuple()
        x = np.empty(self.DIM)
        x[:3] = (np.asarray(vals[:3]) - self.lows) / (self.highs - self.lows)
        x[3] = (vals[3] - 1) / (self.levels - 1)
        return self.snap(x)

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        """One uniform draw over the box: continuous coordinates uniform in
        [lo, hi], discrete coordinate uniform over its integer levels."""
        x = np.empty(self.DIM)
        x[:3] = rng.uniform(0.0, 1.0, 3)
        x[3] = rng.integers(1, self.levels + 1) - 1
        x[3] /= self.levels - 1
        return x

    def is_discrete(self, dim: int) -> bool:
        return dim == 3
