"""Algebra of the three-dimensional dot-array stimulus space.

A stimulus is a point (n, size, spacing) where `size` and `spacing` are the
products TSA*ISA and FA*Spar in pixel^4 units. Eight non-numerical features
follow in closed form, and after a log2 transform every feature is a linear
function of the three coordinates, which gives each feature a direction in
log space.
"""

from dataclasses import dataclass
import math

import numpy as np

TWO_SQRT_PI = 2.0 * math.sqrt(math.pi)

# Canonical feature names, in reporting order.
FEATURES = ("num", "size", "spacing", "tsa", "isa", "fa", "spar", "tp", "ip", "cov", "ac")

DISPLAY_NAMES = {
    "num": "Numerosity",
    "size": "Size",
    "spacing": "Spacing",
    "tsa": "Total Surface Area",
    "isa": "Item Surface Area",
    "fa": "Field Area",
    "spar": "Sparsity",
    "tp": "Total Perimeter",
    "ip": "Item Perimeter",
    "cov": "Coverage",
    "ac": "Apparent Closeness",
}

# log2(feature) coefficients on (log2 n, log2 size, log2 spacing); constant
# offsets such as log2(2*sqrt(pi)) are irrelevant for directions and dropped.
LOG_COEFFICIENTS = {
    "num": (1.0, 0.0, 0.0),
    "size": (0.0, 1.0, 0.0),
    "spacing": (0.0, 0.0, 1.0),
    "tsa": (0.5, 0.5, 0.0),
    "isa": (-0.5, 0.5, 0.0),
    "fa": (0.5, 0.0, 0.5),
    "spar": (-0.5, 0.0, 0.5),
    "tp": (0.75, 0.25, 0.0),
    "ip": (-0.25, 0.25, 0.0),
    "cov": (0.0, 0.5, -0.5),
    "ac": (0.0, 0.5, 0.5),
}


@dataclass(frozen=True)
class StimulusParams:
    """A stimulus as coordinates (n, size, spacing), size/spacing in px^4.

    spacing >= size is required: it is equivalent to FA >= TSA, without
    which the dots could not physically fit in their field.
    """

    n: int
    size: float
    spacing: float

    def __post_init__(self):
        if self.n < 1 or self.n != int(self.n):
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not (self.size > 0 and math.isfinite(self.size)):
            raise ValueError(f"size must be positive and finite, got {self.size}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing}")
        if self.spacing < self.size:
            raise ValueError(
                f"spacing ({self.spacing}) < size ({self.size}): field area would "
                "be smaller than total dot area")


@dataclass(frozen=True)
class FeatureVector:
    """The eight derived non-numerical features of a stimulus."""

    tsa: float   # total surface area, px^2
    isa: float   # item surface area, px^2
    fa: float    # field area, px^2
    spar: float  # sparsity, px^2
    tp: float    # total perimeter, px
    ip: float    # item perimeter, px
    cov: float   # coverage, dimensionless
    ac: float    # apparent closeness, px^4

    def value(self, feature):
        return getattr(self, feature)


@dataclass(frozen=True)
class LogPoint:
    """log2 coordinates of a stimulus; bijective with StimulusParams."""

    x: float  # log2 n
    y: float  # log2 size
    z: float  # log2 spacing

    @classmethod
    def from_params(cls, p: StimulusParams) -> "LogPoint":
        return cls(math.log2(p.n), math.log2(p.size), math.log2(p.spacing))

    def to_params(self) -> StimulusParams:
        n = 2.0 ** self.x
        n_int = round(n)
        if abs(n - n_int) > 1e-9 * max(1.0, n):
            raise ValueError(f"x = {self.x} does not encode an integer count")
        return StimulusParams(n_int, 2.0 ** self.y, 2.0 ** self.z)

    def as_array(self):
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class FeatureAxis:
    """Unit direction of a feature in (log2 n, log2 size, log2 spacing)."""

    feature: str
    direction: tuple

    def as_array(self):
        return np.array(self.direction)


def derive_features(p: StimulusParams) -> FeatureVector:
    """Evaluate the eight features of a stimulus in closed form.

    TSA = sqrt(size * n)        ISA = sqrt(size / n)
    FA  = sqrt(spacing * n)     Spar = sqrt(spacing / n)
    TP  = 2 sqrt(pi) size^(1/4) n^(3/4)
    IP  = 2 sqrt(pi) size^(1/4) n^(-1/4)
    Cov = sqrt(size / spacing)  AC = sqrt(size * spacing)
    """
    n, sz, sp = p.n, p.size, p.spacing
    return FeatureVector(
        tsa=math.sqrt(sz * n),
        isa=math.sqrt(sz / n),
        fa=math.sqrt(sp * n),
        spar=math.sqrt(sp / n),
        tp=TWO_SQRT_PI * sz ** 0.25 * n ** 0.75,
        ip=TWO_SQRT_PI * sz ** 0.25 * n ** -0.25,
        cov=math.sqrt(sz / sp),
        ac=math.sqrt(sz * sp),
    )


def log_feature_value(feature, p: StimulusParams) -> float:
    """log2 of a feature value (orthogonal dimensions included)."""
    if feature == "num":
        return math.log2(p.n)
    if feature == "size":
        return math.log2(p.size)
    if feature == "spacing":
        return math.log2(p.spacing)
    return math.log2(derive_features(p).value(feature))


def feature_axis(feature) -> FeatureAxis:
    """Unit-normalized log-space direction of a feature."""
    key = str(feature).lower()
    if key not in LOG_COEFFICIENTS:
        raise ValueError(f"unknown feature {feature!r}; expected one of {FEATURES}")
    coeffs = np.array(LOG_COEFFICIENTS[key])
    unit = coeffs / np.linalg.norm(coeffs)
    return FeatureAxis(key, tuple(unit))


def log_even_levels(lo, hi, k):
    """k levels evenly spaced on a log scale between lo and hi inclusive."""
    if not (lo > 0 and hi > lo):
        raise ValueError(f"need 0 < lo < hi, got ({lo}, {hi})")
    if k < 2:
        raise ValueError("need at least 2 levels")
    return np.exp2(np.linspace(math.log2(lo), math.log2(hi), k))


def integer_levels(lo, hi, k):
    """Log-even integer levels, nearest-integer rounded; collisions error."""
    levels = [round(v) for v in log_even_levels(lo, hi, k)]
    if len(set(levels)) != len(levels):
        raise ValueError(
            f"integer rounding collides for {k} levels on ({lo}, {hi}): {levels}")
    return levels


def build_grid(n_range, size_range, spacing_range, levels_per_dim):
    """Cartesian grid of stimuli, log-evenly spaced on every dimension.

    `levels_per_dim` may be one int for all three dimensions or a triple
    (n_levels, size_levels, spacing_levels). With the full-scale defaults
    (13 levels over 7-28 / 2.6e5-10.4e5 / 0.8e7-3.2e7) this yields the
    2197-point grid. Grid order: n outermost, spacing innermost.
    """
    if isinstance(levels_per_dim, int):
        levels_per_dim = (levels_per_dim, levels_per_dim, levels_per_dim)
    kn, ks, kp = levels_per_dim
    ns = integer_levels(n_range[0], n_range[1], kn)
    sizes = log_even_levels(size_range[0], size_range[1], ks)
    spacings = log_even_levels(spacing_range[0], spacing_range[1], kp)
    return [StimulusParams(n, float(sz), float(sp))
            for n in ns for sz in sizes for sp in spacings]
