"""Projection and angle analysis of fitted discrimination vectors.

The fitted (beta_num, beta_size, beta_spacing) triple is a direction in the
log stimulus space; projecting it on a feature's unit axis measures how
strongly that feature drives choices, and the angle to the axis measures
alignment. All axes are unit-normalized, so the projection on Numerosity
equals beta_num itself.
"""

from dataclasses import dataclass
import math

import numpy as np

from .stimspace import FEATURES, feature_axis


@dataclass(frozen=True)
class DiscriminationVector:
    beta_num: float
    beta_size: float
    beta_spacing: float

    def as_array(self):
        return np.array([self.beta_num, self.beta_size, self.beta_spacing])

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.as_array()))


def _as_vector(v):
    if isinstance(v, DiscriminationVector):
        return v.as_array()
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected 3 components, got shape {arr.shape}")
    return arr


def project_onto_feature(v, feature) -> float:
    """Signed scalar projection of v onto the feature's unit axis."""
    vec = _as_vector(v)
    if not np.all(np.isfinite(vec)):
        raise ValueError("vector components must be finite")
    return float(vec @ feature_axis(feature).as_array())


def angle_to_feature(v, feature) -> float:
    """Angle in degrees, in [0, 180], between v and the feature axis."""
    vec = _as_vector(v)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("angle undefined for the zero vector")
    cosine = float(vec @ feature_axis(feature).as_array()) / norm
    return math.degrees(math.acos(max(-1.0, min(1.0, cosine))))


def feature_table(v):
    """Projection and angle for all eleven axes, keyed by feature name."""
    return {f: (project_onto_feature(v, f), angle_to_feature(v, f)) for f in FEATURES}
