"""Numerosity-perception modeling at desk scale.

Subpackages cover the orthogonal dot-stimulus space (`stimspace`), raster
synthesis and datasets (`render`), unsupervised deep belief networks
(`dbn`), the linear comparison read-out (`readout`), psychometric GLM
fitting (`psychofit`), discrimination-vector geometry (`geometry`),
representational similarity analysis (`rsa`), statistical primitives
(`stats`) and the experiment pipeline with its CLI (`pipeline`).
"""

from . import dbn, geometry, pipeline, psychofit, readout, render, rsa, stats, stimspace

__all__ = ["stimspace", "render", "dbn", "readout", "psychofit", "geometry",
           "rsa", "stats", "pipeline"]
__version__ = "0.1.0"
