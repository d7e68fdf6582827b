"""Polar codes and polar lattices for the Heegard-Berger problem.

Modules
-------
polar    generic polar machinery: transform, construction, SC quantization and decoding
theory   rate-distortion quantities for the binary and Gaussian settings
binary   binary codecs (nested Region I-B scheme, two-level Region I scheme)
lattice  multilevel polar lattices for the Gaussian setting
sim      seeded experiment driver and CSV output
"""

from .polar import ConfigurationError, ConstructionParams, IndexPartition, polar_transform
from .theory import DSBSConfig, GaussianHBConfig, HBParams, minimize_S

__all__ = [
    "ConfigurationError",
    "ConstructionParams",
    "DSBSConfig",
    "GaussianHBConfig",
    "HBParams",
    "IndexPartition",
    "minimize_S",
    "polar_transform",
]
__version__ = "0.1.0"
