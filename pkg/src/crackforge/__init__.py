"""crackforge: 2D quasi-static brittle-fracture simulation and dataset generation.

Subpackages cover the full pipeline: bitmap ingestion, heterogeneous
material generation, structured FE meshing, phase-field constitutive
functions, the staggered displacement/damage solver, field rasterization,
and crack-path evaluation metrics.
"""

__version__ = "0.1.0"
