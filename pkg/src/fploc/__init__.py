"""Floor-plan-prior LiDAR indoor localization.

Parametric floor-plan geometry, an adaptive quad-tree nearest-field index,
a synthetic LiDAR simulator, ceiling/ground segmentation, 2D feature
extraction, two-stage scan-to-plan registration, and trajectory metrics.
"""

__version__ = "0.1.0"
