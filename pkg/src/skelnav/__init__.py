"""Skeleton-guided instruction navigation in a synthetic continuous world.

The pipeline: panoramic depth -> point cloud -> navigable-region raster ->
topology-preserving skeleton -> degree-selected waypoints -> a model (or
scripted oracle) picks one per step -> simulator executes it -> feedback
on the active subtask steers the next choice.
"""

__version__ = "0.1.0"
