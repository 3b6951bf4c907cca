"""Far-view multiview 3D hand pose: geometry, annotation, network and metrics."""

__version__ = "0.1.0"
