"""Power Muirhead Mean local-centroid KNN classifier and benchmark harness."""

__version__ = "1.0.0"
