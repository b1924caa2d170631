"""Clusters of helical vortex filaments: geometry, balancing and stream-function assembly."""

__version__ = "0.1.0"
