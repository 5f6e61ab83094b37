"""qrobust - robust quantum control with multi-sample mixed-strategy differential evolution."""

__version__ = "1.0.0"
__author__ = "Geoview"
