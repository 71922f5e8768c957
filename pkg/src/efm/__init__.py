"""Elastic field metrics: sliced amplitude, phase and translation distances on the sphere."""

__version__ = "0.1.0"

from .align import AlignmentResult, DpConfig, align, timing_bias  # noqa: E402
from .fieldio import Field, read_field, write_field  # noqa: E402
from .grid import SliceLocationSet, SpatialGrid  # noqa: E402
from .sliced import KernelConfig, SlicedElasticDistance, sliced_elastic_distance, timing_bias_map  # noqa: E402

__all__ = [
    "AlignmentResult", "DpConfig", "Field", "KernelConfig", "SliceLocationSet", "SlicedElasticDistance",
    "SpatialGrid", "align", "read_field", "sliced_elastic_distance", "timing_bias", "timing_bias_map",
    "write_field",
]
