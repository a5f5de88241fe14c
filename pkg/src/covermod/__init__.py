"""Cover modification against structural LSB steganalysis.

Modules
-------
pixel_store    raster decode/encode and disjoint tuple partitioning
trace_algebra  trace sets, subset enumeration, censuses and transition kernels
detectors      histogram chi-square, SPA and Triples estimators with calibration
cover_mod      capacity analysis, modification plans and their application
stego_codec    keyed embedding/extraction with the omitted-set header
bench          end-to-end pipelines and corpus experiments
"""
from .cover_mod import embeddable_fraction, modify_cover, target_census, trace_set_capacity
from .detectors import detect, histogram_chi2, spa_estimate, triples_estimate
from .pixel_store import load_image, partition_tuples, read_image_file, write_image, write_image_file
from .stego_codec import embed, extract, masks_from_capacity
from .trace_algebra import census, classify_tuple, enumerate_subsets, transition_kernel

__version__ = "0.1.0"

__all__ = [
    "census", "classify_tuple", "detect", "embed", "embeddable_fraction", "enumerate_subsets", "extract",
    "histogram_chi2", "load_image", "masks_from_capacity", "modify_cover", "partition_tuples", "read_image_file",
    "spa_estimate", "target_census", "trace_set_capacity", "transition_kernel", "triples_estimate", "write_image",
    "write_image_file",
]
