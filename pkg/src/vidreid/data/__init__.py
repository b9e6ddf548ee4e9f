from .index import LoadReport, TrackletIndex, TrackletRecord, default_split, load_dataset_index
from .sampling import SampleBatch, chunk_bounds, mine_pairs, rrs_sample, verification_pairs
from .synthetic import SyntheticSpec, generate_synthetic_dataset
from .transforms import FrameCache, augment, load_frame, normalize

__all__ = [
    "FrameCache",
    "LoadReport",
    "SampleBatch",
    "SyntheticSpec",
    "TrackletIndex",
    "TrackletRecord",
    "augment",
    "chunk_bounds",
    "default_split",
    "generate_synthetic_dataset",
    "load_dataset_index",
    "load_frame",
    "mine_pairs",
    "normalize",
    "rrs_sample",
    "verification_pairs",
]
