"""Dataset generation, point files and checkpoints."""
from .checkpoint import (
    BadMagicError,
    CheckpointError,
    IntegrityError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .dataset import SampleRecord, generate_dataset, generate_sample, read_dataset, write_dataset
from .xyz import XYZParseError, format_xyz, parse_xyz, read_xyz, write_xyz

__all__ = [
    "BadMagicError", "CheckpointError", "IntegrityError", "SampleRecord",
    "TruncatedCheckpointError", "UnsupportedVersionError", "XYZParseError",
    "decode_checkpoint", "encode_checkpoint", "format_xyz", "generate_dataset",
    "generate_sample", "load_checkpoint", "parse_xyz", "read_dataset", "read_xyz",
    "save_checkpoint", "write_dataset", "write_xyz",
]
