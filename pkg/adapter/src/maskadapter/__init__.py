"""Bridge from detector output formats to the segmentation pipeline's manifest."""

from .convert import ConversionError, convert, roundtrip_check
from .rle import (
    RLEError,
    decode_count_string,
    decode_row_major,
    encode_count_string,
    encode_row_major,
    expand_column_major,
)

__all__ = [
    "ConversionError",
    "RLEError",
    "convert",
    "roundtrip_check",
    "decode_count_string",
    "encode_count_string",
    "expand_column_major",
    "encode_row_major",
    "decode_row_major",
]
