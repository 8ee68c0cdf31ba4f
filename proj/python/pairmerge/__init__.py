# Copyright 2026 The pairmerge Authors
# SPDX-License-Identifier: Apache-2.0

"""Pairwise dual-mask expert merging with packed bf16 storage."""

from pairmerge._pairmerge import (
    BadMagic,
    ConfigMismatch,
    CorruptHeader,
    DegenerateVariance,
    DimensionMismatch,
    DomainError,
    DuplicateName,
    InvalidArgument,
    InvalidBits,
    InvalidThreshold,
    IoError,
    PairmergeError,
    RatioOutOfRange,
    ShapeMismatch,
    TruncatedPayload,
    avg_bitwidth,
    compress,
    decode_word,
    eval_deviation,
    gemv_fused,
    gemv_reference,
    generate_toy,
    merge_experts,
    pack_pair,
    quantize_group,
    set_max_threads,
    similarity_fraction_closed,
    similarity_fraction_mc,
    unpack_pair,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagic",
    "ConfigMismatch",
    "CorruptHeader",
    "DegenerateVariance",
    "DimensionMismatch",
    "DomainError",
    "DuplicateName",
    "InvalidArgument",
    "InvalidBits",
    "InvalidThreshold",
    "IoError",
    "PairmergeError",
    "RatioOutOfRange",
    "ShapeMismatch",
    "TruncatedPayload",
    "avg_bitwidth",
    "compress",
    "decode_word",
    "eval_deviation",
    "gemv_fused",
    "gemv_reference",
    "generate_toy",
    "merge_experts",
    "pack_pair",
    "quantize_group",
    "set_max_threads",
    "similarity_fraction_closed",
    "similarity_fraction_mc",
    "unpack_pair",
]
