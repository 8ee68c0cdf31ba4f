// Copyright 2026 The pairmerge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pairmerge {

// Base of every error raised by the library. Each subclass maps to one
// failure class callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PAIRMERGE_DEFINE_ERROR(Name)        \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

PAIRMERGE_DEFINE_ERROR(ShapeMismatch);
PAIRMERGE_DEFINE_ERROR(DimensionMismatch);
PAIRMERGE_DEFINE_ERROR(InvalidThreshold);
PAIRMERGE_DEFINE_ERROR(InvalidArgument);
PAIRMERGE_DEFINE_ERROR(RatioOutOfRange);
PAIRMERGE_DEFINE_ERROR(DegenerateVariance);
PAIRMERGE_DEFINE_ERROR(DomainError);
PAIRMERGE_DEFINE_ERROR(InvalidBits);
PAIRMERGE_DEFINE_ERROR(ConfigMismatch);

// container_io
PAIRMERGE_DEFINE_ERROR(IoError);
PAIRMERGE_DEFINE_ERROR(BadMagic);
PAIRMERGE_DEFINE_ERROR(CorruptHeader);
PAIRMERGE_DEFINE_ERROR(TruncatedPayload);
PAIRMERGE_DEFINE_ERROR(DuplicateName);

#undef PAIRMERGE_DEFINE_ERROR

}  // namespace pairmerge
