// Copyright (c) 2026 The mosaic authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOSAIC_ERRORS_HPP
#define MOSAIC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mosaic {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateGeometry : Error {
    using Error::Error;
};

struct DisconnectedGraph : Error {
    using Error::Error;
};

struct EmptyInput : Error {
    using Error::Error;
};

struct TooFewCorrespondences : Error {
    using Error::Error;
};

struct EmptyCorrespondences : Error {
    using Error::Error;
};

struct InvalidParameter : Error {
    using Error::Error;
};

struct LengthMismatch : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace mosaic

#endif  // MOSAIC_ERRORS_HPP
