// Copyright 2026 The vlprvos Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vlprvos {

/// Extents of the operands do not line up.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument("shape error: " + what) {}
};

/// An attention mask row with no allowed key.
class DegenerateMaskError : public std::invalid_argument {
 public:
  explicit DegenerateMaskError(const std::string& what)
      : std::invalid_argument("degenerate mask: " + what) {}
};

/// A caller broke an operation precondition (missing gradient, bad argument).
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what)
      : std::invalid_argument("contract error: " + what) {}
};

class DeterminismError : public std::runtime_error {
 public:
  explicit DeterminismError(const std::string& what)
      : std::runtime_error("determinism error: " + what) {}
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument("config error: " + what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error("io error: " + what) {}
};

}  // namespace vlprvos
