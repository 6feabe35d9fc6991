// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace metaforge {

// API misuse: a precondition the caller was responsible for does not hold.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Shape mismatch between tensor operands; message names the primitive.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string& what) : ContractError(what) {}
};

// Out-of-range token id or element index.
class IndexError : public ContractError {
 public:
  explicit IndexError(const std::string& what) : ContractError(what) {}
};

// Non-finite value encountered where finiteness is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file (JSONL corpus, config, checkpoint).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace metaforge
