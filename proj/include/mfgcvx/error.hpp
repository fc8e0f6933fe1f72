#pragma once

#include <stdexcept>
#include <string>

namespace mfgcvx {

/// Violated precondition of a public operation (bad grid, rank mismatch,
/// out-of-range parameter). The CLI maps these to exit code 2.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical failure at run time: singular system, vanishing denominator,
/// stalled line search, non-finite objective. The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace mfgcvx
