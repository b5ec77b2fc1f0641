#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace sgmcmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Half-open range of time indices [begin, end).
struct IndexRange {
  Index begin = 0;
  Index end = 0;

  Index size() const { return end - begin; }
  bool contains(Index t) const { return t >= begin && t < end; }
  bool contains(const IndexRange& other) const {
    return other.begin >= begin && other.end <= end;
  }
  bool operator==(const IndexRange&) const = default;
};

/// Raised when a linear-algebra step cannot proceed (singular or
/// indefinite matrices, failed factorizations).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an update produces NaN or Inf; carries the offending block.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string block, const std::string& what)
      : std::runtime_error(what), block_(std::move(block)) {}
  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

}  // namespace sgmcmc
