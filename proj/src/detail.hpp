#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sgmcmc/types.hpp"

namespace sgmcmc::detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// LLT of an SPD matrix, throwing NumericalError with `what` on failure
/// or when the reciprocal condition estimate falls below `min_rcond`.
inline Eigen::LLT<Matrix> checked_llt(const Matrix& m, const std::string& what,
                                      double min_rcond = 1e-14) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(what + ": matrix is not positive definite");
  if (m.rows() > 0 && !(llt.rcond() >= min_rcond))
    throw NumericalError(what + ": matrix is numerically singular (rcond " +
                         std::to_string(llt.rcond()) + ")");
  return llt;
}

inline Matrix spd_inverse(const Matrix& m, const std::string& what) {
  auto llt = checked_llt(m, what);
  return symmetrize(llt.solve(Matrix::Identity(m.rows(), m.cols())));
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

/// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
template <class Fn>
void parallel_for(Index n, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(std::max<Index>(n, 1))));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (Index i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace sgmcmc::detail
