#ifndef DRSS_CORE_HPP
#define DRSS_CORE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "drss/error.hpp"

namespace drss {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr const char* kLibraryVersion = "1.0.0";

enum class SampleMode { MissingData, Causal };

/// Unvalidated arrays as supplied by a caller or a file loader. Absent
/// outcomes are encoded as NaN.
struct RawSample {
  MatrixXd X;
  VectorXd R;
  VectorXd Y;
  std::optional<VectorXd> delta;
  SampleMode mode = SampleMode::MissingData;
};

/// Validated container for Z = (R, RY, X) (missing-data mode) or (R, Y, X)
/// (causal mode), optionally with stratum indicators.
///
/// In missing-data mode the stored outcome of every unlabeled row is 0, so
/// `Y()` is literally the observed product R*Y and no estimator can read an
/// absent outcome. The covariate matrix is shared between views so relabeled
/// copies (arm swaps, missing-data views of causal data) are cheap.
class SemiSupervisedSample {
 public:
  const MatrixXd& X() const { return *X_; }
  const VectorXd& R() const { return R_; }
  const VectorXd& Y() const { return Y_; }
  bool has_delta() const { return delta_.has_value(); }
  const VectorXd& delta() const;
  SampleMode mode() const { return mode_; }

  Index size() const { return R_.size(); }
  Index dim() const { return X_->cols(); }
  Index n_labeled() const { return n_labeled_; }

  /// Causal-mode sample with treatment indicator R replaced by 1 - R.
  SemiSupervisedSample swapped_arms() const;
  /// Missing-data view of a causal sample: Y is masked to R*Y.
  SemiSupervisedSample as_missing_data() const;
  /// Same covariates and labels, outcome shifted by a constant wherever observed.
  SemiSupervisedSample with_shifted_outcome(double shift) const;

  std::shared_ptr<const MatrixXd> shared_X() const { return X_; }

 private:
  friend SemiSupervisedSample validate_sample(std::shared_ptr<const MatrixXd> X, VectorXd R,
                                              VectorXd Y, std::optional<VectorXd> delta,
                                              SampleMode mode);
  SemiSupervisedSample() = default;

  std::shared_ptr<const MatrixXd> X_;
  VectorXd R_;
  VectorXd Y_;
  std::optional<VectorXd> delta_;
  SampleMode mode_ = SampleMode::MissingData;
  Index n_labeled_ = 0;
};

/// Checks every container invariant and returns the validated sample, or
/// throws drss::Error. Never repairs data.
SemiSupervisedSample validate_sample(RawSample raw);

/// Validates a sample that reuses an existing covariate matrix.
SemiSupervisedSample validate_sample(std::shared_ptr<const MatrixXd> X, VectorXd R, VectorXd Y,
                                     std::optional<VectorXd> delta, SampleMode mode);

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64 finalizer; used for all seed and stream-id derivations.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a of a purpose tag, so stream ids can be spelled as strings.
constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_stream_id(std::uint64_t parent, std::uint64_t index) {
  return mix64(parent ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Seedable generator addressed by (seed, stream_id). The engine is a
/// std::mt19937_64 (sequence fixed by the standard) seeded through SplitMix64,
/// and the variate transforms are Boost's portable implementations, so equal
/// (seed, stream_id) pairs give equal sequences on every platform.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer on [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Independent child stream identified by (this stream, index).
  RandomStream child(std::uint64_t index) const {
    return RandomStream(seed_, derive_stream_id(stream_id_, index));
  }

  MatrixXd normal_matrix(Index rows, Index cols);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

/// Fisher-Yates permutation of 0..n-1 using `below`; portable unlike std::shuffle.
std::vector<Index> random_permutation(Index n, RandomStream& stream);

// ---------------------------------------------------------------------------
// Cross-fitting

/// K-fold partition of 0..N-1. `assignment[i]` is the 0-based fold of row i.
struct CrossFitPlan {
  int K = 0;
  VectorXi assignment;
  std::uint64_t seed = 0;

  Index size() const { return assignment.size(); }
  std::vector<Index> fold(int k) const;
  std::vector<Index> training(int k) const;
  std::vector<Index> fold_sizes() const;
};

/// Shuffles 0..N-1 with the stream (seed, "folds") and deals round-robin, so
/// fold sizes differ by at most one and the result depends on (N, K, seed) only.
CrossFitPlan make_folds(Index N, int K, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Small Eigen helpers shared by the estimators.

/// Rows of `m` selected by `rows`, copied into a dense matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> take_rows(const Eigen::MatrixBase<Derived>& m,
                                           const std::vector<Index>& rows) {
  Matrix<typename Derived::Scalar> out(static_cast<Index>(rows.size()), m.cols());
  for (Index c = 0; c < m.cols(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r), c) = m(rows[r], c);
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> take(const Eigen::MatrixBase<Derived>& v,
                                      const std::vector<Index>& rows) {
  Vector<typename Derived::Scalar> out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
  return out;
}

/// Indices i with mask(i) == value.
std::vector<Index> where_equal(const VectorXd& mask, double value);

/// Prepends a column of ones: the design (1, x^T).
template <typename Derived>
Matrix<typename Derived::Scalar> with_intercept(const Eigen::MatrixBase<Derived>& X) {
  Matrix<typename Derived::Scalar> out(X.rows(), X.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(X.cols()) = X;
  return out;
}

/// Logistic function g(u) = e^u / (1 + e^u), evaluated without overflow.
template <typename Scalar>
Scalar logistic(Scalar u) {
  using std::exp;
  if (u >= 0) return Scalar(1) / (Scalar(1) + exp(-u));
  const Scalar e = exp(u);
  return e / (Scalar(1) + e);
}

/// log(1 + e^u) without overflow.
template <typename Scalar>
Scalar log1p_exp(Scalar u) {
  using std::exp;
  using std::log1p;
  return u > 0 ? u + log1p(exp(-u)) : log1p(exp(u));
}

double median(std::vector<double> values);

}  // namespace drss

#endif  // DRSS_CORE_HPP
