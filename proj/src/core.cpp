#include "drss/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drss {

namespace {

void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

bool is_binary(const VectorXd& v) {
  return (v.array() == 0.0 || v.array() == 1.0).all();
}

}  // namespace

const VectorXd& SemiSupervisedSample::delta() const {
  require(delta_.has_value(), ErrorCode::EmptyStratum, "sample carries no stratum indicators");
  return *delta_;
}

SemiSupervisedSample validate_sample(std::shared_ptr<const MatrixXd> X, VectorXd R, VectorXd Y,
                                     std::optional<VectorXd> delta, SampleMode mode) {
  require(X != nullptr, ErrorCode::DimensionMismatch, "covariate matrix missing");
  const Index n = X->rows();
  require(R.size() == n && Y.size() == n, ErrorCode::DimensionMismatch,
          "X has " + std::to_string(n) + " rows but R has " + std::to_string(R.size()) +
              " and Y has " + std::to_string(Y.size()));
  require(!delta || delta->size() == n, ErrorCode::DimensionMismatch,
          "stratum vector length differs from row count");
  require(X->allFinite(), ErrorCode::NonFiniteCovariate, "covariate matrix has non-finite entries");
  require(is_binary(R), ErrorCode::InvalidArgument, "label indicator must be 0/1");
  require(!delta || is_binary(*delta), ErrorCode::InvalidArgument,
          "stratum indicator must be 0/1");

  Index labeled = 0;
  for (Index i = 0; i < n; ++i) {
    const bool observed = mode == SampleMode::Causal || R(i) == 1.0;
    if (R(i) == 1.0) ++labeled;
    if (observed) {
      require(std::isfinite(Y(i)), ErrorCode::MissingLabeledOutcome,
              "row " + std::to_string(i) + " requires a finite outcome");
    } else {
      Y(i) = 0.0;
    }
  }
  require(labeled >= 1, ErrorCode::EmptyLabeledSet, "no labeled observations");

  SemiSupervisedSample s;
  s.X_ = std::move(X);
  s.R_ = std::move(R);
  s.Y_ = std::move(Y);
  s.delta_ = std::move(delta);
  s.mode_ = mode;
  s.n_labeled_ = labeled;
  return s;
}

SemiSupervisedSample validate_sample(RawSample raw) {
  return validate_sample(std::make_shared<const MatrixXd>(std::move(raw.X)), std::move(raw.R),
                         std::move(raw.Y), std::move(raw.delta), raw.mode);
}

SemiSupervisedSample SemiSupervisedSample::swapped_arms() const {
  require(mode_ == SampleMode::Causal, ErrorCode::InvalidArgument,
          "arm swap requires a causal-mode sample");
  VectorXd R = VectorXd::Ones(size()) - R_;
  return validate_sample(X_, std::move(R), Y_, delta_, mode_);
}

SemiSupervisedSample SemiSupervisedSample::as_missing_data() const {
  return validate_sample(X_, R_, Y_, delta_, SampleMode::MissingData);
}

SemiSupervisedSample SemiSupervisedSample::with_shifted_outcome(double shift) const {
  VectorXd Y = Y_;
  for (Index i = 0; i < size(); ++i)
    if (mode_ == SampleMode::Causal || R_(i) == 1.0) Y(i) += shift;
  return validate_sample(X_, R_, std::move(Y), delta_, mode_);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t state = mix64(seed) ^ mix64(stream_id ^ 0xd1b54a32d192ed03ULL);
  std::uint32_t words[8];
  for (int i = 0; i < 4; ++i) {
    state = mix64(state);
    words[2 * i] = static_cast<std::uint32_t>(state);
    words[2 * i + 1] = static_cast<std::uint32_t>(state >> 32);
  }
  std::seed_seq seq(std::begin(words), std::end(words));
  engine_.seed(seq);
}

std::uint64_t RandomStream::below(std::uint64_t bound) {
  const std::uint64_t limit = max() - (max() % bound + 1) % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x > limit);
  return x % bound;
}

MatrixXd RandomStream::normal_matrix(Index rows, Index cols) {
  MatrixXd out(rows, cols);
  // Row by row so the draw order is independent of the storage order.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = normal();
  return out;
}

std::vector<Index> random_permutation(Index n, RandomStream& stream) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(stream.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

std::vector<Index> CrossFitPlan::fold(int k) const {
  std::vector<Index> out;
  for (Index i = 0; i < assignment.size(); ++i)
    if (assignment(i) == k) out.push_back(i);
  return out;
}

std::vector<Index> CrossFitPlan::training(int k) const {
  std::vector<Index> out;
  for (Index i = 0; i < assignment.size(); ++i)
    if (assignment(i) != k) out.push_back(i);
  return out;
}

std::vector<Index> CrossFitPlan::fold_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(K), 0);
  for (Index i = 0; i < assignment.size(); ++i) ++sizes[static_cast<std::size_t>(assignment(i))];
  return sizes;
}

CrossFitPlan make_folds(Index N, int K, std::uint64_t seed) {
  require(K >= 2 && K <= N, ErrorCode::InvalidFoldCount,
          "need 2 <= K <= N, got K=" + std::to_string(K) + ", N=" + std::to_string(N));
  RandomStream stream(seed, tag_hash("folds"));
  const auto perm = random_permutation(N, stream);
  CrossFitPlan plan;
  plan.K = K;
  plan.seed = seed;
  plan.assignment.resize(N);
  for (Index j = 0; j < N; ++j) plan.assignment(perm[static_cast<std::size_t>(j)]) = static_cast<int>(j % K);
  return plan;
}

std::vector<Index> where_equal(const VectorXd& mask, double value) {
  std::vector<Index> out;
  for (Index i = 0; i < mask.size(); ++i)
    if (mask(i) == value) out.push_back(i);
  return out;
}

double median(std::vector<double> values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace drss
