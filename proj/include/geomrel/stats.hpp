#pragma once

#include <cstddef>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "geomrel/error.hpp"
#include "geomrel/geometry.hpp"
#include "geomrel/rng.hpp"
#include "geomrel/types.hpp"

namespace geomrel {

// One-sided (U > A) permutation result. p = (1 + #{permuted gap >= observed}) / (1 + n_perm).
struct PermutationResult {
  double observed_gap = 0.0;
  double p_value = 1.0;
  std::size_t n_perm = 0;
  std::uint64_t seed = 0;
  std::size_t n_at_least = 0;
};

struct ClassifierEval {
  double auc = 0.5;
  double f1 = 0.0;
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Permuted gaps within this (relative) distance of the observed gap count as ties.
inline constexpr double kGapTieTolerance = 1e-10;

void require_both_classes(std::span<const Label> labels, const char* what);

// mean(U scores) - mean(A scores), summed in index order.
template <typename Derived>
double mean_gap(const Eigen::DenseBase<Derived>& scores, std::span<const Label> labels) {
  if (static_cast<std::size_t>(scores.size()) != labels.size())
    throw Error(ErrorKind::InvalidArgument, "mean_gap: one label per score required");
  double sum_a = 0.0;
  double sum_u = 0.0;
  std::size_t n_a = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto s = static_cast<double>(scores(static_cast<Eigen::Index>(i)));
    if (is_answerable(labels[i])) {
      sum_a += s;
      ++n_a;
    } else {
      sum_u += s;
    }
  }
  const auto n_u = labels.size() - n_a;
  if (n_a == 0 || n_u == 0) throw Error(ErrorKind::InvalidArgument, "mean_gap: both classes required");
  return sum_u / static_cast<double>(n_u) - sum_a / static_cast<double>(n_a);
}

inline double mean_gap(std::span<const double> scores, std::span<const Label> labels) {
  return mean_gap(Eigen::Map<const Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size())),
                  labels);
}

// The label assignment used by permutation `index`: a Fisher-Yates shuffle of
// `labels` driven by the Philox stream (seed, index). Class counts are kept.
std::vector<Label> permuted_labels(std::span<const Label> labels, std::uint64_t seed, std::uint64_t index);

// Permutation test on the own_dist gap. Each permutation shuffles the labels,
// recomputes the A-only centroid from the permuted A set and rescored every
// row. Results are identical for any thread count (threads = 0: hardware).
template <typename Derived>
PermutationResult permutation_test(const Eigen::MatrixBase<Derived>& vectors, std::span<const Label> labels,
                                   std::size_t n_perm, std::uint64_t seed, unsigned threads = 0) {
  using Scalar = typename Derived::Scalar;
  require_both_classes(labels, "permutation_test");
  if (n_perm < 1) throw Error(ErrorKind::InvalidArgument, "permutation_test: n_perm must be >= 1");
  require_finite(vectors, "permutation_test");

  const RowMatrix<Scalar> x = vectors;
  PermutationResult result;
  result.n_perm = n_perm;
  result.seed = seed;
  result.observed_gap = mean_gap(own_distances(x, labels), labels);

  const auto norms = row_norms(x);
  std::vector<double> gaps(n_perm);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto perm = permuted_labels(labels, seed, i);
      const auto a_rows = answerable_rows(perm);
      const auto d = distances_to(x, norms, centroid(x, std::span<const Eigen::Index>(a_rows)));
      gaps[i] = mean_gap(d, perm);
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_perm));
  if (threads <= 1) {
    run(0, n_perm);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t chunk = (n_perm + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(n_perm, begin + chunk);
      pool.emplace_back([&, begin, end] {
        try {
          run(begin, end);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  // Mathematically tied gaps (e.g. the complement labelling of a balanced,
  // centred set) differ from the observed one by rounding only.
  const double cutoff = result.observed_gap - kGapTieTolerance * std::max(1.0, std::abs(result.observed_gap));
  for (const double g : gaps)
    if (g >= cutoff) ++result.n_at_least;
  result.p_value = static_cast<double>(1 + result.n_at_least) / static_cast<double>(1 + n_perm);
  return result;
}

// (mean_b - mean_a) / pooled sd with sample variances. Each group needs two
// values; zero pooled variance is a Degenerate error.
double cohens_d(std::span<const double> group_a, std::span<const double> group_b);

// Probability that a random U score exceeds a random A score, ties 1/2,
// computed from midranks (Mann-Whitney U).
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

// Positive class U; predict U iff score > threshold.
ClassifierEval f1_at_threshold(std::span<const double> scores, std::span<const Label> labels, double threshold);

// Threshold at the midpoint of the mean A and mean U scores.
ClassifierEval f1_at_midpoint(std::span<const double> scores, std::span<const Label> labels);

}  // namespace geomrel
