#include "geomrel/stats.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace geomrel {

void require_both_classes(std::span<const Label> labels, const char* what) {
  const auto n_a = std::count(labels.begin(), labels.end(), Label::Answerable);
  if (n_a == 0 || n_a == static_cast<std::ptrdiff_t>(labels.size()))
    throw Error(ErrorKind::InvalidArgument, fmt::format("{}: both A and U labels required", what));
}

std::vector<Label> permuted_labels(std::span<const Label> labels, std::uint64_t seed, std::uint64_t index) {
  std::vector<Label> out(labels.begin(), labels.end());
  CounterStream stream(seed, index);
  for (std::size_t j = out.size(); j > 1; --j) {
    const auto k = static_cast<std::size_t>(stream.next_below(j));
    std::swap(out[j - 1], out[k]);
  }
  return out;
}

namespace {

void require_finite_scores(std::span<const double> scores, const char* what) {
  for (const double s : scores)
    if (!std::isfinite(s)) throw Error(ErrorKind::NonFinite, fmt::format("{}: non-finite score", what));
}

std::pair<double, double> mean_and_var(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(v.size() - 1)};
}

}  // namespace

double cohens_d(std::span<const double> group_a, std::span<const double> group_b) {
  if (group_a.size() < 2 || group_b.size() < 2)
    throw Error(ErrorKind::InvalidArgument, "cohens_d: each group needs at least two values");
  require_finite_scores(group_a, "cohens_d");
  require_finite_scores(group_b, "cohens_d");
  const auto [mean_a, var_a] = mean_and_var(group_a);
  const auto [mean_b, var_b] = mean_and_var(group_b);
  const double na = static_cast<double>(group_a.size());
  const double nb = static_cast<double>(group_b.size());
  const double pooled = ((na - 1.0) * var_a + (nb - 1.0) * var_b) / (na + nb - 2.0);
  if (!(pooled > 0.0)) throw Error(ErrorKind::Degenerate, "cohens_d: zero pooled variance");
  return (mean_b - mean_a) / std::sqrt(pooled);
}

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorKind::InvalidArgument, "roc_auc: one label per score required");
  require_both_classes(labels, "roc_auc");
  require_finite_scores(scores, "roc_auc");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  // Midranks (1-based); a tie block [i, j) shares rank (i + 1 + j) / 2.
  double rank_sum_u = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (!is_answerable(labels[order[k]])) rank_sum_u += rank;
    i = j;
  }
  const auto n_u = static_cast<double>(std::count(labels.begin(), labels.end(), Label::Unanswerable));
  const auto n_a = static_cast<double>(labels.size()) - n_u;
  return (rank_sum_u - n_u * (n_u + 1.0) / 2.0) / (n_a * n_u);
}

ClassifierEval f1_at_threshold(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  ClassifierEval eval;
  eval.auc = roc_auc(scores, labels);
  eval.threshold = threshold;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predict_u = scores[i] > threshold;
    const bool is_u = !is_answerable(labels[i]);
    if (predict_u && is_u) ++tp;
    if (predict_u && !is_u) ++fp;
    if (!predict_u && is_u) ++fn;
  }
  if (tp + fp > 0) eval.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) eval.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (eval.precision + eval.recall > 0.0)
    eval.f1 = 2.0 * eval.precision * eval.recall / (eval.precision + eval.recall);
  return eval;
}

ClassifierEval f1_at_midpoint(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorKind::InvalidArgument, "f1_at_midpoint: one label per score required");
  require_both_classes(labels, "f1_at_midpoint");
  double sum_a = 0.0, sum_u = 0.0;
  std::size_t n_a = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (is_answerable(labels[i])) {
      sum_a += scores[i];
      ++n_a;
    } else {
      sum_u += scores[i];
    }
  }
  const double mean_a = sum_a / static_cast<double>(n_a);
  const double mean_u = sum_u / static_cast<double>(scores.size() - n_a);
  return f1_at_threshold(scores, labels, (mean_a + mean_u) / 2.0);
}

}  // namespace geomrel
