#pragma once

// Geometric kernels over mean-pooled representations: mean-centering, cosine
// distance, answerable-only centroids, own_dist scoring, class distance
// summaries and a two-component PCA.
//
// Every kernel is templated on the scalar type of its Eigen argument. Rows are
// prompts, columns are hidden dimensions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "geomrel/corpus.hpp"
#include "geomrel/error.hpp"
#include "geomrel/types.hpp"

namespace geomrel {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Which prompts share one global mean. Joint: MATH and FACT are centred
// together and CODE alone. Separate: every form alone.
enum class ContextPolicy { Joint, Separate };

std::string context_id(Form form, ContextPolicy policy);

template <typename Scalar = double>
struct CenteredView {
  RowMatrix<Scalar> vectors;
  RowVector<Scalar> global_mean;
  std::string context_id;

  Eigen::Index rows() const noexcept { return vectors.rows(); }
};

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (!m.allFinite())
    throw Error(ErrorKind::NonFinite, fmt::format("{}: input contains NaN or Inf", what));
}

template <typename Derived>
CenteredView<typename Derived::Scalar> mean_center(const Eigen::MatrixBase<Derived>& matrix,
                                                   std::string context = {}) {
  using Scalar = typename Derived::Scalar;
  if (matrix.rows() < 1) throw Error(ErrorKind::InvalidArgument, "mean_center: need at least one row");
  require_finite(matrix, "mean_center");
  CenteredView<Scalar> view;
  view.global_mean = matrix.colwise().mean();
  view.vectors = matrix.rowwise() - view.global_mean;
  view.context_id = std::move(context);
  return view;
}

// 1 - cos(u, v), clamped to [0, 2]. Zero-norm inputs are a Degenerate error.
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar cosine_distance(const Eigen::MatrixBase<DerivedU>& u,
                                          const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  if (u.size() != v.size())
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("cosine_distance: size mismatch {} vs {}", u.size(), v.size()));
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0))
    throw Error(ErrorKind::Degenerate, "cosine_distance: zero-norm vector");
  const Scalar d = Scalar(1) - u.dot(v) / (nu * nv);
  return std::clamp(d, Scalar(0), Scalar(2));
}

// Coordinate-wise mean of the rows; rows are summed in order.
template <typename Derived>
RowVector<typename Derived::Scalar> centroid(const Eigen::MatrixBase<Derived>& rows) {
  using Scalar = typename Derived::Scalar;
  if (rows.rows() == 0) throw Error(ErrorKind::InvalidArgument, "centroid: empty set");
  RowVector<Scalar> sum = RowVector<Scalar>::Zero(rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) sum += rows.row(i);
  return sum / static_cast<Scalar>(rows.rows());
}

// Centroid of the selected rows, summed in the order given.
template <typename Derived>
RowVector<typename Derived::Scalar> centroid(const Eigen::MatrixBase<Derived>& rows,
                                             std::span<const Eigen::Index> which) {
  using Scalar = typename Derived::Scalar;
  if (which.empty()) throw Error(ErrorKind::InvalidArgument, "centroid: empty set");
  RowVector<Scalar> sum = RowVector<Scalar>::Zero(rows.cols());
  for (const auto i : which) sum += rows.row(i);
  return sum / static_cast<Scalar>(which.size());
}

template <typename Derived>
Vector<typename Derived::Scalar> row_norms(const Eigen::MatrixBase<Derived>& rows) {
  Vector<typename Derived::Scalar> out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out(i) = rows.row(i).norm();
  return out;
}

// Cosine distance of every row to `center`, given precomputed row norms.
template <typename Derived, typename DerivedC>
Vector<typename Derived::Scalar> distances_to(const Eigen::MatrixBase<Derived>& rows,
                                              const Vector<typename Derived::Scalar>& norms,
                                              const Eigen::MatrixBase<DerivedC>& center) {
  using Scalar = typename Derived::Scalar;
  const Scalar nc = center.norm();
  if (nc == Scalar(0)) throw Error(ErrorKind::Degenerate, "degenerate centroid (zero norm)");
  Vector<Scalar> out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (norms(i) == Scalar(0))
      throw Error(ErrorKind::Degenerate, fmt::format("zero-norm representation at row {}", i));
    const Scalar d = Scalar(1) - rows.row(i).dot(center) / (norms(i) * nc);
    out(i) = std::clamp(d, Scalar(0), Scalar(2));
  }
  return out;
}

template <typename Container>
std::vector<Eigen::Index> answerable_rows(const Container& labels) {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (is_answerable(labels[i])) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

// own_dist for every row: cosine distance to the centroid of the A-labelled
// rows. U rows never enter the centroid. This is the single scoring path used
// by scoring, the permutation test and the layer profile.
template <typename Derived>
Vector<typename Derived::Scalar> own_distances(const Eigen::MatrixBase<Derived>& rows,
                                               std::span<const Label> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != rows.rows())
    throw Error(ErrorKind::InvalidArgument, "own_distances: one label per row required");
  const auto a_rows = answerable_rows(labels);
  if (a_rows.empty()) throw Error(ErrorKind::InvalidArgument, "own_distances: no answerable rows");
  return distances_to(rows, row_norms(rows), centroid(rows, std::span<const Eigen::Index>(a_rows)));
}

enum class DriftTarget { Math, Fact, None };
std::string_view to_string(DriftTarget target) noexcept;

struct ScoreRow {
  std::string prompt_id;
  std::string model_id;
  Form form = Form::Math;
  Label label = Label::Answerable;
  double own_dist = 0.0;
  DriftTarget drift_target = DriftTarget::None;
  std::string context_id;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;

  std::vector<double> scores(Form form, Label label) const;
  // prompt_id,model_id,form,label,own_dist,drift_target
  void write_csv(std::ostream& out, bool header = true) const;
};

// Rows of `view` that belong to `form`, compacted in view order.
template <typename Scalar>
std::vector<Eigen::Index> rows_of_form(const CenteredView<Scalar>& view,
                                       std::span<const PromptRecord> records, Form form) {
  if (static_cast<Eigen::Index>(records.size()) != view.rows())
    throw Error(ErrorKind::InvalidArgument, "one record per view row required");
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].form == form) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

template <typename Scalar>
RowMatrix<Scalar> gather_rows(const RowMatrix<Scalar>& m, std::span<const Eigen::Index> which) {
  RowMatrix<Scalar> out(static_cast<Eigen::Index>(which.size()), m.cols());
  for (std::size_t k = 0; k < which.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(which[k]);
  return out;
}

// own_dist for every prompt of `form` in the view. `records[i]` describes view row i.
template <typename Scalar>
ScoreTable own_dist_scores(const CenteredView<Scalar>& view, std::span<const PromptRecord> records,
                           Form form, const std::string& model_id = {}) {
  const auto which = rows_of_form(view, records, form);
  std::vector<Label> labels;
  for (const auto i : which) labels.push_back(records[static_cast<std::size_t>(i)].label);
  if (answerable_rows(labels).empty())
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("own_dist: no answerable {} prompts", to_string(form)));
  const auto sub = gather_rows(view.vectors, which);
  const auto dist = own_distances(sub, labels);

  ScoreTable table;
  for (std::size_t k = 0; k < which.size(); ++k) {
    const auto& r = records[static_cast<std::size_t>(which[k])];
    table.rows.push_back({r.id, model_id, r.form, r.label, static_cast<double>(dist(static_cast<Eigen::Index>(k))),
                          DriftTarget::None, view.context_id});
  }
  return table;
}

// Within/between class summaries. `mean_distance(i, i)` is the mean pairwise
// cosine distance inside class i; off-diagonal entries average over all
// cross-class pairs. `centroid_cosine` compares whole-class centroids.
struct ClassDistanceStats {
  std::vector<std::string> classes;
  Eigen::MatrixXd mean_distance;
  Eigen::MatrixXd centroid_cosine;
};

template <typename Scalar>
ClassDistanceStats class_distance_stats(const CenteredView<Scalar>& view,
                                        std::span<const std::string> assignment) {
  if (static_cast<Eigen::Index>(assignment.size()) != view.rows())
    throw Error(ErrorKind::InvalidArgument, "class_distance_stats: one class per row required");
  std::map<std::string, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    members[assignment[i]].push_back(static_cast<Eigen::Index>(i));
  if (members.size() < 2)
    throw Error(ErrorKind::InvalidArgument, "class_distance_stats: need at least two classes");
  for (const auto& [name, rows] : members)
    if (rows.size() < 2)
      throw Error(ErrorKind::InvalidArgument,
                  fmt::format("class '{}' has a single member; within-class distance undefined", name));

  const auto norms = row_norms(view.vectors);
  if ((norms.array() == Scalar(0)).any())
    throw Error(ErrorKind::Degenerate, "class_distance_stats: zero-norm representation");
  const RowMatrix<Scalar> unit = norms.asDiagonal().inverse() * view.vectors;
  const RowMatrix<Scalar> dist = (RowMatrix<Scalar>::Ones(unit.rows(), unit.rows()) - unit * unit.transpose())
                                     .cwiseMax(Scalar(0))
                                     .cwiseMin(Scalar(2));

  ClassDistanceStats out;
  const auto k = static_cast<Eigen::Index>(members.size());
  out.mean_distance.resize(k, k);
  out.centroid_cosine.resize(k, k);
  std::vector<RowVector<Scalar>> centers;
  for (const auto& [name, rows] : members) {
    out.classes.push_back(name);
    centers.push_back(centroid(view.vectors, std::span<const Eigen::Index>(rows)));
  }
  Eigen::Index ci = 0;
  for (const auto& [name_i, rows_i] : members) {
    Eigen::Index cj = 0;
    for (const auto& [name_j, rows_j] : members) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto a : rows_i)
        for (const auto b : rows_j) {
          if (ci == cj && b <= a) continue;
          sum += static_cast<double>(dist(a, b));
          ++count;
        }
      out.mean_distance(ci, cj) = sum / static_cast<double>(count);
      const Scalar nci = centers[ci].norm();
      const Scalar ncj = centers[cj].norm();
      if (nci == Scalar(0) || ncj == Scalar(0))
        throw Error(ErrorKind::Degenerate, "class_distance_stats: zero class centroid");
      out.centroid_cosine(ci, cj) = static_cast<double>(centers[ci].dot(centers[cj]) / (nci * ncj));
      ++cj;
    }
    ++ci;
  }
  return out;
}

template <typename Scalar = double>
struct Pca2 {
  RowMatrix<Scalar> coords;      // (n, 2)
  RowMatrix<Scalar> components;  // (2, d), orthonormal rows
  Eigen::Matrix<Scalar, 2, 1> singular_values;

  template <typename Derived>
  Eigen::Matrix<Scalar, 1, 2> project(const Eigen::MatrixBase<Derived>& v) const {
    return v * components.transpose();
  }
};

// Top-two right singular directions of the (already centred) view. Each
// component is signed so that its largest-magnitude coordinate is positive
// (lowest index on ties). Rank-1 input yields a zero second coordinate.
template <typename Scalar>
Pca2<Scalar> pca2(const CenteredView<Scalar>& view) {
  const auto& x = view.vectors;
  if (x.rows() < 3) throw Error(ErrorKind::InvalidArgument, "pca2: need at least 3 rows");
  if (x.cols() < 2) throw Error(ErrorKind::InvalidArgument, "pca2: need at least 2 dimensions");
  require_finite(x, "pca2");

  Eigen::BDCSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> svd(x, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > Scalar(0)) || sv(0) <= std::numeric_limits<Scalar>::epsilon() * x.cwiseAbs().maxCoeff())
    throw Error(ErrorKind::Degenerate, "pca2: input has rank 0");

  Pca2<Scalar> out;
  out.components = svd.matrixV().leftCols(2).transpose();
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    out.components.row(c).cwiseAbs().maxCoeff(&arg);
    if (out.components(c, arg) < Scalar(0)) out.components.row(c) *= Scalar(-1);
  }
  out.singular_values = sv.head(2);
  out.coords = x * out.components.transpose();
  return out;
}

// Mean silhouette coefficient of 2-D points under Euclidean distance.
template <typename Derived>
double silhouette(const Eigen::MatrixBase<Derived>& points, std::span<const std::string> classes) {
  const auto n = points.rows();
  if (static_cast<Eigen::Index>(classes.size()) != n)
    throw Error(ErrorKind::InvalidArgument, "silhouette: one class per point required");
  std::map<std::string, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < n; ++i) members[classes[static_cast<std::size_t>(i)]].push_back(i);
  if (members.size() < 2) throw Error(ErrorKind::InvalidArgument, "silhouette: need two classes");

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& own = members[classes[static_cast<std::size_t>(i)]];
    if (own.size() < 2) continue;  // singleton: silhouette 0
    double a = 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [name, rows] : members) {
      double sum = 0.0;
      for (const auto j : rows) sum += static_cast<double>((points.row(i) - points.row(j)).norm());
      if (name == classes[static_cast<std::size_t>(i)])
        a = sum / static_cast<double>(rows.size() - 1);
      else
        b = std::min(b, sum / static_cast<double>(rows.size()));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

}  // namespace geomrel
