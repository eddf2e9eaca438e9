#include "geomrel/layerwise.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "geomrel/stats.hpp"

namespace geomrel {

void LayerProfile::write_csv(std::ostream& out, bool header) const {
  if (header) out << "model,layer,delta,dist_A,dist_U\n";
  for (std::size_t l = 0; l < n_layers(); ++l)
    out << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", model_id, l, delta_per_layer[l], dist_a_per_layer[l],
                       dist_u_per_layer[l]);
}

namespace {

struct LayerGap {
  double delta = 0.0;
  double dist_a = 0.0;
  double dist_u = 0.0;
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

LayerProfile layer_profile(const EmbeddingBundle& bundle, std::span<const PromptRecord> records, Form form,
                           std::span<const std::size_t> context_rows, const std::string& context,
                           unsigned threads) {
  if (records.size() != bundle.n_prompts())
    throw Error(ErrorKind::InvalidArgument, "layer_profile: one record per bundle row required");
  if (bundle.n_layers < 2)
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("layer_profile: bundle '{}' has a single layer", bundle.model_id));

  std::vector<std::size_t> rows(context_rows.begin(), context_rows.end());
  if (rows.empty()) {
    rows.resize(bundle.n_prompts());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  std::vector<PromptRecord> sub_records;
  std::vector<Eigen::Index> index;
  for (const auto r : rows) {
    if (r >= bundle.n_prompts()) throw Error(ErrorKind::InvalidArgument, "layer_profile: row out of range");
    sub_records.push_back(records[r]);
    index.push_back(static_cast<Eigen::Index>(r));
  }
  std::vector<Label> labels;
  for (const auto& r : sub_records)
    if (r.form == form) labels.push_back(r.label);
  require_both_classes(labels, "layer_profile");

  std::vector<LayerGap> gaps(bundle.n_layers);
  auto run_layer = [&](std::size_t l) {
    const auto layer = bundle.layer(l);
    RowMatrix<double> x(static_cast<Eigen::Index>(index.size()), layer.cols());
    for (std::size_t k = 0; k < index.size(); ++k)
      x.row(static_cast<Eigen::Index>(k)) = layer.row(index[k]).cast<double>();
    const auto view = mean_center(x, context);
    ScoreTable table;
    try {
      table = own_dist_scores(view, sub_records, form, bundle.model_id);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("layer {}: {}", l, e.what()));
    }
    std::vector<double> dist;
    std::vector<Label> lab;
    for (const auto& row : table.rows) {
      dist.push_back(row.own_dist);
      lab.push_back(row.label);
    }
    gaps[l].delta = mean_gap(dist, lab);
    gaps[l].dist_a = mean_of(table.scores(form, Label::Answerable));
    gaps[l].dist_u = mean_of(table.scores(form, Label::Unanswerable));
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, bundle.n_layers));
  if (threads <= 1) {
    for (std::size_t l = 0; l < bundle.n_layers; ++l) run_layer(l);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t l = t; l < bundle.n_layers; l += threads) run_layer(l);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  LayerProfile p;
  p.model_id = bundle.model_id;
  for (const auto& g : gaps) {
    p.delta_per_layer.push_back(g.delta);
    p.dist_a_per_layer.push_back(g.dist_a);
    p.dist_u_per_layer.push_back(g.dist_u);
  }
  p.peak_layer = static_cast<std::size_t>(
      std::max_element(p.delta_per_layer.begin(), p.delta_per_layer.end()) - p.delta_per_layer.begin());
  p.peak_delta = p.delta_per_layer[p.peak_layer];
  p.last_layer_delta = p.delta_per_layer.back();
  const double a_rise = p.dist_a_per_layer.back() - p.dist_a_per_layer[p.peak_layer];
  const double u_fall = p.dist_u_per_layer[p.peak_layer] - p.dist_u_per_layer.back();
  p.narrows_from_below = p.last_layer_delta < p.peak_delta && a_rise > 0.0 && a_rise >= u_fall;
  return p;
}

}  // namespace geomrel
