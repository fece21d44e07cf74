#include "cftree/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "cftree/engine.hpp"
#include "cftree/error.hpp"

namespace cftree {

using json = nlohmann::json;

namespace {

double distance(const std::string& kind, const Vector& x, const Vector& center) {
  return kind == "l1" ? (x - center).lpNorm<1>() : (x - center).norm();
}

struct Tally {
  std::vector<double> dist;
  double millis = 0.0;
  int total = 0;
};

BenchRow summarize(const std::string& method, double pct, const Tally& t) {
  BenchRow row;
  row.method = method;
  row.pct_constrained = pct;
  row.instances = t.total;
  if (t.total > 0) {
    row.ms = t.millis / t.total;
    row.pct_feasible = 100.0 * static_cast<double>(t.dist.size()) / t.total;
  }
  if (!t.dist.empty()) {
    const double n = static_cast<double>(t.dist.size());
    row.distance_mean = std::accumulate(t.dist.begin(), t.dist.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : t.dist) ss += (d - row.distance_mean) * (d - row.distance_mean);
    row.distance_std = std::sqrt(ss / n);
  }
  return row;
}

}  // namespace

BenchReport run_bench(const std::shared_ptr<const TreeModel>& tree, const SyntheticDataset& data,
                      const BenchOptions& options) {
  if (!tree) throw Error(ErrorCode::InvalidArgument, "bench needs a tree");
  if (options.distance != "l1" && options.distance != "l2")
    throw Error(ErrorCode::InvalidArgument, "bench distance must be l1 or l2");
  if (options.per_class < 1) throw Error(ErrorCode::InvalidArgument, "per-class count must be >= 1");
  if (data.labels.size() != data.rows.size())
    throw Error(ErrorCode::InvalidArgument, "bench data needs one label per row");
  const auto& schema = tree->schema();
  for (const auto& row : data.rows)
    if (row.size() != tree->dim()) throw Error(ErrorCode::DimensionMismatch, "dataset rows do not match the tree");

  std::mt19937_64 rng(options.seed);
  std::vector<size_t> sources;
  for (int y = 1; y <= tree->class_count(); ++y) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < data.rows.size(); ++i)
      if (data.labels[i] == y) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (static_cast<int>(idx.size()) > options.per_class) idx.resize(static_cast<size_t>(options.per_class));
    sources.insert(sources.end(), idx.begin(), idx.end());
  }

  auto pool = std::make_shared<CandidatePool>();
  pool->instances = data.rows;
  pool->labels = data.labels;

  BenchReport report;
  report.distance = options.distance;
  report.per_class = options.per_class;
  const auto cost = options.distance == "l1" ? CostFunction::l1(tree->dim()) : CostFunction::l2(tree->dim());

  for (double frac : options.constrained_fractions) {
    if (!(frac >= 0.0 && frac <= 1.0)) throw Error(ErrorCode::InvalidArgument, "constrained fraction outside [0, 1]");
    std::vector<int> order(static_cast<size_t>(schema.feature_count()));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto nfrozen = static_cast<size_t>(std::lround(frac * schema.feature_count()));
    UserConstraints uc;
    for (size_t i = 0; i < nfrozen; ++i) uc.freeze.push_back(schema.feature(order[i]).name);
    const double pct = schema.feature_count() > 0 ? 100.0 * nfrozen / schema.feature_count() : 0.0;

    Tally exact, search;
    for (size_t s : sources) {
      Query q;
      q.tree = tree;
      q.source = data.rows[s];
      q.cost = cost;
      q.constraints = uc;
      q.options.threads = options.threads;
      std::vector<ClassLabel> others;
      const ClassLabel src = predict(*tree, q.source);
      for (int y = 1; y <= tree->class_count(); ++y)
        if (y != src) others.push_back(y);
      q.target = TargetSpec::subset(others);

      auto t0 = std::chrono::steady_clock::now();
      const auto r = explain(q);
      auto t1 = std::chrono::steady_clock::now();
      exact.millis += std::chrono::duration<double, std::milli>(t1 - t0).count();
      ++exact.total;
      if (r.found()) exact.dist.push_back(distance(options.distance, r.x_star, q.source));

      if (options.include_search) {
        t0 = std::chrono::steady_clock::now();
        const auto b = dataset_search(q, *pool);
        t1 = std::chrono::steady_clock::now();
        search.millis += std::chrono::duration<double, std::milli>(t1 - t0).count();
        ++search.total;
        if (b.found()) search.dist.push_back(distance(options.distance, b.x_star, q.source));
      }
    }
    report.rows.push_back(summarize("exact", pct, exact));
    if (options.include_search) report.rows.push_back(summarize("search", pct, search));
  }
  return report;
}

json bench_to_json(const BenchReport& report, bool include_timing) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"method", r.method},
                    {"pct_constrained", r.pct_constrained},
                    {"ms", include_timing ? r.ms : 0.0},
                    {"distance_mean", r.distance_mean},
                    {"distance_std", r.distance_std},
                    {"pct_feasible", r.pct_feasible},
                    {"instances", r.instances}});
  return {{"distance", report.distance}, {"per_class", report.per_class}, {"rows", rows}};
}

std::string bench_table(const BenchReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %6s %10s %22s %11s\n", "method", "% c", "ms",
                (report.distance + " distance mean+-std").c_str(), "% feasible");
  out += line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%-8s %6.1f %10.3f %12.4f +- %-7.4f %11.1f\n", r.method.c_str(),
                  r.pct_constrained, r.ms, r.distance_mean, r.distance_std, r.pct_feasible);
    out += line;
  }
  return out;
}

}  // namespace cftree
