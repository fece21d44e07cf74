#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cftree/fixtures.hpp"
#include "cftree/tree_model.hpp"

namespace cftree {

struct BenchOptions {
  int per_class = 20;
  // Fraction of features frozen at each level; features are drawn once per level.
  std::vector<double> constrained_fractions{0.0, 0.25, 0.5};
  std::string distance = "l2";  // l1 | l2
  bool include_search = true;   // also run the dataset-search baseline
  std::uint64_t seed = 1;
  int threads = 0;
};

struct BenchRow {
  std::string method;  // exact | search
  double pct_constrained = 0.0;
  double ms = 0.0;  // mean per instance
  double distance_mean = 0.0;
  double distance_std = 0.0;
  double pct_feasible = 0.0;
  int instances = 0;
};

struct BenchReport {
  std::string distance;
  int per_class = 0;
  std::vector<BenchRow> rows;
};

/// Sources are up to per_class rows of each labeled class, drawn from data
/// with the seed; each targets every class other than its prediction. The
/// search baseline looks for the nearest row of data satisfying the same
/// constraints.
BenchReport run_bench(const std::shared_ptr<const TreeModel>& tree, const SyntheticDataset& data,
                      const BenchOptions& options);

nlohmann::json bench_to_json(const BenchReport& report, bool include_timing = true);
std::string bench_table(const BenchReport& report);

}  // namespace cftree
