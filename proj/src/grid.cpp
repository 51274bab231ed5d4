#include "nlw/grid.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "nlw/errors.hpp"
#include "nlw/random.hpp"
#include "nlw/report.hpp"

namespace nlw {
namespace {

std::string ratio_tag(double ratio) {
  std::string s = format_fixed(ratio, 6);
  while (s.size() > 1 && s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

std::string with_preset(const std::string& text, const std::string& preset) {
  std::istringstream in(text);
  std::string out = "engine.preset = " + preset + "\n";
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t");
    if (b != std::string::npos && line.compare(b, 13, "engine.preset") == 0) {
      out += "\n";  // keep line numbers stable for error messages
      continue;
    }
    out += line + "\n";
  }
  return out;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ArgumentError("bad seed '" + std::string(s) + "'");
  }
  return v;
}

std::string metric_cell(double mean, double sd) { return format_fixed(mean) + "+-" + format_fixed(sd); }

}  // namespace

void apply_seed(ExperimentConfig& config, std::uint64_t seed) {
  config.run.seed = seed;
  config.noise.seed = derive_seed(seed, 0x6e6f697365ULL);
}

RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out) {
  const LoadedData data = load_data(config.data, config.noise);
  RunResult result = train(config.run, data.train, data.test);
  write_file_atomic(out / "config.exp", serialize_experiment(config));
  write_report_csv(result.report, out / "report.csv");
  return result;
}

CellMetrics cell_metrics(const RunReport& report) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (report.rows.empty()) return {nan, nan, nan};
  CellMetrics m;
  m.final_acc = report.rows.back().test_acc;
  m.best_acc = report.rows.front().test_acc;
  for (const auto& r : report.rows) m.best_acc = std::max(m.best_acc, r.test_acc);
  const std::size_t k = std::min<std::size_t>(10, report.rows.size());
  double sum = 0.0;
  for (std::size_t i = report.rows.size() - k; i < report.rows.size(); ++i) sum += report.rows[i].test_acc;
  m.mean_acc_last10 = sum / static_cast<double>(k);
  return m;
}

std::vector<GroupAggregate> aggregate(const std::vector<GridCell>& cells) {
  std::vector<GroupAggregate> groups;
  for (const auto& c : cells) {
    const bool known = std::any_of(groups.begin(), groups.end(), [&](const GroupAggregate& g) {
      return g.preset == c.preset && g.noise_ratio == c.noise_ratio;
    });
    if (!known) groups.push_back({c.preset, c.noise_ratio, 0, {}, {}});
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& g : groups) {
    std::vector<CellMetrics> ms;
    for (const auto& c : cells)
      if (c.ok && c.preset == g.preset && c.noise_ratio == g.noise_ratio) ms.push_back(c.metrics);
    g.runs = static_cast<int>(ms.size());
    auto stats = [&](double CellMetrics::*field, double& mean, double& sd) {
      if (ms.empty()) {
        mean = sd = nan;
        return;
      }
      double sum = 0.0;
      for (const auto& m : ms) sum += m.*field;
      mean = sum / static_cast<double>(ms.size());
      double ss = 0.0;
      for (const auto& m : ms) ss += (m.*field - mean) * (m.*field - mean);
      sd = ms.size() > 1 ? std::sqrt(ss / static_cast<double>(ms.size() - 1)) : 0.0;
    };
    stats(&CellMetrics::final_acc, g.mean.final_acc, g.stddev.final_acc);
    stats(&CellMetrics::best_acc, g.mean.best_acc, g.stddev.best_acc);
    stats(&CellMetrics::mean_acc_last10, g.mean.mean_acc_last10, g.stddev.mean_acc_last10);
  }
  return groups;
}

std::string summary_csv(const GridResult& result) {
  std::string out = "run_id,preset,noise_kind,noise_ratio,seed,final_acc,best_acc,mean_acc_last10\n";
  NoiseKind kind = NoiseKind::symmetric;
  for (const auto& c : result.cells) {
    kind = c.noise_kind;
    out += c.run_id + "," + c.preset + "," + std::string(to_string(c.noise_kind)) + "," + format_fixed(c.noise_ratio) +
           "," + std::to_string(c.seed) + ",";
    if (c.ok) {
      out += format_fixed(c.metrics.final_acc) + "," + format_fixed(c.metrics.best_acc) + "," +
             format_fixed(c.metrics.mean_acc_last10) + "\n";
    } else {
      out += "FAILED,FAILED,FAILED\n";
    }
  }
  for (const auto& g : result.groups) {
    out += "agg," + g.preset + "," + std::string(to_string(kind)) + "," + format_fixed(g.noise_ratio) +
           ",mean+-std," + metric_cell(g.mean.final_acc, g.stddev.final_acc) + "," +
           metric_cell(g.mean.best_acc, g.stddev.best_acc) + "," +
           metric_cell(g.mean.mean_acc_last10, g.stddev.mean_acc_last10) + "\n";
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string_view::npos) {
    const auto lo = parse_u64(text.substr(0, dots));
    const auto hi = parse_u64(text.substr(dots + 2));
    if (hi < lo) throw ArgumentError("empty seed range '" + std::string(text) + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = std::min(text.find(',', start), text.size());
    seeds.push_back(parse_u64(text.substr(start, comma - start)));
    start = comma + 1;
  }
  return seeds;
}

GridResult run_grid(const GridSpec& spec) {
  if (spec.presets.empty() || spec.ratios.empty() || spec.seeds.empty()) {
    throw ConfigError({"grid axes must be nonempty (presets, ratios, seeds)"});
  }
  for (double r : spec.ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError({"noise ratio " + format_fixed(r) + " outside [0, 1]"});

  struct Job {
    ExperimentConfig config;
    GridCell cell;
  };
  std::vector<Job> jobs;
  for (const auto& preset : spec.presets) {
    const ExperimentConfig base = parse_experiment_text(with_preset(spec.base_text, preset));
    for (double ratio : spec.ratios) {
      for (auto seed : spec.seeds) {
        Job job{base, {}};
        job.config.noise.ratio = ratio;
        apply_seed(job.config, seed);
        job.cell.preset = preset;
        job.cell.noise_kind = base.noise.kind;
        job.cell.noise_ratio = ratio;
        job.cell.seed = seed;
        job.cell.run_id = preset + "-r" + ratio_tag(ratio) + "-s" + std::to_string(seed);
        jobs.push_back(std::move(job));
      }
    }
  }

  auto run_one = [&spec](Job& job) {
    const auto dir = spec.out / job.cell.run_id;
    try {
      const RunResult r = run_experiment(job.config, dir);
      job.cell.metrics = cell_metrics(r.report);
      job.cell.ok = true;
    } catch (const std::exception& e) {
      job.cell.ok = false;
      job.cell.error = e.what();
      try {
        write_file_atomic(dir / "error.txt", job.cell.error + "\n");
      } catch (const std::exception&) {
      }
    }
  };

  const int workers = std::max(1, std::min<int>(spec.parallel, static_cast<int>(jobs.size())));
  if (workers == 1) {
    for (auto& job : jobs) run_one(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) run_one(jobs[i]);
      });
    }
    for (auto& t : pool) t.join();
  }

  GridResult result;
  for (auto& job : jobs) result.cells.push_back(std::move(job.cell));
  result.groups = aggregate(result.cells);
  write_file_atomic(spec.out / "summary.csv", summary_csv(result));
  return result;
}

}  // namespace nlw
