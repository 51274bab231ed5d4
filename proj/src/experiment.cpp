#include "nlw/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "nlw/errors.hpp"

namespace nlw {
namespace {

template <typename E>
using EnumTable = std::vector<std::pair<std::string_view, E>>;

const EnumTable<SelectorKind> kSelectorKinds{{"gmm", SelectorKind::gmm},
                                             {"spd", SelectorKind::spd},
                                             {"small_loss", SelectorKind::small_loss},
                                             {"oracle", SelectorKind::oracle}};
const EnumTable<BackboneKind> kBackboneKinds{{"ce_only", BackboneKind::ce_only},
                                             {"temporal_ensembling", BackboneKind::temporal_ensembling},
                                             {"mixmatch", BackboneKind::mixmatch},
                                             {"pseudo_label", BackboneKind::pseudo_label}};
const EnumTable<Schedule> kSchedules{{"mini_batch", Schedule::mini_batch}, {"epoch_level", Schedule::epoch_level}};
const EnumTable<NetworkMode> kNetworkModes{{"single", NetworkMode::single}, {"dual", NetworkMode::dual}};
const EnumTable<NoiseKind> kNoiseKinds{{"symmetric", NoiseKind::symmetric}, {"asymmetric", NoiseKind::asymmetric}};
const EnumTable<DataKind> kDataKinds{{"two_moons", DataKind::two_moons}, {"idx", DataKind::idx}};

template <typename E>
std::string_view enum_name(const EnumTable<E>& table, E value) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "?";
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Error = std::optional<std::string>;

template <typename T>
Error parse_value(std::string_view text, T& out) {
  if constexpr (std::is_same_v<T, std::string>) {
    out = std::string(text);
    return std::nullopt;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true") out = true;
    else if (text == "false") out = false;
    else return "expected true or false, got '" + std::string(text) + "'";
    return std::nullopt;
  } else {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      return std::string(std::is_floating_point_v<T> ? "expected a number" : "expected an integer") + ", got '" +
             std::string(text) + "'";
    }
    out = value;
    return std::nullopt;
  }
}

template <typename T>
std::string print_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  } else {
    return std::to_string(v);
  }
}

struct Field {
  std::string key;
  std::function<Error(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(ExperimentConfig&)> get;
};

template <typename Ref>
Field scalar(std::string key, Ref ref, std::function<bool(double)> ok = {}, std::string requirement = {}) {
  Field f;
  f.key = key;
  f.set = [ref, ok, requirement](ExperimentConfig& c, std::string_view text) -> Error {
    auto& target = ref(c);
    std::remove_reference_t<decltype(target)> value{};
    if (auto err = parse_value(text, value)) return err;
    if constexpr (std::is_arithmetic_v<decltype(value)>) {
      if (ok && !ok(static_cast<double>(value))) return "must " + requirement + ", got " + std::string(text);
    }
    target = value;
    return std::nullopt;
  };
  f.get = [ref](ExperimentConfig& c) { return print_value(ref(c)); };
  return f;
}

template <typename E, typename Ref>
Field enumeration(std::string key, const EnumTable<E>& table, Ref ref) {
  Field f;
  f.key = key;
  f.set = [&table, ref](ExperimentConfig& c, std::string_view text) -> Error {
    for (const auto& [name, v] : table) {
      if (name == text) {
        ref(c) = v;
        return std::nullopt;
      }
    }
    std::string allowed;
    for (const auto& [name, v] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    return "unknown value '" + std::string(text) + "' (expected one of: " + allowed + ")";
  };
  f.get = [&table, ref](ExperimentConfig& c) { return std::string(enum_name(table, ref(c))); };
  return f;
}

auto positive = [](double v) { return v > 0; };
auto nonneg = [](double v) { return v >= 0; };
auto unit_closed = [](double v) { return v >= 0 && v <= 1; };
auto unit_open = [](double v) { return v > 0 && v < 1; };

Field class_map_field() {
  Field f;
  f.key = "noise.class_map";
  f.set = [](ExperimentConfig& c, std::string_view text) -> Error {
    if (text == "none") {
      c.noise.class_map.reset();
      return std::nullopt;
    }
    std::map<int, int> edges;
    int max_class = -1;
    std::string item;
    std::stringstream ss{std::string(text)};
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      int from = 0, to = 0;
      if (colon == std::string::npos || parse_value(trim(std::string_view(item).substr(0, colon)), from) ||
          parse_value(trim(std::string_view(item).substr(colon + 1)), to) || from < 0 || to < 0) {
        return "expected 'none' or comma-separated from:to pairs, got '" + std::string(text) + "'";
      }
      if (from == to) return "class " + std::to_string(from) + " mapped onto itself";
      edges[from] = to;
      max_class = std::max({max_class, from, to});
    }
    if (edges.empty()) return "class_map is empty";
    // Sized to the largest class mentioned; load_data pads it to the class count.
    std::vector<int> map(static_cast<std::size_t>(max_class + 1), -1);
    for (const auto& [from, to] : edges) map[static_cast<std::size_t>(from)] = to;
    c.noise.class_map = std::move(map);
    return std::nullopt;
  };
  f.get = [](ExperimentConfig& c) -> std::string {
    if (!c.noise.class_map) return "none";
    std::string out;
    for (std::size_t i = 0; i < c.noise.class_map->size(); ++i) {
      const int to = (*c.noise.class_map)[i];
      if (to < 0) continue;
      out += (out.empty() ? "" : ",") + std::to_string(i) + ":" + std::to_string(to);
    }
    return out.empty() ? "none" : out;
  };
  return f;
}

Field fixed_lambda_field() {
  Field f;
  f.key = "backbone.fixed_lambda";
  f.set = [](ExperimentConfig& c, std::string_view text) -> Error {
    if (text == "none") {
      c.run.backbone.fixed_lambda.reset();
      return std::nullopt;
    }
    double v = 0;
    if (auto err = parse_value(text, v)) return err;
    if (!(v >= 0 && v <= 1)) return "must lie in [0, 1] or be none, got " + std::string(text);
    c.run.backbone.fixed_lambda = v;
    return std::nullopt;
  };
  f.get = [](ExperimentConfig& c) {
    return c.run.backbone.fixed_lambda ? print_value(*c.run.backbone.fixed_lambda) : std::string("none");
  };
  return f;
}

#define NLW_REF(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back(enumeration("data.kind", kDataKinds, NLW_REF(data.kind)));
    t.push_back(scalar("data.n", NLW_REF(data.n), [](double v) { return v >= 2; }, "be at least 2"));
    t.push_back(scalar("data.test_n", NLW_REF(data.test_n), [](double v) { return v >= 2; }, "be at least 2"));
    t.push_back(scalar("data.jitter", NLW_REF(data.jitter), nonneg, "be nonnegative"));
    t.push_back(scalar("data.seed", NLW_REF(data.seed)));
    t.push_back(scalar("data.dir", NLW_REF(data.dir)));
    t.push_back(scalar("data.max_train", NLW_REF(data.max_train), nonneg, "be nonnegative"));
    t.push_back(scalar("data.max_test", NLW_REF(data.max_test), nonneg, "be nonnegative"));

    t.push_back(enumeration("noise.kind", kNoiseKinds, NLW_REF(noise.kind)));
    t.push_back(scalar("noise.ratio", NLW_REF(noise.ratio), unit_closed, "lie in [0, 1]"));
    t.push_back(scalar("noise.seed", NLW_REF(noise.seed)));
    t.push_back(scalar("noise.include_self", NLW_REF(noise.include_self)));
    t.push_back(class_map_field());

    t.push_back(scalar("model.hidden", NLW_REF(run.hidden), [](double v) { return v >= 1; }, "be at least 1"));
    t.push_back(scalar("model.lr", NLW_REF(run.optimizer.lr), positive, "be positive"));
    t.push_back(scalar("model.momentum", NLW_REF(run.optimizer.momentum), [](double v) { return v >= 0 && v < 1; },
                       "lie in [0, 1)"));
    t.push_back(scalar("model.weight_decay", NLW_REF(run.optimizer.weight_decay), nonneg, "be nonnegative"));

    t.push_back(enumeration("selector.kind", kSelectorKinds, NLW_REF(run.selector.kind)));
    t.push_back(scalar("selector.clean_threshold", NLW_REF(run.selector.clean_threshold), unit_open, "lie in (0, 1)"));
    t.push_back(scalar("selector.keep_fraction", NLW_REF(run.selector.keep_fraction),
                       [](double v) { return v > 0 && v <= 1; }, "lie in (0, 1]"));
    t.push_back(scalar("selector.em_tol", NLW_REF(run.selector.em_tol), positive, "be positive"));
    t.push_back(scalar("selector.em_max_iter", NLW_REF(run.selector.em_max_iter), [](double v) { return v >= 1; },
                       "be at least 1"));
    t.push_back(scalar("selector.window", NLW_REF(run.selector.window)));

    t.push_back(enumeration("backbone.kind", kBackboneKinds, NLW_REF(run.backbone.kind)));
    t.push_back(scalar("backbone.lambda_u", NLW_REF(run.backbone.lambda_u), nonneg, "be nonnegative"));
    t.push_back(scalar("backbone.ema_decay", NLW_REF(run.backbone.ema_decay), [](double v) { return v >= 0 && v < 1; },
                       "lie in [0, 1)"));
    t.push_back(scalar("backbone.sharpen_T", NLW_REF(run.backbone.sharpen_T), positive, "be positive"));
    t.push_back(scalar("backbone.mixup_alpha", NLW_REF(run.backbone.mixup_alpha), positive, "be positive"));
    t.push_back(scalar("backbone.k_augment", NLW_REF(run.backbone.k_augment), [](double v) { return v >= 1; },
                       "be at least 1"));
    t.push_back(scalar("backbone.jitter_std", NLW_REF(run.backbone.jitter_std), nonneg, "be nonnegative"));
    t.push_back(scalar("backbone.min_labeled_per_batch", NLW_REF(run.backbone.min_labeled_per_batch), nonneg,
                       "be nonnegative"));
    t.push_back(scalar("backbone.ramp_epochs", NLW_REF(run.backbone.ramp_epochs), nonneg, "be nonnegative"));
    t.push_back(scalar("backbone.lambda_a", NLW_REF(run.backbone.lambda_a), nonneg, "be nonnegative"));
    t.push_back(scalar("backbone.lambda_h", NLW_REF(run.backbone.lambda_h), nonneg, "be nonnegative"));
    t.push_back(fixed_lambda_field());

    t.push_back(enumeration("engine.schedule", kSchedules, NLW_REF(run.schedule)));
    t.push_back(enumeration("engine.networks", kNetworkModes, NLW_REF(run.networks)));
    t.push_back(scalar("engine.epochs", NLW_REF(run.epochs), nonneg, "be nonnegative"));
    t.push_back(scalar("engine.batch_size", NLW_REF(run.batch_size), [](double v) { return v >= 1; }, "be at least 1"));
    t.push_back(scalar("engine.warmup_epochs", NLW_REF(run.warmup_epochs), nonneg, "be nonnegative"));
    t.push_back(scalar("engine.seed", NLW_REF(run.seed)));
    return t;
  }();
  return table;
}

#undef NLW_REF

const Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

struct Line {
  int number;
  std::string key;
  std::string value;
};

}  // namespace

std::string_view to_string(SelectorKind k) { return enum_name(kSelectorKinds, k); }
std::string_view to_string(BackboneKind k) { return enum_name(kBackboneKinds, k); }
std::string_view to_string(Schedule s) { return enum_name(kSchedules, s); }
std::string_view to_string(NetworkMode m) { return enum_name(kNetworkModes, m); }
std::string_view to_string(NoiseKind k) { return enum_name(kNoiseKinds, k); }

ExperimentConfig parse_experiment_text(std::string_view text) {
  std::vector<std::string> problems;
  std::vector<Line> lines;
  std::map<std::string, int> seen;

  std::istringstream in{std::string(text)};
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back("line " + std::to_string(number) + ": expected 'section.key = value'");
      continue;
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key != "engine.preset" && find_field(key) == nullptr) {
      problems.push_back("line " + std::to_string(number) + ": unknown key '" + key + "'");
      continue;
    }
    if (auto [it, inserted] = seen.emplace(key, number); !inserted) {
      problems.push_back("line " + std::to_string(number) + ": duplicate key '" + key + "' (first set on line " +
                         std::to_string(it->second) + ")");
      continue;
    }
    lines.push_back({number, std::move(key), std::move(value)});
  }

  ExperimentConfig config;
  for (const auto& l : lines) {
    if (l.key != "engine.preset") continue;
    try {
      config.run = instantiate(l.value);
    } catch (const ArgumentError& e) {
      problems.push_back("line " + std::to_string(l.number) + ": engine.preset: " + e.what());
    }
  }
  for (const auto& l : lines) {
    if (l.key == "engine.preset") continue;
    if (auto err = find_field(l.key)->set(config, l.value)) {
      problems.push_back("line " + std::to_string(l.number) + ": " + l.key + ": " + *err);
    }
  }

  if (problems.empty()) {
    auto cite = [&seen](std::initializer_list<const char*> keys) {
      for (const char* k : keys)
        if (auto it = seen.find(k); it != seen.end()) return "line " + std::to_string(it->second) + ": ";
      return std::string();
    };
    try {
      validate(config.run);
    } catch (const ConfigError& e) {
      for (const auto& p : e.problems()) {
        const bool dual_issue = p.find("dual") != std::string::npos;
        problems.push_back((dual_issue ? cite({"engine.networks", "selector.kind", "engine.preset"}) : std::string()) + p);
      }
    }
    if (config.data.kind == DataKind::two_moons && (config.data.n % 2 != 0 || config.data.test_n % 2 != 0)) {
      problems.push_back(cite({"data.n", "data.test_n"}) + "two_moons sizes must be even");
    }
  }
  if (!problems.empty()) {
    auto line_of = [](const std::string& p) {
      int n = 0;
      if (p.rfind("line ", 0) != 0 || std::from_chars(p.data() + 5, p.data() + p.size(), n).ec != std::errc()) {
        return std::numeric_limits<int>::max();
      }
      return n;
    };
    std::stable_sort(problems.begin(), problems.end(),
                     [&](const std::string& a, const std::string& b) { return line_of(a) < line_of(b); });
    throw ConfigError(std::move(problems));
  }
  return config;
}

ExperimentConfig parse_experiment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"cannot read experiment file " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_text(ss.str());
}

std::string serialize_experiment(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::string out;
  if (!copy.run.preset.empty()) out += "engine.preset = " + copy.run.preset + "\n";
  std::string section;
  for (const auto& f : fields()) {
    const auto this_section = f.key.substr(0, f.key.find('.'));
    if (this_section != section) {
      out += "\n# " + this_section + "\n";
      section = this_section;
    }
    out += f.key + " = " + f.get(copy) + "\n";
  }
  return out;
}

LoadedData load_data(const DataConfig& data, const NoiseSpec& noise) {
  LoadedData out;
  if (data.kind == DataKind::two_moons) {
    out.train = gen_two_moons(data.n, data.jitter, data.seed);
    out.test = gen_two_moons(data.test_n, data.jitter, derive_seed(data.seed, 1));
  } else {
    std::filesystem::path dir = data.dir;
    if (dir.empty()) {
      const char* env = std::getenv("WORKBENCH_DATA_DIR");
      if (env == nullptr || *env == '\0') {
        throw ConfigError({"data.dir is empty and WORKBENCH_DATA_DIR is not set"});
      }
      dir = env;
    }
    out.train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    out.test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    auto head = [](const Dataset& d, Index limit) {
      if (limit <= 0 || limit >= d.size()) return d;
      std::vector<Index> rows(static_cast<std::size_t>(limit));
      for (Index i = 0; i < limit; ++i) rows[static_cast<std::size_t>(i)] = i;
      return d.subset(rows);
    };
    out.train = head(out.train, data.max_train);
    out.test = head(out.test, data.max_test);
  }

  NoiseSpec spec = noise;
  if (spec.kind == NoiseKind::asymmetric) {
    auto map = spec.class_map ? *spec.class_map : default_asymmetric_map(out.train.num_classes());
    if (map.size() > static_cast<std::size_t>(out.train.num_classes())) {
      throw ConfigError({"noise.class_map names a class outside the dataset"});
    }
    map.resize(static_cast<std::size_t>(out.train.num_classes()), -1);
    spec.class_map = std::move(map);
  }
  out.train = inject_noise(out.train, spec);
  return out;
}

}  // namespace nlw
