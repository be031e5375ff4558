#include "fabg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <omp.h>

#include "fabg/random.hpp"

namespace fabg {


using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

LatencyModel LatencyEntry::resolve(double rate_hz) const {
  if (ticks) return *ticks;
  if (seconds) return latency_from_seconds(*seconds, rate_hz);
  return {};
}

std::string latency_label(const LatencyModel& l) {
  return "p" + std::to_string(l.perception) + "_i" + std::to_string(l.inference) + "_c" +
         std::to_string(l.communication);
}

StrategyConfig StrategyEntry::resolve(const LatencyModel& latency, double rate_hz) const {
  StrategyConfig c = config;
  if (auto_offset && c.kind == StrategyKind::kPDLC) c.pdlc_offset = compute_offset(latency, rate_hz, sources);
  return c;
}

namespace {

using namespace json_util;

StrategyEntry parse_strategy(const json& j, const std::string& path) {
  check_keys(j, path, {"kind", "k", "m", "n", "compensate"});
  StrategyEntry e;
  const std::string kp = member(path, "kind");
  try {
    e.config.kind = parse_strategy_kind(string(require(j, "kind", path), kp));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(kp, ex.what());
  }
  if (j.contains("k")) e.config.k = static_cast<std::size_t>(ranged(j["k"], member(path, "k"), 1, 4096));
  if (j.contains("m")) {
    e.config.te_decay = number(j["m"], member(path, "m"));
    if (e.config.te_decay < 0.0) throw ConfigError(member(path, "m"), "must be >= 0");
  }
  if (j.contains("n")) {
    const std::string np = member(path, "n");
    if (j["n"].is_string()) {
      if (j["n"].get<std::string>() != "auto") throw ConfigError(np, "expected an integer or \"auto\"");
      e.auto_offset = true;
    } else {
      e.config.pdlc_offset = static_cast<int>(ranged(j["n"], np, 0, 4096));
      if (static_cast<std::size_t>(e.config.pdlc_offset) >= e.config.k) {
        throw ConfigError(np, "PDLC offset n = " + std::to_string(e.config.pdlc_offset) + " must be < k = " +
                                  std::to_string(e.config.k));
      }
    }
  }
  if (j.contains("compensate")) {
    const auto& c = j["compensate"];
    const std::string cp = member(path, "compensate");
    check_keys(c, cp, {"perception", "inference", "communication"});
    e.sources.perception = boolean_or(c, "perception", cp, true);
    e.sources.inference = boolean_or(c, "inference", cp, true);
    e.sources.communication = boolean_or(c, "communication", cp, true);
  }
  return e;
}

LatencyEntry parse_latency(const json& j, const std::string& path) {
  check_keys(j, path, {"unit", "perception", "inference", "communication"});
  std::string unit = "ticks";
  if (j.contains("unit")) unit = string(j["unit"], member(path, "unit"));
  LatencyEntry e;
  if (unit == "ticks") {
    LatencyModel m;
    const auto tick = [&](const char* key) {
      return j.contains(key) ? static_cast<int>(ranged(j[key], member(path, key), 0, 100000)) : 0;
    };
    m.perception = tick("perception");
    m.inference = tick("inference");
    m.communication = tick("communication");
    e.ticks = m;
  } else if (unit == "seconds") {
    LatencySeconds s;
    const auto sec = [&](const char* key) {
      const double v = number_or(j, key, path, 0.0);
      if (v < 0.0) throw ConfigError(member(path, key), "must be >= 0");
      return v;
    };
    s.perception = sec("perception");
    s.inference = sec("inference");
    s.communication = sec("communication");
    e.seconds = s;
  } else {
    throw ConfigError(member(path, "unit"), "expected \"ticks\" or \"seconds\"");
  }
  return e;
}

PerceptionConfig parse_perception(const json& j, const std::string& path) {
  check_keys(j, path, {"sigma", "radius", "invalid_fill", "rgb_seed", "depth_seed", "max_range", "stem_channels",
                       "mid_channels"});
  PerceptionConfig p;
  p.sigma = number_or(j, "sigma", path, p.sigma);
  if (!(p.sigma > 0.0)) throw ConfigError(member(path, "sigma"), "must be > 0");
  if (j.contains("radius")) p.radius = static_cast<int>(ranged(j["radius"], member(path, "radius"), 1, 64));
  p.invalid_fill = number_or(j, "invalid_fill", path, p.invalid_fill);
  if (j.contains("rgb_seed")) p.rgb_seed = unsigned_integer(j["rgb_seed"], member(path, "rgb_seed"));
  if (j.contains("depth_seed")) p.depth.seed = unsigned_integer(j["depth_seed"], member(path, "depth_seed"));
  p.depth.max_range = number_or(j, "max_range", path, p.depth.max_range);
  if (!(p.depth.max_range > 0.0)) throw ConfigError(member(path, "max_range"), "must be > 0");
  if (j.contains("stem_channels")) {
    p.depth.stem_channels = static_cast<int>(ranged(j["stem_channels"], member(path, "stem_channels"), 1, 256));
  }
  if (j.contains("mid_channels")) {
    p.depth.mid_channels = static_cast<int>(ranged(j["mid_channels"], member(path, "mid_channels"), 1, 256));
  }
  return p;
}

PolicyChoice parse_policy(const json& j, const std::string& path) {
  expect_object(j, path);
  PolicyChoice p;
  const std::string type = j.contains("type") ? string(j["type"], member(path, "type")) : "oracle";
  if (type == "oracle") {
    check_keys(j, path, {"type", "noise_sigma", "foresight"});
    p.type = PolicyType::kOracle;
    p.noise_sigma = number_or(j, "noise_sigma", path, 0.0);
    if (p.noise_sigma < 0.0) throw ConfigError(member(path, "noise_sigma"), "must be >= 0");
    if (j.contains("foresight")) {
      const auto& f = j["foresight"];
      const std::string fp = member(path, "foresight");
      if (f.is_null()) {
        p.foresight = ForesightMode::kUnlimited;
      } else if (f.is_string()) {
        const auto s = f.get<std::string>();
        if (s == "unlimited") {
          p.foresight = ForesightMode::kUnlimited;
        } else if (s == "latency") {
          p.foresight = ForesightMode::kLatency;
        } else {
          throw ConfigError(fp, "expected an integer, \"latency\" or \"unlimited\"");
        }
      } else {
        p.foresight = ForesightMode::kFixed;
        p.foresight_ticks = static_cast<int>(ranged(f, fp, 0, 1 << 24));
      }
    }
  } else if (type == "learned") {
    check_keys(j, path, {"type", "train_episodes", "stride", "lambda", "learning_rate", "epochs", "standardize",
                         "corpus", "perception"});
    p.type = PolicyType::kLearned;
    if (j.contains("train_episodes")) {
      p.train_episodes = static_cast<int>(ranged(j["train_episodes"], member(path, "train_episodes"), 1, 100000));
    }
    if (j.contains("stride")) p.stride = static_cast<std::size_t>(ranged(j["stride"], member(path, "stride"), 1, 100000));
    p.train.lambda = number_or(j, "lambda", path, p.train.lambda);
    if (p.train.lambda < 0.0) throw ConfigError(member(path, "lambda"), "must be >= 0");
    p.train.learning_rate = number_or(j, "learning_rate", path, p.train.learning_rate);
    if (!(p.train.learning_rate > 0.0)) throw ConfigError(member(path, "learning_rate"), "must be > 0");
    if (j.contains("epochs")) p.train.epochs = static_cast<int>(ranged(j["epochs"], member(path, "epochs"), 0, 10000000));
    p.train.standardize = boolean_or(j, "standardize", path, p.train.standardize);
    if (j.contains("corpus")) p.corpus = corpus_options_from_json(j["corpus"], member(path, "corpus"));
    p.corpus.observations = true;
    if (j.contains("perception")) p.perception = parse_perception(j["perception"], member(path, "perception"));
  } else {
    throw ConfigError(member(path, "type"), "expected \"oracle\" or \"learned\"");
  }
  return p;
}

MetricOptions parse_metrics(const json& j, const std::string& path) {
  check_keys(j, path, {"all_dims", "response_threshold", "completion_lo", "completion_hi", "per_dim"});
  MetricOptions m;
  m.all_dims = boolean_or(j, "all_dims", path, m.all_dims);
  m.per_dim = boolean_or(j, "per_dim", path, m.per_dim);
  m.response_threshold = number_or(j, "response_threshold", path, m.response_threshold);
  m.completion_lo = number_or(j, "completion_lo", path, m.completion_lo);
  m.completion_hi = number_or(j, "completion_hi", path, m.completion_hi);
  try {
    validate_metric_options(m);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return m;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  const std::string root = "$";
  check_keys(j, root, {"seed", "trials", "scenarios", "strategies", "latencies", "policy", "metrics", "executor",
                       "write_traces", "output_dir"});
  ExperimentConfig c;
  if (j.contains("seed")) c.seed = unsigned_integer(j["seed"], "$.seed");
  if (j.contains("trials")) c.trials = static_cast<int>(ranged(j["trials"], "$.trials", 1, 100000));
  c.write_traces = boolean_or(j, "write_traces", root, true);
  if (j.contains("output_dir")) c.output_dir = string(j["output_dir"], "$.output_dir");

  const auto& scenarios = require(j, "scenarios", root);
  if (!scenarios.is_array() || scenarios.empty()) throw ConfigError("$.scenarios", "expected a non-empty array");
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    c.scenarios.push_back(scenario_from_json(scenarios[i], element("$.scenarios", i)));
  }
  const auto& strategies = require(j, "strategies", root);
  if (!strategies.is_array() || strategies.empty()) throw ConfigError("$.strategies", "expected a non-empty array");
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    c.strategies.push_back(parse_strategy(strategies[i], element("$.strategies", i)));
  }
  if (j.contains("latencies")) {
    const auto& lat = j["latencies"];
    if (!lat.is_array() || lat.empty()) throw ConfigError("$.latencies", "expected a non-empty array");
    for (std::size_t i = 0; i < lat.size(); ++i) c.latencies.push_back(parse_latency(lat[i], element("$.latencies", i)));
  } else {
    c.latencies.push_back(LatencyEntry{LatencyModel{}, std::nullopt});
  }
  if (j.contains("policy")) c.policy = parse_policy(j["policy"], "$.policy");
  if (j.contains("metrics")) c.metrics = parse_metrics(j["metrics"], "$.metrics");
  if (j.contains("executor")) {
    check_keys(j["executor"], "$.executor", {"prime_pipeline"});
    c.executor.prime_pipeline = boolean_or(j["executor"], "prime_pipeline", "$.executor", true);
  }

  // Resolved PDLC offsets must fit every chunk under every latency/rate.
  for (std::size_t s = 0; s < c.strategies.size(); ++s) {
    const auto& e = c.strategies[s];
    if (!e.auto_offset || e.config.kind != StrategyKind::kPDLC) continue;
    for (std::size_t l = 0; l < c.latencies.size(); ++l) {
      for (const auto& sc : c.scenarios) {
        const StrategyConfig r = e.resolve(c.latencies[l].resolve(sc.rate_hz), sc.rate_hz);
        if (static_cast<std::size_t>(r.pdlc_offset) >= r.k) {
          throw ConfigError(element("$.strategies", s) + ".n",
                            "auto offset n = " + std::to_string(r.pdlc_offset) + " for latencies[" +
                                std::to_string(l) + "] must be < k = " + std::to_string(r.k));
        }
      }
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("$", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Summary CSV

namespace {
// Labels contain commas, e.g. PDLC(k=20,n=3); quote them in CSV.
std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string summary_csv_header() {
  return "cell,scenario_index,scenario,strategy_index,strategy,label,latency_index,latency,trial,seed,status," +
         metric_csv_header();
}

std::string summary_csv_row(const SummaryRow& r) {
  std::string out = std::to_string(r.cell) + "," + std::to_string(r.scenario_index) + "," + r.scenario + "," +
                    std::to_string(r.strategy_index) + "," + r.strategy + "," + csv_quote(r.label) + "," +
                    std::to_string(r.latency_index) + "," + r.latency + "," + std::to_string(r.trial) + "," +
                    std::to_string(r.seed) + "," + (r.ok ? "ok" : "failed") + ",";
  if (r.ok) return out + metric_csv_row(r.metrics);
  return out + "NA,NA,NA,NA,NA,NA,NA";
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::optional<double> parse_optional(const std::string& s, const std::string& where) {
  if (s == "NA") return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::runtime_error(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path.string() + ": empty file");
  const auto header = parse_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : {"scenario_index", "scenario", "strategy", "latency", "trial", "status", "dtw",
                           "response_latency_s", "completion_time_s"}) {
    if (!col.count(name)) throw std::runtime_error(path.string() + ": missing column " + std::string(name));
  }
  const auto get = [&](const std::vector<std::string>& cells, const std::string& name) -> std::string {
    auto it = col.find(name);
    return it == col.end() ? std::string() : cells[it->second];
  };
  std::vector<SummaryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = parse_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != header.size()) throw std::runtime_error(where + ": wrong number of cells");
    SummaryRow r;
    try {
      r.cell = col.count("cell") ? std::stoul(get(cells, "cell")) : rows.size();
      r.scenario_index = std::stoul(get(cells, "scenario_index"));
      r.strategy_index = col.count("strategy_index") ? std::stoul(get(cells, "strategy_index")) : 0;
      r.latency_index = col.count("latency_index") ? std::stoul(get(cells, "latency_index")) : 0;
      r.trial = std::stoi(get(cells, "trial"));
      r.seed = col.count("seed") ? std::stoull(get(cells, "seed")) : 0;
    } catch (const std::logic_error&) {
      throw std::runtime_error(where + ": bad integer field");
    }
    r.scenario = get(cells, "scenario");
    r.strategy = get(cells, "strategy");
    r.label = get(cells, "label");
    r.latency = get(cells, "latency");
    r.ok = get(cells, "status") == "ok";
    if (r.ok) {
      r.metrics.dtw = parse_optional(get(cells, "dtw"), where).value_or(0.0);
      r.metrics.response_latency_s = parse_optional(get(cells, "response_latency_s"), where);
      r.metrics.completion_time_s = parse_optional(get(cells, "completion_time_s"), where);
      for (auto [name, slot] : {std::pair{"max_boundary_jump", &r.metrics.max_boundary_jump},
                                std::pair{"max_within_jump", &r.metrics.max_within_jump},
                                std::pair{"smoothness", &r.metrics.smoothness},
                                std::pair{"max_abs_error", &r.metrics.max_abs_error}}) {
        if (col.count(name)) *slot = parse_optional(get(cells, name), where).value_or(0.0);
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Comparison

std::optional<double> percent_reduction(double baseline, double pdlc) {
  if (baseline == 0.0 || !std::isfinite(baseline) || !std::isfinite(pdlc)) return std::nullopt;
  const double pct = (baseline - pdlc) / baseline * 100.0;
  return std::round(pct * 10.0) / 10.0;
}

MetricComparison compare_metric(const std::string& metric, std::optional<double> pdlc, std::optional<double> note,
                                std::optional<double> te, const std::vector<std::string>& expected) {
  MetricComparison m;
  m.metric = metric;
  m.pdlc = pdlc;
  m.note = note;
  m.te = te;
  for (std::size_t i = 0; i < expected.size(); ++i) m.expected += (i ? " < " : "") + expected[i];
  if (!pdlc || !note || !te) {
    m.comparable = false;
    m.observed = "not comparable (not detected)";
    return m;
  }
  std::vector<std::pair<double, std::string>> v{{*pdlc, "PDLC"}, {*note, "NoTE"}, {*te, "TE"}};
  // Stable on the expected order so ties print in expected order.
  std::stable_sort(v.begin(), v.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    const auto ia = std::find(expected.begin(), expected.end(), a.second) - expected.begin();
    const auto ib = std::find(expected.begin(), expected.end(), b.second) - expected.begin();
    return ia < ib;
  });
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) {
      const bool equal = v[i].first == v[i - 1].first;
      m.tie = m.tie || equal;
      m.observed += equal ? " = " : " < ";
    }
    m.observed += v[i].second;
  }
  m.matches = !m.tie && m.observed == m.expected;
  // Any strictly reversed pair relative to the expected order.
  const auto value_of = [&](const std::string& name) {
    return name == "PDLC" ? *pdlc : name == "NoTE" ? *note : *te;
  };
  for (std::size_t i = 0; i < expected.size(); ++i)
    for (std::size_t j = i + 1; j < expected.size(); ++j)
      if (value_of(expected[i]) > value_of(expected[j])) m.contradiction = true;
  m.reduction_vs_note = percent_reduction(*note, *pdlc);
  m.reduction_vs_te = percent_reduction(*te, *pdlc);
  return m;
}

bool GroupComparison::flagged() const {
  return std::any_of(metrics.begin(), metrics.end(),
                     [](const MetricComparison& m) { return m.tie || m.contradiction || !m.comparable; });
}

std::vector<GroupComparison> compare_strategies(const std::vector<SummaryRow>& rows) {
  struct Key {
    std::size_t scenario;
    std::string latency;
    bool operator<(const Key& o) const { return std::tie(scenario, latency) < std::tie(o.scenario, o.latency); }
  };
  struct Acc {
    std::vector<double> dtw, response, completion;
    std::size_t strategy_index = 0;
    bool seen = false;
  };
  std::map<Key, std::map<std::string, Acc>> groups;
  std::map<Key, std::string> names;
  std::vector<Key> order;
  for (const auto& r : rows) {
    const Key key{r.scenario_index, r.latency};
    if (!groups.count(key)) order.push_back(key);
    names[key] = r.scenario;
    auto& acc = groups[key][r.strategy];
    // With several entries of one kind, the first strategy index wins.
    if (acc.seen && acc.strategy_index != r.strategy_index) continue;
    acc.seen = true;
    acc.strategy_index = r.strategy_index;
    if (!r.ok) continue;
    acc.dtw.push_back(r.metrics.dtw);
    if (r.metrics.response_latency_s) acc.response.push_back(*r.metrics.response_latency_s);
    if (r.metrics.completion_time_s) acc.completion.push_back(*r.metrics.completion_time_s);
  }
  const auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  std::vector<GroupComparison> out;
  for (const auto& key : order) {
    auto& g = groups[key];
    for (const char* kind : {"PDLC", "NoTE", "TE"}) {
      if (!g.count(kind)) {
        throw MissingStrategyError("scenario " + std::to_string(key.scenario) + " (" + names[key] + "), latency " +
                                   key.latency + ": missing " + kind + " rows");
      }
    }
    GroupComparison c;
    c.scenario_index = key.scenario;
    c.scenario = names[key];
    c.latency = key.latency;
    c.metrics.push_back(compare_metric("dtw", mean(g["PDLC"].dtw), mean(g["NoTE"].dtw), mean(g["TE"].dtw),
                                       {"PDLC", "NoTE", "TE"}));
    c.metrics.push_back(compare_metric("response_latency_s", mean(g["PDLC"].response), mean(g["NoTE"].response),
                                       mean(g["TE"].response), {"PDLC", "TE", "NoTE"}));
    c.metrics.push_back(compare_metric("completion_time_s", mean(g["PDLC"].completion), mean(g["NoTE"].completion),
                                       mean(g["TE"].completion), {"PDLC", "NoTE", "TE"}));
    out.push_back(std::move(c));
  }
  return out;
}

json to_json(const GroupComparison& g) {
  json metrics = json::array();
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& m : g.metrics) {
    metrics.push_back({{"metric", m.metric},
                       {"PDLC", opt(m.pdlc)},
                       {"NoTE", opt(m.note)},
                       {"TE", opt(m.te)},
                       {"expected", m.expected},
                       {"observed", m.observed},
                       {"comparable", m.comparable},
                       {"matches", m.matches},
                       {"tie", m.tie},
                       {"contradiction", m.contradiction},
                       {"reduction_vs_note_pct", opt(m.reduction_vs_note)},
                       {"reduction_vs_te_pct", opt(m.reduction_vs_te)}});
  }
  return {{"scenario_index", g.scenario_index}, {"scenario", g.scenario}, {"latency", g.latency}, {"metrics", metrics}};
}

std::string format_comparisons(const std::vector<GroupComparison>& groups) {
  std::ostringstream os;
  const auto num = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
  const auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("NA");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", *v);
    return std::string(buf);
  };
  for (const auto& g : groups) {
    os << "scenario " << g.scenario_index << " (" << g.scenario << "), latency " << g.latency << "\n";
    for (const auto& m : g.metrics) {
      os << "  " << m.metric << ": PDLC " << num(m.pdlc) << ", NoTE " << num(m.note) << ", TE " << num(m.te)
         << "\n    observed " << m.observed << " | expected " << m.expected;
      if (m.comparable) os << " | reduction vs NoTE " << pct(m.reduction_vs_note) << ", vs TE " << pct(m.reduction_vs_te);
      if (m.tie) os << " [TIE]";
      if (m.contradiction) os << " [CONTRADICTION]";
      if (!m.comparable) os << " [NOT COMPARABLE]";
      os << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct CellPlan {
  std::size_t cell;
  std::size_t scenario;
  std::size_t strategy;
  std::size_t latency;
  int trial;
  std::uint64_t seed;
};

struct CellOutput {
  SummaryRow row;
  std::optional<ExecutionTrace> trace;
  std::string error;
};

std::string pad_index(std::size_t i, std::size_t width) {
  std::string s = std::to_string(i);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::optional<int> oracle_foresight(const PolicyChoice& p, const LatencyModel& latency) {
  switch (p.foresight) {
    case ForesightMode::kUnlimited: return std::nullopt;
    case ForesightMode::kLatency: return latency.total();
    case ForesightMode::kFixed: return p.foresight_ticks;
  }
  return std::nullopt;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                const RunOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
  if (config.write_traces) {
    std::filesystem::create_directories(out_dir / "traces", ec);
    if (ec) throw std::runtime_error("cannot create traces directory: " + ec.message());
  }

  // Scenes are shared by every cell of a scenario.
  std::vector<std::shared_ptr<const Episode>> scenes;
  for (const auto& spec : config.scenarios) scenes.push_back(std::make_shared<const Episode>(generate(spec)));

  // Learned policies: one model per (scenario, k), trained before any cell.
  ExperimentResult result;
  std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const LinearModel>> models;
  std::map<std::pair<std::size_t, std::size_t>, std::string> training_errors;
  json training = json::array();
  if (config.policy.type == PolicyType::kLearned) {
    const PerceptionPipeline perception(config.policy.perception);
    for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
      std::set<std::size_t> ks;
      for (const auto& e : config.strategies) ks.insert(e.config.k);
      std::vector<ScenarioSpec> specs;
      for (int i = 0; i < config.policy.train_episodes; ++i) {
        ScenarioSpec spec = config.scenarios[s];
        spec.seed = derive_seed(config.seed, s, 1000 + static_cast<std::uint64_t>(i));
        specs.push_back(spec);
      }
      try {
        const auto corpus = build_corpus(specs, config.policy.corpus);
        for (std::size_t k : ks) {
          try {
            const Dataset data = build_training_set(corpus, k, perception, config.policy.stride);
            auto model = std::make_shared<LinearModel>(train_linear_policy(data, k, config.policy.train));
            training.push_back({{"scenario_index", s},
                                {"k", k},
                                {"samples", data.size()},
                                {"initial_loss", model->info.initial_loss},
                                {"final_loss", model->info.final_loss},
                                {"epochs", model->info.epochs}});
            models[{s, k}] = std::move(model);
          } catch (const std::exception& e) {
            training_errors[{s, k}] = std::string("training failed: ") + e.what();
          }
        }
      } catch (const std::exception& e) {
        for (std::size_t k : ks) training_errors[{s, k}] = std::string("corpus failed: ") + e.what();
      }
    }
  }

  std::vector<CellPlan> plan;
  for (std::size_t s = 0; s < config.scenarios.size(); ++s)
    for (std::size_t st = 0; st < config.strategies.size(); ++st)
      for (std::size_t l = 0; l < config.latencies.size(); ++l)
        for (int t = 0; t < config.trials; ++t) {
          const std::size_t cell = plan.size();
          plan.push_back({cell, s, st, l, t, config.seed + cell});
        }

  std::vector<CellOutput> outputs(plan.size());
  const long long cells = static_cast<long long>(plan.size());
  const int threads = options.jobs > 0 ? options.jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long long i = 0; i < cells; ++i) {
    const CellPlan& p = plan[static_cast<std::size_t>(i)];
    CellOutput& out = outputs[static_cast<std::size_t>(i)];
    const ScenarioSpec& spec = config.scenarios[p.scenario];
    const LatencyModel latency = config.latencies[p.latency].resolve(spec.rate_hz);
    SummaryRow& row = out.row;
    row.cell = p.cell;
    row.scenario_index = p.scenario;
    row.scenario = std::string(scenario_name(spec.kind));
    row.strategy_index = p.strategy;
    row.strategy = std::string(strategy_name(config.strategies[p.strategy].config.kind));
    row.latency_index = p.latency;
    row.latency = latency_label(latency);
    row.trial = p.trial;
    row.seed = p.seed;
    try {
      const StrategyConfig strategy = config.strategies[p.strategy].resolve(latency, spec.rate_hz);
      row.label = strategy.label();
      validate_strategy(strategy);
      std::unique_ptr<ChunkPolicy> policy;
      std::shared_ptr<const Episode> scene = scenes[p.scenario];
      if (config.policy.type == PolicyType::kOracle) {
        OracleSpec os{scene, config.policy.noise_sigma, p.seed, oracle_foresight(config.policy, latency)};
        policy = std::make_unique<OraclePolicy>(os, strategy.k);
      } else {
        auto it = models.find({p.scenario, strategy.k});
        if (it == models.end()) throw std::runtime_error(training_errors[{p.scenario, strategy.k}]);
        policy = std::make_unique<LinearChunkPolicy>(*it->second, config.policy.perception);
        ScenarioSpec jittered = spec;
        jittered.seed = p.seed;
        CorpusOptions observed = config.policy.corpus;
        observed.jitter_sigma = 0.0;  // the scene itself stays noise-free
        scene = std::make_shared<const Episode>(build_corpus({jittered}, observed).front());
      }
      ExecutionTrace trace = execute(strategy, *policy, *scene, latency, config.executor);
      row.metrics = evaluate(trace, *scene, stimulus_for(spec), config.metrics);
      out.trace = std::move(trace);
    } catch (const std::exception& e) {
      row.ok = false;
      out.error = e.what();
    }
  }

  // Assemble deterministically in cell order.
  const std::size_t width = std::max<std::size_t>(4, std::to_string(plan.size()).size());
  std::string summary = summary_csv_header() + "\n";
  std::map<std::string, std::string> curves;  // dim name -> csv body
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    auto& out = outputs[i];
    summary += summary_csv_row(out.row) + "\n";
    if (!out.row.ok) result.failures.push_back({i, out.error});
    result.rows.push_back(out.row);
    if (!out.trace) continue;
    if (config.write_traces) {
      const std::string name = "traces/cell_" + pad_index(i, width) + ".csv";
      write_trace_csv(*out.trace, out_dir / name);
      result.files.push_back(name);
    }
    const auto& spec = config.scenarios[plan[i].scenario];
    const std::size_t dim = spec.driven_dim();
    std::string& body = curves[std::string(action_dim_name(dim))];
    const auto& demo = scenes[plan[i].scenario]->frames;
    for (std::size_t t = 0; t < out.trace->size(); ++t) {
      body += std::to_string(plan[i].scenario) + "," + out.row.scenario + "," + out.row.latency + "," +
              csv_quote(out.row.label) + "," + std::to_string(out.row.trial) + "," + std::to_string(t) + "," +
              format_number(demo[t][dim]) + "," + format_number(out.trace->commanded[t][dim]) + "\n";
    }
  }
  write_text(out_dir / "summary.csv", summary);
  result.files.insert(result.files.begin(), "summary.csv");
  for (const auto& [dim, body] : curves) {
    const std::string name = "curves_" + dim + ".csv";
    write_text(out_dir / name, "scenario_index,scenario,latency,strategy,trial,tick,demonstration,commanded\n" + body);
    result.files.push_back(name);
  }

  // Trial averages per (scenario, strategy, latency).
  {
    std::string avg =
        "scenario_index,scenario,strategy_index,strategy,label,latency_index,latency,trials_ok,dtw_mean,dtw_sem,"
        "response_latency_mean_s,response_detected,completion_time_mean_s,completion_detected,"
        "max_boundary_jump_mean,max_within_jump_mean,smoothness_mean,max_abs_error_mean\n";
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<const SummaryRow*>> groups;
    for (const auto& r : result.rows) groups[{r.scenario_index, r.strategy_index, r.latency_index}].push_back(&r);
    for (const auto& [key, members] : groups) {
      std::vector<double> dtw, resp, comp, bj, wj, sm, err;
      for (const auto* r : members) {
        if (!r->ok) continue;
        dtw.push_back(r->metrics.dtw);
        if (r->metrics.response_latency_s) resp.push_back(*r->metrics.response_latency_s);
        if (r->metrics.completion_time_s) comp.push_back(*r->metrics.completion_time_s);
        bj.push_back(r->metrics.max_boundary_jump);
        wj.push_back(r->metrics.max_within_jump);
        sm.push_back(r->metrics.smoothness);
        err.push_back(r->metrics.max_abs_error);
      }
      const auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return std::string("NA");
        double s = 0.0;
        for (double x : v) s += x;
        return format_number(s / static_cast<double>(v.size()));
      };
      const auto sem = [](const std::vector<double>& v) {
        if (v.size() < 2) return std::string("NA");
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return format_number(std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size())));
      };
      const SummaryRow& f = *members.front();
      avg += std::to_string(f.scenario_index) + "," + f.scenario + "," + std::to_string(f.strategy_index) + "," +
             f.strategy + "," + csv_quote(f.label) + "," + std::to_string(f.latency_index) + "," + f.latency + "," +
             std::to_string(dtw.size()) + "," + mean(dtw) + "," + sem(dtw) + "," + mean(resp) + "," +
             std::to_string(resp.size()) + "," + mean(comp) + "," + std::to_string(comp.size()) + "," + mean(bj) +
             "," + mean(wj) + "," + mean(sm) + "," + mean(err) + "\n";
    }
    write_text(out_dir / "averages.csv", avg);
    result.files.insert(result.files.begin() + 1, "averages.csv");
  }

  json report;
  report["seed"] = config.seed;
  report["trials"] = config.trials;
  report["cells"] = plan.size();
  report["failed_cells"] = json::array();
  for (const auto& f : result.failures) report["failed_cells"].push_back({{"cell", f.cell}, {"error", f.error}});
  if (!training.empty()) report["training"] = training;
  report["comparisons"] = json::array();
  try {
    result.comparisons = compare_strategies(result.rows);
    for (const auto& g : result.comparisons) report["comparisons"].push_back(to_json(g));
  } catch (const MissingStrategyError& e) {
    report["comparisons_skipped"] = e.what();
  }
  result.files.push_back("report.json");
  report["files"] = result.files;
  write_text(out_dir / "report.json", report.dump(2) + "\n");
  return result;
}

}  // namespace fabg
