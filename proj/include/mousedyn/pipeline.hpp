#pragma once

// End-to-end driver: corpus -> actions -> balanced datasets -> per-user forests
// -> scenario reports, plus the on-disk layout of a run.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mousedyn/action_segmenter.hpp"
#include "mousedyn/dataset_builder.hpp"
#include "mousedyn/detail/numeric.hpp"
#include "mousedyn/error.hpp"
#include "mousedyn/evaluation.hpp"
#include "mousedyn/event_model.hpp"
#include "mousedyn/feature_extractor.hpp"
#include "mousedyn/random_forest.hpp"
#include "mousedyn/synth.hpp"

namespace mousedyn {

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "MOUSEDYN_OUTPUT_DIR";

struct PipelineConfig {
  std::string input_dir;            ///< one session log per user
  std::size_t synth_users = 0;      ///< > 0 replaces input_dir with a synthetic corpus
  double synth_duration = 1200.0;   ///< seconds per synthetic session
  std::uint64_t synth_seed = 1;
  int max_coordinate = 8192;
  SegmenterConfig segmenter;
  SplitOptions split;
  ForestParams forest;
  std::uint64_t seed = 0;  ///< master seed: splits, imposter draws, forests
  std::vector<Scenario> scenarios{Scenario::A, Scenario::B};
  double threshold = kDefaultThreshold;
  bool scenario_a_holdout = false;
  std::string output_dir = "mousedyn-out";
  bool write_datasets = true;
  bool write_models = true;
  std::size_t threads = 0;
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw Error("config key '" + key + "' expects a boolean, got '" + value + "'");
}

template <typename Int>
Int parse_config_int(const std::string& key, const std::string& value) {
  const auto v = parse_int<Int>(value);
  if (!v) throw Error("config key '" + key + "' expects an integer, got '" + value + "'");
  return *v;
}

inline double parse_config_double(const std::string& key, const std::string& value) {
  const auto v = parse_double(value);
  if (!v) throw Error("config key '" + key + "' expects a number, got '" + value + "'");
  return *v;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace detail

/// Applies one `key=value` setting.
inline void apply_setting(PipelineConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "input_dir") {
    c.input_dir = value;
  } else if (key == "synth_users") {
    c.synth_users = parse_config_int<std::size_t>(key, value);
  } else if (key == "synth_duration") {
    c.synth_duration = parse_config_double(key, value);
  } else if (key == "synth_seed") {
    c.synth_seed = parse_config_int<std::uint64_t>(key, value);
  } else if (key == "max_coordinate") {
    c.max_coordinate = parse_config_int<int>(key, value);
  } else if (key == "sequence_length") {
    // stride keeps following the window length unless it was set to something else
    const bool tied = c.segmenter.stride == c.segmenter.sequence_length;
    c.segmenter.sequence_length = parse_config_int<std::size_t>(key, value);
    if (tied) c.segmenter.stride = c.segmenter.sequence_length;
  } else if (key == "stride") {
    c.segmenter.stride = parse_config_int<std::size_t>(key, value);
  } else if (key == "event_filter") {
    c.segmenter.event_filter.clear();
    for (const auto& item : split_list(value)) c.segmenter.event_filter.insert(parse_config_int<int>(key, item));
    if (c.segmenter.event_filter.empty()) throw Error("event_filter must list at least one event type");
  } else if (key == "split_ratio") {
    c.split.ratio = parse_config_double(key, value);
  } else if (key == "split_mode") {
    if (value == "chronological") {
      c.split.mode = SplitMode::Chronological;
    } else if (value == "shuffled") {
      c.split.mode = SplitMode::Shuffled;
    } else {
      throw Error("split_mode must be chronological or shuffled");
    }
  } else if (key == "n_trees") {
    c.forest.n_trees = parse_config_int<std::size_t>(key, value);
  } else if (key == "max_depth") {
    if (value == "none" || value == "0") {
      c.forest.max_depth.reset();
    } else {
      c.forest.max_depth = parse_config_int<std::size_t>(key, value);
    }
  } else if (key == "min_samples_leaf") {
    c.forest.min_samples_leaf = parse_config_int<std::size_t>(key, value);
  } else if (key == "min_samples_split") {
    c.forest.min_samples_split = parse_config_int<std::size_t>(key, value);
  } else if (key == "max_features") {
    c.forest.max_features = MaxFeatures::parse(value);
  } else if (key == "bootstrap") {
    c.forest.bootstrap = parse_bool(key, value);
  } else if (key == "seed") {
    c.seed = parse_config_int<std::uint64_t>(key, value);
  } else if (key == "scenarios") {
    c.scenarios.clear();
    for (const auto& item : split_list(value)) {
      if (item == "A" || item == "a") {
        c.scenarios.push_back(Scenario::A);
      } else if (item == "B" || item == "b") {
        c.scenarios.push_back(Scenario::B);
      } else {
        throw Error("unknown scenario '" + item + "'");
      }
    }
    if (c.scenarios.empty()) throw Error("scenarios must list A and/or B");
  } else if (key == "threshold") {
    c.threshold = parse_config_double(key, value);
  } else if (key == "scenario_a_holdout") {
    c.scenario_a_holdout = parse_bool(key, value);
  } else if (key == "output_dir") {
    c.output_dir = value;
  } else if (key == "write_datasets") {
    c.write_datasets = parse_bool(key, value);
  } else if (key == "write_models") {
    c.write_models = parse_bool(key, value);
  } else if (key == "threads") {
    c.threads = parse_config_int<std::size_t>(key, value);
  } else {
    throw Error("unknown config key '" + key + "'");
  }
}

/// Applies a `key=value` string (as given on the command line).
inline void apply_assignment(PipelineConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("expected key=value, got '" + assignment + "'");
  apply_setting(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Reads a key=value config file; '#' starts a comment.
inline void load_config(PipelineConfig& c, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(c, line);
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  }
}

inline void validate(const PipelineConfig& c) {
  c.segmenter.validate();
  c.forest.validate();
  if (!(c.split.ratio > 0.0 && c.split.ratio < 1.0)) throw Error("split_ratio must lie in (0, 1)");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw Error("threshold must be in [0,1]");
  if (c.synth_users == 0 && c.input_dir.empty()) throw Error("set input_dir or synth_users");
  if (c.synth_users == 1) throw Error("at least 2 users are required");
  if (c.synth_users == 0 && !std::filesystem::is_directory(c.input_dir)) {
    throw Error("input directory '" + c.input_dir + "' does not exist");
  }
}

/// Effective configuration as ordered key=value pairs (echoed into manifests).
inline std::vector<std::pair<std::string, std::string>> config_echo(const PipelineConfig& c) {
  std::string filter;
  for (int t : c.segmenter.event_filter) filter += (filter.empty() ? "" : ",") + std::to_string(t);
  std::string scenarios;
  for (auto s : c.scenarios) scenarios += (scenarios.empty() ? "" : ",") + std::string(1, scenario_name(s));
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"input_dir", c.input_dir},
      {"synth_users", std::to_string(c.synth_users)},
      {"synth_duration", detail::format_double(c.synth_duration)},
      {"synth_seed", std::to_string(c.synth_seed)},
      {"max_coordinate", std::to_string(c.max_coordinate)},
      {"sequence_length", std::to_string(c.segmenter.sequence_length)},
      {"stride", std::to_string(c.segmenter.stride)},
      {"event_filter", filter},
      {"split_ratio", detail::format_double(c.split.ratio)},
      {"split_mode", c.split.mode == SplitMode::Chronological ? "chronological" : "shuffled"},
      {"n_trees", std::to_string(c.forest.n_trees)},
      {"max_depth", c.forest.max_depth ? std::to_string(*c.forest.max_depth) : "none"},
      {"min_samples_leaf", std::to_string(c.forest.min_samples_leaf)},
      {"min_samples_split", std::to_string(c.forest.min_samples_split)},
      {"max_features", c.forest.max_features.to_string()},
      {"bootstrap", b(c.forest.bootstrap)},
      {"seed", std::to_string(c.seed)},
      {"scenarios", scenarios},
      {"threshold", detail::format_double(c.threshold)},
      {"scenario_a_holdout", b(c.scenario_a_holdout)},
      {"write_datasets", b(c.write_datasets)},
      {"write_models", b(c.write_models)},
  };
}

// ---- corpus -------------------------------------------------------------------

struct SessionInput {
  std::string name;    ///< file name, or "synthetic:<id>"
  std::string digest;  ///< FNV-1a 64 of the log text
  SessionLog log;
  std::size_t reordered_events = 0;
};

inline std::string serialize_session(const SessionLog& log) {
  std::ostringstream out;
  write_session_log(out, log);
  return out.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Regular files of `dir`, sorted by name.
inline std::vector<std::filesystem::path> list_input_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename().string().front() != '.') files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline SessionInput load_session_file(const std::filesystem::path& path, const ParseOptions& options = {}) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  SessionInput s;
  s.name = path.filename().string();
  detail::Fnv1a64 h;
  h.update(text);
  s.digest = h.hex();
  try {
    auto parsed = parse_session_log(in, options);
    s.log = std::move(parsed.log);
    s.reordered_events = parsed.reordered_events;
  } catch (const ParseError& e) {
    throw Error(s.name + ": " + e.what());
  }
  return s;
}

inline std::vector<SessionInput> synthesize_corpus(std::size_t users, double duration, std::uint64_t seed) {
  std::vector<SessionInput> corpus;
  for (std::size_t u = 0; u < users; ++u) {
    const auto id = static_cast<std::int64_t>(u);
    SessionInput s;
    s.name = "synthetic:" + std::to_string(u);
    // Written and re-parsed so synthetic data takes the same path as real logs.
    const std::string text = serialize_session(generate_session(generate_profile(id, seed), duration, seed));
    detail::Fnv1a64 h;
    h.update(text);
    s.digest = h.hex();
    std::istringstream in(text);
    auto parsed = parse_session_log(in);
    s.log = std::move(parsed.log);
    s.reordered_events = parsed.reordered_events;
    corpus.push_back(std::move(s));
  }
  return corpus;
}

inline std::vector<SessionInput> load_corpus(const PipelineConfig& c) {
  if (c.synth_users > 0) return synthesize_corpus(c.synth_users, c.synth_duration, c.synth_seed);
  std::vector<SessionInput> corpus;
  const ParseOptions options{c.max_coordinate};
  for (const auto& path : list_input_files(c.input_dir)) corpus.push_back(load_session_file(path, options));
  if (corpus.empty()) throw Error("no input files in '" + c.input_dir + "'");
  return corpus;
}

struct UserStats {
  std::int64_t user_id = 0;
  std::size_t events = 0;
  std::size_t duplicates_removed = 0;
  std::size_t reordered = 0;
  std::size_t actions = 0;
};

struct PreparedCorpus {
  std::vector<UserActions> users;  ///< ascending user id
  std::vector<UserStats> stats;
};

/// dedupe -> segment -> extract for every session. Sessions of the same user
/// are rejected: each user contributes exactly one log.
inline PreparedCorpus prepare_actions(const std::vector<SessionInput>& corpus, const SegmenterConfig& segmenter) {
  PreparedCorpus out;
  std::map<std::int64_t, std::size_t> seen;
  for (const auto& s : corpus) {
    if (s.log.events.empty()) throw Error(s.name + ": session has no events");
    const auto id = s.log.user_id;
    if (!seen.emplace(id, out.users.size()).second) {
      throw Error(s.name + ": user " + std::to_string(id) + " appears in more than one input file");
    }
    const auto clean = dedupe_events(s.log.events);
    const auto actions = segment_actions(clean, segmenter);
    UserActions ua;
    ua.user_id = id;
    ua.features = extract_all(actions);
    for (const auto& a : actions) ua.ordinals.push_back(a.ordinal);
    out.stats.push_back({id, s.log.events.size(), s.log.events.size() - clean.size(), s.reordered_events,
                         actions.size()});
    out.users.push_back(std::move(ua));
  }
  std::sort(out.users.begin(), out.users.end(),
            [](const UserActions& a, const UserActions& b) { return a.user_id < b.user_id; });
  std::sort(out.stats.begin(), out.stats.end(),
            [](const UserStats& a, const UserStats& b) { return a.user_id < b.user_id; });
  return out;
}

inline MasterDatasets build_master(const PipelineConfig& c, const PreparedCorpus& prepared) {
  SplitOptions split = c.split;
  split.seed = c.seed;
  return build_master(prepared.users, split, c.seed);
}

inline ForestParams forest_params(const PipelineConfig& c) {
  ForestParams p = c.forest;
  p.seed = c.seed;
  return p;
}

inline ScenarioOptions scenario_options(const PipelineConfig& c) {
  return {c.threshold, c.scenario_a_holdout, c.threads};
}

// ---- outputs ------------------------------------------------------------------

/// Writes via a temporary sibling and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::filesystem::path resolve_output_dir(const PipelineConfig& c) {
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return c.output_dir;
}

inline std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  write_report_csv(out, r);
  return out.str();
}

inline std::string report_table(const EvalReport& r) {
  std::ostringstream out;
  write_report_table(out, r);
  return out.str();
}

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<EvalReport> reports;
  PreparedCorpus prepared;
  CountSummary counts;
};

inline std::string render_manifest(const PipelineConfig& c, const std::vector<SessionInput>& corpus,
                                   const RunResult& r) {
  std::ostringstream m;
  m << "# mousedyn run manifest\n";
  for (const auto& [k, v] : config_echo(c)) m << "config." << k << '=' << v << '\n';
  for (const auto& s : corpus) m << "input." << s.name << ".fnv1a64=" << s.digest << '\n';
  for (const auto& s : r.prepared.stats) {
    const std::string p = "user." + std::to_string(s.user_id) + ".";
    m << p << "events=" << s.events << '\n'
      << p << "duplicates_removed=" << s.duplicates_removed << '\n'
      << p << "reordered_events=" << s.reordered << '\n'
      << p << "actions=" << s.actions << '\n';
  }
  for (const auto& u : r.counts.users) {
    const std::string p = "user." + std::to_string(u.user_id) + ".";
    m << p << "genuine_train=" << u.genuine_train << '\n' << p << "genuine_test=" << u.genuine_test << '\n';
  }
  m << "total.genuine_train=" << r.counts.total_genuine_train << '\n';
  m << "total.genuine_test=" << r.counts.total_genuine_test << '\n';
  m << "seed.master=" << c.seed << '\n';
  m << "seed.synth=" << c.synth_seed << '\n';
  m << "feature_columns=" << kFeatureCount << '\n';
  for (const auto& rep : r.reports) {
    m << "report." << scenario_name(rep.scenario) << "=report_" << scenario_name(rep.scenario) << ".csv\n";
  }
  return m.str();
}

/// Full pipeline. Writes report_<S>.csv/.txt per scenario, models/, datasets/
/// and manifest.txt into the output directory.
inline RunResult run_pipeline(const PipelineConfig& c, std::ostream* log = nullptr) {
  validate(c);
  const auto say = [&](const std::string& msg) {
    if (log != nullptr) *log << msg << '\n';
  };
  RunResult result;
  result.output_dir = resolve_output_dir(c);

  std::vector<SessionInput> corpus;
  try {
    corpus = load_corpus(c);
  } catch (const Error& e) {
    throw Error(std::string("parse stage: ") + e.what());
  }
  say("loaded " + std::to_string(corpus.size()) + " sessions");
  try {
    result.prepared = prepare_actions(corpus, c.segmenter);
  } catch (const Error& e) {
    throw Error(std::string("feature stage: ") + e.what());
  }
  MasterDatasets master;
  try {
    master = build_master(c, result.prepared);
  } catch (const Error& e) {
    throw Error(std::string("dataset stage: ") + e.what());
  }
  result.counts = master.counts;
  say("built balanced datasets for " + std::to_string(master.users.size()) + " users");

  const auto& out_dir = result.output_dir;
  std::filesystem::create_directories(out_dir);
  if (c.write_datasets) {
    for (const auto& ds : master.users) {
      for (bool train : {true, false}) {
        std::ostringstream csv;
        write_samples_csv(csv, train ? ds.train : ds.test);
        write_file_atomic(out_dir / "datasets" /
                              ("user_" + std::to_string(ds.owner_id) + (train ? "_train.csv" : "_test.csv")),
                          csv.str());
      }
    }
  }

  ModelSink sink;
  if (c.write_models) {
    sink = [&](const UserDataset& ds, const RandomForestModel& trained) {
      RandomForestModel model = trained;
      auto& meta = model.metadata();
      meta["owner_id"] = std::to_string(ds.owner_id);
      for (const auto& [k, v] : config_echo(c)) {
        if (k == "sequence_length" || k == "stride" || k == "event_filter" || k == "threshold") meta[k] = v;
      }
      std::ostringstream text;
      save_model(text, model);
      write_file_atomic(out_dir / "models" / ("user_" + std::to_string(ds.owner_id) + ".model"), text.str());
      say("trained forest for user " + std::to_string(ds.owner_id));
    };
  }
  try {
    result.reports = run_scenarios(c.scenarios, master, forest_params(c), scenario_options(c), sink);
  } catch (const Error& e) {
    throw Error(std::string("training/evaluation stage: ") + e.what());
  }

  for (const auto& rep : result.reports) {
    const std::string stem = std::string("report_") + scenario_name(rep.scenario);
    write_file_atomic(out_dir / (stem + ".csv"), report_csv(rep));
    write_file_atomic(out_dir / (stem + ".txt"), report_table(rep));
  }
  write_file_atomic(out_dir / "manifest.txt", render_manifest(c, corpus, result));
  return result;
}

}  // namespace mousedyn
