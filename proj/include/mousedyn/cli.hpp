#pragma once

// Subcommand bodies for the `mousedyn` tool. Each returns a process exit status
// and writes only to the streams it is given.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mousedyn/detail/numeric.hpp"
#include "mousedyn/error.hpp"
#include "mousedyn/evaluation.hpp"
#include "mousedyn/pipeline.hpp"
#include "mousedyn/synth.hpp"

namespace mousedyn::cli {

struct ParseArgs {
  std::string input_dir;
  std::string output_dir;  ///< cleaned logs are written here when set
  int max_coordinate = 8192;
};

inline int cmd_parse(const ParseArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const auto files = list_input_files(args.input_dir);
    if (files.empty()) {
      err << "error: no input files in '" << args.input_dir << "'\n";
      return 1;
    }
    std::size_t total_events = 0, total_removed = 0;
    for (const auto& path : files) {
      const SessionInput s = load_session_file(path, ParseOptions{args.max_coordinate});
      SessionLog clean{s.log.user_id, dedupe_events(s.log.events)};
      const std::size_t removed = s.log.events.size() - clean.events.size();
      total_events += s.log.events.size();
      total_removed += removed;
      out << s.name << ": user " << s.log.user_id << ", events " << s.log.events.size() << ", kept "
          << clean.events.size() << ", duplicates removed: " << removed << ", reordered: " << s.reordered_events
          << '\n';
      if (!args.output_dir.empty()) {
        write_file_atomic(std::filesystem::path(args.output_dir) / s.name, serialize_session(clean));
      }
    }
    out << "files: " << files.size() << '\n';
    out << "events: " << total_events << '\n';
    out << "duplicates removed: " << total_removed << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

struct SynthArgs {
  std::size_t users = 10;
  double duration = 1200.0;
  std::uint64_t seed = 1;
  std::string output_dir;
};

inline int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.output_dir.empty()) throw Error("an output directory is required");
    for (std::size_t u = 0; u < args.users; ++u) {
      const auto id = static_cast<std::int64_t>(u);
      const auto profile = generate_profile(id, args.seed);
      const auto log = generate_session(profile, args.duration, args.seed);
      const auto path = std::filesystem::path(args.output_dir) / ("user_" + std::to_string(u) + ".txt");
      write_file_atomic(path, serialize_session(log));
      out << path.string() << ": " << log.events.size() << " events, base speed "
          << detail::format_fixed(profile.base_speed, 1) << " px/s\n";
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

struct RunArgs {
  std::string config_file;
  std::vector<std::string> overrides;  ///< key=value, applied after the file
  std::string output_dir;              ///< shortcut for output_dir=...
};

inline int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  try {
    PipelineConfig config;
    if (!args.config_file.empty()) {
      std::ifstream in(args.config_file);
      if (!in) throw Error("cannot open config '" + args.config_file + "'");
      load_config(config, in);
    }
    for (const auto& o : args.overrides) apply_assignment(config, o);
    if (!args.output_dir.empty()) config.output_dir = args.output_dir;

    const RunResult result = run_pipeline(config, &err);
    for (const auto& rep : result.reports) {
      write_report_table(out, rep);
      out << '\n';
    }
    out << "outputs written to " << result.output_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

struct ScoreArgs {
  std::string model_file;
  std::string log_file;
  double threshold = kDefaultThreshold;
  std::optional<std::size_t> sequence_length;  ///< defaults to the model's metadata, then 10
  std::optional<std::size_t> stride;
};

/// Segmentation settings recorded with a model, falling back to defaults.
inline SegmenterConfig segmenter_from_model(const RandomForestModel& model) {
  SegmenterConfig config;
  const auto& meta = model.metadata();
  if (auto it = meta.find("sequence_length"); it != meta.end()) {
    if (auto v = detail::parse_int<std::size_t>(it->second)) config.sequence_length = *v;
  }
  config.stride = config.sequence_length;
  if (auto it = meta.find("stride"); it != meta.end()) {
    if (auto v = detail::parse_int<std::size_t>(it->second)) config.stride = *v;
  }
  if (auto it = meta.find("event_filter"); it != meta.end()) {
    std::set<int> filter;
    for (const auto& item : detail::split_list(it->second)) {
      if (auto v = detail::parse_int<int>(item)) filter.insert(*v);
    }
    if (!filter.empty()) config.event_filter = filter;
  }
  return config;
}

inline int cmd_score(const ScoreArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (!(args.threshold >= 0.0 && args.threshold <= 1.0)) throw Error("threshold must be in [0,1]");
    std::ifstream model_in(args.model_file);
    if (!model_in) throw Error("cannot open model '" + args.model_file + "'");
    const RandomForestModel model = load_model(model_in);
    SegmenterConfig config = segmenter_from_model(model);
    if (args.sequence_length) {
      config.sequence_length = *args.sequence_length;
      if (!args.stride) config.stride = *args.sequence_length;
    }
    if (args.stride) config.stride = *args.stride;

    const SessionInput session = load_session_file(args.log_file);
    StreamAuthenticator stream(model, config, args.threshold);
    std::size_t accepted = 0;
    out << "ordinal,score,decision\n";
    for (const auto& event : session.log.events) {
      if (const auto d = stream.push(event)) {
        accepted += d->authenticated ? 1 : 0;
        out << d->ordinal << ',' << detail::format_fixed(d->score, 4) << ','
            << (d->authenticated ? "genuine" : "imposter") << '\n';
      }
    }
    const std::size_t scored = stream.emitted();
    out << scored << " actions scored";
    if (scored > 0) {
      out << ", authentication rate "
          << detail::format_fixed(static_cast<double>(accepted) / static_cast<double>(scored), 4);
    }
    out << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mousedyn::cli
