#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mousedyn/action_segmenter.hpp"
#include "mousedyn/dataset_builder.hpp"
#include "mousedyn/detail/numeric.hpp"
#include "mousedyn/error.hpp"
#include "mousedyn/feature_extractor.hpp"
#include "mousedyn/random_forest.hpp"

namespace mousedyn {

inline constexpr double kDefaultThreshold = 0.5;

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  std::size_t positives() const noexcept { return tp + fn; }
  std::size_t negatives() const noexcept { return tn + fp; }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Rates {
  double acc = 0.0;
  double fnr = 0.0;
  double fpr = 0.0;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

namespace detail {

inline void check_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error("score/label length mismatch (" + std::to_string(scores.size()) + " vs " +
                std::to_string(labels.size()) + ")");
  }
  if (scores.empty()) throw Error("no samples to evaluate");
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error("labels must be 0 or 1");
  }
}

}  // namespace detail

/// Tallies predictions where score >= threshold means "genuine".
inline ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels,
                                 double threshold = kDefaultThreshold) {
  detail::check_scores(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool accepted = scores[i] >= threshold;
    if (labels[i] == 1) {
      ++(accepted ? c.tp : c.fn);
    } else {
      ++(accepted ? c.fp : c.tn);
    }
  }
  return c;
}

inline Rates metrics(const ConfusionCounts& c) {
  if (c.positives() == 0) throw Error("no genuine (positive) samples: FNR undefined");
  if (c.negatives() == 0) throw Error("no imposter (negative) samples: FPR undefined");
  return {static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()),
          static_cast<double>(c.fn) / static_cast<double>(c.positives()),
          static_cast<double>(c.fp) / static_cast<double>(c.negatives())};
}

/// Sweeps thresholds {0} + midpoints of consecutive distinct scores + {1 + ulp} and
/// returns the one where FPR and FNR are closest (lowest threshold on ties).
/// The EER is the mean of FPR and FNR there.
inline EerResult compute_eer(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scores(scores, labels);
  std::vector<std::pair<double, int>> sorted;
  sorted.reserve(scores.size());
  std::int64_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    sorted.emplace_back(scores[i], labels[i]);
    positives += labels[i];
  }
  const std::int64_t negatives = static_cast<std::int64_t>(scores.size()) - positives;
  if (positives == 0 || negatives == 0) throw Error("EER needs both genuine and imposter samples");
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> candidates{0.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i].first < sorted[i + 1].first) {
      candidates.push_back(std::midpoint(sorted[i].first, sorted[i + 1].first));
    }
  }
  candidates.push_back(std::nextafter(1.0, 2.0));
  std::sort(candidates.begin(), candidates.end());

  // Walk the sorted scores; below = samples with score < threshold (rejected).
  std::size_t cursor = 0;
  std::int64_t rejected_pos = 0, rejected_neg = 0;
  std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
  EerResult best;
  for (double t : candidates) {
    while (cursor < sorted.size() && sorted[cursor].first < t) {
      ++(sorted[cursor].second == 1 ? rejected_pos : rejected_neg);
      ++cursor;
    }
    const std::int64_t fp = negatives - rejected_neg;
    const std::int64_t fn = rejected_pos;
    // |fp/N - fn/P| compared exactly as |fp*P - fn*N|.
    const std::int64_t gap = std::abs(fp * positives - fn * negatives);
    if (gap < best_gap) {
      best_gap = gap;
      best.threshold = t;
      best.fpr = static_cast<double>(fp) / static_cast<double>(negatives);
      best.fnr = static_cast<double>(fn) / static_cast<double>(positives);
      best.eer = (best.fpr + best.fnr) / 2.0;
    }
  }
  return best;
}

// ---- scenarios --------------------------------------------------------------

enum class Scenario { A, B };

inline char scenario_name(Scenario s) { return s == Scenario::A ? 'A' : 'B'; }

struct MetricRow {
  std::int64_t user_id = 0;
  std::size_t genuine_actions = 0;
  double acc = 0.0, fnr = 0.0, fpr = 0.0, eer = 0.0, eer_threshold = 0.0;
};

struct SummaryRow {
  double genuine_actions = 0.0;
  double acc = 0.0, fnr = 0.0, fpr = 0.0, eer = 0.0, eer_threshold = 0.0;
};

struct EvalReport {
  Scenario scenario = Scenario::A;
  std::vector<MetricRow> rows;  ///< ascending user id
  SummaryRow avg;
  SummaryRow stddev;  ///< population standard deviation
};

/// Fills avg/std from the per-user rows.
inline void summarize(EvalReport& report) {
  const auto& rows = report.rows;
  if (rows.empty()) {
    report.avg = {};
    report.stddev = {};
    return;
  }
  const double n = static_cast<double>(rows.size());
  const auto column = [&](auto get, double& mean, double& sd) {
    double sum = 0.0;
    for (const auto& r : rows) sum += get(r);
    mean = sum / n;
    double ss = 0.0;
    for (const auto& r : rows) ss += (get(r) - mean) * (get(r) - mean);
    sd = std::sqrt(ss / n);
  };
  column([](const MetricRow& r) { return static_cast<double>(r.genuine_actions); }, report.avg.genuine_actions,
         report.stddev.genuine_actions);
  column([](const MetricRow& r) { return r.acc; }, report.avg.acc, report.stddev.acc);
  column([](const MetricRow& r) { return r.fnr; }, report.avg.fnr, report.stddev.fnr);
  column([](const MetricRow& r) { return r.fpr; }, report.avg.fpr, report.stddev.fpr);
  column([](const MetricRow& r) { return r.eer; }, report.avg.eer, report.stddev.eer);
  column([](const MetricRow& r) { return r.eer_threshold; }, report.avg.eer_threshold, report.stddev.eer_threshold);
}

struct TrainingSet {
  FeatureMatrix x;
  std::vector<int> y;
};

inline TrainingSet to_training_set(std::span<const LabeledSample> samples) {
  TrainingSet set;
  set.x = FeatureMatrix(samples.size(), kFeatureCount);
  set.y.reserve(samples.size());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    for (std::size_t c = 0; c < kFeatureCount; ++c) set.x(r, c) = samples[r].features[c];
    set.y.push_back(samples[r].label);
  }
  return set;
}

/// Scores every sample of `samples` and turns the result into a metric row.
inline MetricRow evaluate_samples(const RandomForestModel& model, std::span<const LabeledSample> samples,
                                  std::int64_t owner, double threshold = kDefaultThreshold) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(samples.size());
  labels.reserve(samples.size());
  MetricRow row;
  row.user_id = owner;
  for (const auto& s : samples) {
    scores.push_back(model.predict_proba(s.features));
    labels.push_back(s.label);
    row.genuine_actions += s.label == 1 ? 1 : 0;
  }
  const Rates r = metrics(confusion(scores, labels, threshold));
  const EerResult e = compute_eer(scores, labels);
  row.acc = r.acc;
  row.fnr = r.fnr;
  row.fpr = r.fpr;
  row.eer = e.eer;
  row.eer_threshold = e.threshold;
  return row;
}

struct ScenarioOptions {
  double threshold = kDefaultThreshold;
  /// Scenario A alternative: fit on the first 70% of each class of the train
  /// split and score the remaining 30% instead of the fitted rows.
  bool scenario_a_holdout = false;
  std::size_t threads = 0;
};

namespace detail {

inline std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> holdout_split(
    std::span<const LabeledSample> samples) {
  std::vector<LabeledSample> fit, held;
  for (int label : {1, 0}) {
    std::vector<LabeledSample> cls;
    for (const auto& s : samples) {
      if (s.label == label) cls.push_back(s);
    }
    const std::size_t cut = floor_fraction(0.7, cls.size());
    fit.insert(fit.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(cut));
    held.insert(held.end(), cls.begin() + static_cast<std::ptrdiff_t>(cut), cls.end());
  }
  return {std::move(fit), std::move(held)};
}

inline ForestParams owner_params(const ForestParams& params, std::int64_t owner) {
  ForestParams p = params;
  p.seed = derive_seed(params.seed, static_cast<std::uint64_t>(owner), 0x5eed);
  return p;
}

}  // namespace detail

/// Trains the owner's forest on its train split. The forest seed is derived from
/// (params.seed, owner) so every owner gets an independent stream.
inline RandomForestModel train_owner_model(const UserDataset& ds, const ForestParams& params,
                                           std::size_t threads = 0) {
  const TrainingSet set = to_training_set(ds.train);
  return train_forest(set.x, set.y, detail::owner_params(params, ds.owner_id), threads);
}

/// Called once per owner with the forest trained on that owner's train split.
using ModelSink = std::function<void(const UserDataset&, const RandomForestModel&)>;

/// Runs several scenarios, training each owner's forest once. Scenario A scores
/// the forest on the rows it was trained on; Scenario B on the owner's test split.
inline std::vector<EvalReport> run_scenarios(std::span<const Scenario> scenarios, const MasterDatasets& master,
                                             const ForestParams& params, const ScenarioOptions& options = {},
                                             const ModelSink& on_model = {}) {
  if (master.users.size() < 2) throw Error("at least 2 users are required");
  std::vector<EvalReport> reports(scenarios.size());
  for (std::size_t k = 0; k < scenarios.size(); ++k) reports[k].scenario = scenarios[k];

  for (const auto& ds : master.users) {
    std::optional<RandomForestModel> model;
    for (auto& report : reports) {
      try {
        if (report.scenario == Scenario::A && options.scenario_a_holdout) {
          auto [fit, held] = detail::holdout_split(ds.train);
          const TrainingSet set = to_training_set(fit);
          const auto holdout_model =
              train_forest(set.x, set.y, detail::owner_params(params, ds.owner_id), options.threads);
          report.rows.push_back(evaluate_samples(holdout_model, held, ds.owner_id, options.threshold));
          continue;
        }
        if (!model) model = train_owner_model(ds, params, options.threads);
        const auto& eval = report.scenario == Scenario::A ? ds.train : ds.test;
        report.rows.push_back(evaluate_samples(*model, eval, ds.owner_id, options.threshold));
      } catch (const Error& e) {
        throw Error("scenario " + std::string(1, scenario_name(report.scenario)) + ", user " +
                    std::to_string(ds.owner_id) + ": " + e.what());
      }
    }
    if (on_model) {
      if (!model) model = train_owner_model(ds, params, options.threads);
      on_model(ds, *model);
    }
  }
  for (auto& report : reports) summarize(report);
  return reports;
}

inline EvalReport run_scenario(Scenario scenario, const MasterDatasets& master, const ForestParams& params,
                               const ScenarioOptions& options = {}) {
  const Scenario one[] = {scenario};
  return run_scenarios(one, master, params, options).front();
}

// ---- rendering ----------------------------------------------------------------

inline void write_report_csv(std::ostream& out, const EvalReport& report) {
  const auto f = [](double v) { return detail::format_fixed(v, 4); };
  out << "User,GenuineActions,ACC,FNR,FPR,EER,EERThreshold\n";
  for (const auto& r : report.rows) {
    out << r.user_id << ',' << r.genuine_actions << ',' << f(r.acc) << ',' << f(r.fnr) << ',' << f(r.fpr) << ','
        << f(r.eer) << ',' << f(r.eer_threshold) << '\n';
  }
  for (const auto& [name, s] : {std::pair{"Avg", report.avg}, std::pair{"Std", report.stddev}}) {
    out << name << ",," << f(s.acc) << ',' << f(s.fnr) << ',' << f(s.fpr) << ',' << f(s.eer) << ','
        << f(s.eer_threshold) << '\n';
  }
}

/// Aligned plain-text table. EER is shown both as a fraction and in percent.
inline void write_report_table(std::ostream& out, const EvalReport& report) {
  const auto f = [](double v) { return detail::format_fixed(v, 4); };
  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  const std::vector<std::string> header{"User", "# Genuine", "ACC", "FNR (t=0.5)", "FPR (t=0.5)", "EER",
                                        "EER %", "EER thr."};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    cells.push_back({std::to_string(r.user_id), std::to_string(r.genuine_actions), f(r.acc), f(r.fnr), f(r.fpr),
                     f(r.eer), f(100.0 * r.eer), f(r.eer_threshold)});
  }
  for (const auto& [name, s] : {std::pair{"Avg.", report.avg}, std::pair{"Std.", report.stddev}}) {
    cells.push_back({name, "", f(s.acc), f(s.fnr), f(s.fpr), f(s.eer), f(100.0 * s.eer), f(s.eer_threshold)});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  out << "Scenario " << scenario_name(report.scenario) << '\n';
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "  " : "") << pad(header[c], width[c]);
  out << '\n';
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "  " : "") << pad(row[c], width[c]);
    out << '\n';
  }
}

// ---- streaming ----------------------------------------------------------------

struct StreamDecision {
  std::size_t ordinal = 0;
  double score = 0.0;
  bool authenticated = false;
};

/// Online counterpart of dedupe -> segment -> extract -> score. Feeding a
/// time-ordered session event by event emits exactly the decisions the batch
/// pipeline produces for the same events.
class StreamAuthenticator {
public:
  StreamAuthenticator(const RandomForestModel& model, SegmenterConfig config, double threshold)
      : model_(&model), config_(std::move(config)), threshold_(threshold) {
    config_.validate();
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("threshold must be in [0,1]");
    if (model.feature_dimension() != kFeatureCount) throw Error("model was not trained on action features");
  }

  /// Returns a decision when this event completes a window.
  std::optional<StreamDecision> push(const MouseEvent& event) {
    if (last_ && event.timestamp < last_->timestamp) {
      ++rejected_;
      return std::nullopt;
    }
    if (last_ && last_->x == event.x && last_->y == event.y && last_->event_type == event.event_type) {
      return std::nullopt;
    }
    last_ = event;
    if (!config_.accepts(event.event_type)) return std::nullopt;

    const std::size_t index = filtered_++;
    if (index < next_start_) return std::nullopt;  // stride larger than the window
    window_.push_back(event);
    if (index + 1 < next_start_ + config_.sequence_length) return std::nullopt;

    const std::vector<MouseEvent> events(window_.begin(), window_.end());
    const FeatureVector features = extract_features(events);
    StreamDecision d;
    d.ordinal = emitted_++;
    d.score = model_->predict_proba(features);
    d.authenticated = d.score >= threshold_;

    next_start_ += config_.stride;
    const std::size_t drop = std::min(config_.stride, window_.size());
    window_.erase(window_.begin(), window_.begin() + static_cast<std::ptrdiff_t>(drop));
    return d;
  }

  std::size_t rejected_events() const noexcept { return rejected_; }
  std::size_t emitted() const noexcept { return emitted_; }

private:
  const RandomForestModel* model_;
  SegmenterConfig config_;
  double threshold_;
  std::optional<MouseEvent> last_;
  std::deque<MouseEvent> window_;  ///< filtered events from next_start_ onwards
  std::size_t filtered_ = 0;
  std::size_t next_start_ = 0;
  std::size_t emitted_ = 0;
  std::size_t rejected_ = 0;
};

/// Batch reference for StreamAuthenticator: dedupe, segment, extract, score.
inline std::vector<StreamDecision> score_session(const RandomForestModel& model, std::span<const MouseEvent> events,
                                                 const SegmenterConfig& config, double threshold) {
  const auto clean = dedupe_events(events);
  std::vector<StreamDecision> out;
  for (const auto& action : segment_actions(clean, config)) {
    const double score = model.predict_proba(extract_features(action));
    out.push_back({action.ordinal, score, score >= threshold});
  }
  return out;
}

}  // namespace mousedyn
