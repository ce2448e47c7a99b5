#pragma once

// Per-user balanced binary datasets. For owner u with n genuine rows in a split,
// n imposter rows are drawn without replacement from the other users' pools of
// the same split: floor(n / (U-1)) each, with the remainder handed out one row
// at a time to the lowest imposter ids.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mousedyn/detail/numeric.hpp"
#include "mousedyn/error.hpp"
#include "mousedyn/feature_extractor.hpp"

namespace mousedyn {

struct LabeledSample {
  FeatureVector features{};
  int label = 0;  ///< 1 genuine, 0 imposter
  std::int64_t source_user = 0;
  std::size_t ordinal = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// One user's actions in session order, tagged with their ordinals.
struct UserActions {
  std::int64_t user_id = 0;
  std::vector<FeatureVector> features;
  std::vector<std::size_t> ordinals;  ///< parallel to features; defaults to 0..n-1 when empty
};

struct UserSplit {
  std::int64_t user_id = 0;
  std::vector<LabeledSample> train;  ///< label unset (0); relabelled per owner
  std::vector<LabeledSample> test;
};

struct UserDataset {
  std::int64_t owner_id = 0;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
};

enum class SplitMode { Chronological, Shuffled };

struct SplitOptions {
  double ratio = 0.7;
  SplitMode mode = SplitMode::Chronological;
  std::uint64_t seed = 0;  ///< only used by SplitMode::Shuffled
};

namespace detail {

// floor(ratio * n), tolerant of ratios like 0.7 that are not exact in binary
// (0.7 * 30 evaluates to 20.999999999999996).
inline std::size_t floor_fraction(double ratio, std::size_t n) {
  const double v = ratio * static_cast<double>(n);
  return static_cast<std::size_t>(std::floor(v + 1e-9 * std::max(1.0, v)));
}

}  // namespace detail

/// First floor(ratio * n) rows (or a seeded random subset of that size) go to train.
/// Both sides keep session order.
inline UserSplit split_user(const UserActions& actions, const SplitOptions& options = {}) {
  if (!(options.ratio > 0.0 && options.ratio < 1.0)) throw Error("split ratio must lie in (0, 1)");
  const std::size_t n = actions.features.size();
  if (!actions.ordinals.empty() && actions.ordinals.size() != n) {
    throw Error("ordinal list does not match feature count");
  }
  const std::size_t n_train = detail::floor_fraction(options.ratio, n);

  std::vector<bool> in_train(n, false);
  if (options.mode == SplitMode::Chronological) {
    std::fill_n(in_train.begin(), n_train, true);
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(detail::derive_seed(options.seed, static_cast<std::uint64_t>(actions.user_id)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;
  }

  UserSplit split;
  split.user_id = actions.user_id;
  split.train.reserve(n_train);
  split.test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSample s{actions.features[i], 0, actions.user_id,
                    actions.ordinals.empty() ? i : actions.ordinals[i]};
    (in_train[i] ? split.train : split.test).push_back(s);
  }
  return split;
}

/// Per-imposter quotas for imposters listed in ascending id order.
inline std::vector<std::size_t> imposter_quotas(std::size_t genuine_count, std::size_t imposters) {
  if (imposters == 0) throw Error("at least 2 users are required to form imposters");
  std::vector<std::size_t> quotas(imposters, genuine_count / imposters);
  const std::size_t remainder = genuine_count % imposters;
  for (std::size_t i = 0; i < remainder; ++i) ++quotas[i];
  return quotas;
}

namespace detail {

inline void draw_imposters(std::vector<LabeledSample>& out, std::int64_t owner,
                           std::span<const UserSplit* const> others, std::size_t genuine_count,
                           bool from_train, std::uint64_t seed) {
  const auto quotas = imposter_quotas(genuine_count, others.size());
  for (std::size_t k = 0; k < others.size(); ++k) {
    const UserSplit& other = *others[k];
    const auto& pool = from_train ? other.train : other.test;
    if (pool.size() < quotas[k]) {
      throw Error("imposter user " + std::to_string(other.user_id) + " has " +
                  std::to_string(pool.size()) + " " + (from_train ? "train" : "test") +
                  " actions but owner " + std::to_string(owner) + " needs " +
                  std::to_string(quotas[k]) + " (short by " +
                  std::to_string(quotas[k] - pool.size()) + ")");
    }
    std::vector<std::size_t> picks(pool.size());
    std::iota(picks.begin(), picks.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(owner),
                                    (static_cast<std::uint64_t>(other.user_id) << 1) | (from_train ? 0 : 1)));
    // Partial Fisher-Yates: the first quota slots become a uniform sample.
    for (std::size_t i = 0; i < quotas[k]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, picks.size() - 1);
      std::swap(picks[i], picks[pick(rng)]);
    }
    picks.resize(quotas[k]);
    std::sort(picks.begin(), picks.end());
    for (std::size_t idx : picks) {
      LabeledSample s = pool[idx];
      s.label = 0;
      out.push_back(s);
    }
  }
}

}  // namespace detail

/// Builds the balanced dataset of `owner_id` from every user's split pools.
inline UserDataset build_user_dataset(std::int64_t owner_id, std::span<const UserSplit> splits,
                                      std::uint64_t seed) {
  std::vector<const UserSplit*> others;
  const UserSplit* owner = nullptr;
  for (const auto& s : splits) {
    if (s.user_id == owner_id) {
      if (owner != nullptr) throw Error("duplicate split for user " + std::to_string(owner_id));
      owner = &s;
    } else {
      others.push_back(&s);
    }
  }
  if (owner == nullptr) throw Error("no split for owner " + std::to_string(owner_id));
  if (others.empty()) throw Error("at least 2 users are required to form imposters");
  std::sort(others.begin(), others.end(),
            [](const UserSplit* a, const UserSplit* b) { return a->user_id < b->user_id; });

  UserDataset ds;
  ds.owner_id = owner_id;
  for (bool from_train : {true, false}) {
    auto& out = from_train ? ds.train : ds.test;
    const auto& genuine = from_train ? owner->train : owner->test;
    out.reserve(2 * genuine.size());
    for (LabeledSample s : genuine) {
      s.label = 1;
      out.push_back(s);
    }
    detail::draw_imposters(out, owner_id, others, genuine.size(), from_train, seed);
  }
  return ds;
}

struct UserCounts {
  std::int64_t user_id = 0;
  std::size_t genuine_train = 0;
  std::size_t genuine_test = 0;
};

struct CountSummary {
  std::vector<UserCounts> users;
  std::size_t total_genuine_train = 0;
  std::size_t total_genuine_test = 0;
};

inline CountSummary summarize_counts(std::vector<UserCounts> users) {
  std::sort(users.begin(), users.end(),
            [](const UserCounts& a, const UserCounts& b) { return a.user_id < b.user_id; });
  CountSummary summary;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (i > 0 && users[i].user_id == users[i - 1].user_id) {
      throw Error("duplicate owner id " + std::to_string(users[i].user_id));
    }
    summary.total_genuine_train += users[i].genuine_train;
    summary.total_genuine_test += users[i].genuine_test;
  }
  summary.users = std::move(users);
  return summary;
}

struct MasterDatasets {
  std::vector<UserDataset> users;  ///< ascending owner id
  CountSummary counts;

  const UserDataset& owner(std::int64_t id) const {
    for (const auto& u : users) {
      if (u.owner_id == id) return u;
    }
    throw Error("unknown owner " + std::to_string(id));
  }
};

inline MasterDatasets assemble_master(std::vector<UserDataset> datasets) {
  if (datasets.size() < 2) throw Error("at least 2 users are required to form imposters");
  std::sort(datasets.begin(), datasets.end(),
            [](const UserDataset& a, const UserDataset& b) { return a.owner_id < b.owner_id; });
  std::vector<UserCounts> counts;
  for (const auto& d : datasets) {
    const auto genuine = [](const std::vector<LabeledSample>& v) {
      return static_cast<std::size_t>(
          std::count_if(v.begin(), v.end(), [](const LabeledSample& s) { return s.label == 1; }));
    };
    counts.push_back({d.owner_id, genuine(d.train), genuine(d.test)});
  }
  MasterDatasets master;
  master.counts = summarize_counts(std::move(counts));
  master.users = std::move(datasets);
  return master;
}

/// Splits every user and builds all per-owner datasets.
inline MasterDatasets build_master(std::span<const UserActions> users, const SplitOptions& split,
                                   std::uint64_t seed) {
  std::vector<UserSplit> splits;
  splits.reserve(users.size());
  for (const auto& u : users) splits.push_back(split_user(u, split));
  std::vector<UserDataset> datasets;
  datasets.reserve(users.size());
  for (const auto& u : users) datasets.push_back(build_user_dataset(u.user_id, splits, seed));
  return assemble_master(std::move(datasets));
}

// ---- CSV ----------------------------------------------------------------

inline void write_samples_csv(std::ostream& out, std::span<const LabeledSample> samples) {
  for (const auto& name : kFeatureNames) out << name << ',';
  out << "user_id,label,ordinal\n";
  for (const auto& s : samples) {
    for (double v : s.features) out << detail::format_double(v) << ',';
    out << s.source_user << ',' << s.label << ',' << s.ordinal << '\n';
  }
}

inline std::vector<LabeledSample> read_samples_csv(std::istream& in) {
  std::vector<LabeledSample> samples;
  std::string line;
  if (!std::getline(in, line)) return samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != kFeatureCount + 3) {
      throw ParseError("expected " + std::to_string(kFeatureCount + 3) + " columns", line_no);
    }
    LabeledSample s;
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      const auto v = detail::parse_double(cells[j]);
      if (!v) throw ParseError("not a number", line_no, j + 1);
      s.features[j] = *v;
    }
    const auto user = detail::parse_int<std::int64_t>(cells[kFeatureCount]);
    const auto label = detail::parse_int<int>(cells[kFeatureCount + 1]);
    const auto ordinal = detail::parse_int<std::size_t>(cells[kFeatureCount + 2]);
    if (!user || !label || !ordinal || (*label != 0 && *label != 1)) {
      throw ParseError("bad user_id/label/ordinal", line_no);
    }
    s.source_user = *user;
    s.label = *label;
    s.ordinal = *ordinal;
    samples.push_back(s);
  }
  return samples;
}

}  // namespace mousedyn
