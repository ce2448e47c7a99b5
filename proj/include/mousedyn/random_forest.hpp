#pragma once

// Binary random forest: CART trees grown on Gini impurity, bagged with
// per-tree bootstrap samples and random feature subsets at every node.
//
// Determinism: tree t is grown from derive_seed(params.seed, t) only, so the
// result does not depend on how trees are scheduled across threads. Split
// quality is compared in exact integer arithmetic and ties go to the lowest
// feature index, then the lowest threshold.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mousedyn/detail/numeric.hpp"
#include "mousedyn/error.hpp"

namespace mousedyn {

/// Dense row-major matrix of finite feature values.
class FeatureMatrix {
public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  FeatureMatrix(std::size_t cols, std::vector<double> data) : cols_(cols), data_(std::move(data)) {
    if (cols_ == 0 || data_.size() % cols_ != 0) throw Error("matrix data does not fill whole rows");
    rows_ = data_.size() / cols_;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw Error("row width does not match matrix");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class MaxFeatures {
public:
  enum class Rule { Sqrt, All, Fixed };

  static MaxFeatures sqrt() { return MaxFeatures(Rule::Sqrt, 0); }
  static MaxFeatures all() { return MaxFeatures(Rule::All, 0); }
  static MaxFeatures fixed(std::size_t k) {
    if (k == 0) throw Error("max_features must be positive");
    return MaxFeatures(Rule::Fixed, k);
  }

  Rule rule() const noexcept { return rule_; }
  std::size_t k() const noexcept { return k_; }

  /// Number of features examined per node for a given dimension.
  std::size_t resolve(std::size_t dimension) const {
    switch (rule_) {
      case Rule::Sqrt:
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(dimension))));
      case Rule::All:
        return dimension;
      case Rule::Fixed:
        if (k_ > dimension) {
          throw Error("max_features " + std::to_string(k_) + " exceeds feature dimension " +
                      std::to_string(dimension));
        }
        return k_;
    }
    return dimension;
  }

  std::string to_string() const {
    switch (rule_) {
      case Rule::Sqrt: return "sqrt";
      case Rule::All: return "all";
      case Rule::Fixed: return std::to_string(k_);
    }
    return "sqrt";
  }

  static MaxFeatures parse(const std::string& text) {
    if (text == "sqrt") return sqrt();
    if (text == "all") return all();
    const auto k = detail::parse_int<std::size_t>(text);
    if (!k) throw Error("max_features must be sqrt, all or a positive integer, got '" + text + "'");
    return fixed(*k);
  }

  friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;

private:
  MaxFeatures(Rule rule, std::size_t k) : rule_(rule), k_(k) {}
  Rule rule_ = Rule::Sqrt;
  std::size_t k_ = 0;
};

struct ForestParams {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;  ///< unlimited when empty
  std::size_t min_samples_leaf = 1;
  std::size_t min_samples_split = 2;
  MaxFeatures max_features = MaxFeatures::sqrt();
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees == 0) throw Error("n_trees must be positive");
    if (max_depth && *max_depth == 0) throw Error("max_depth must be positive");
    if (min_samples_leaf == 0) throw Error("min_samples_leaf must be positive");
    if (min_samples_split < 2) throw Error("min_samples_split must be at least 2");
  }

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct TreeNode {
  std::int32_t feature = -1;  ///< -1 marks a leaf
  double threshold = 0.0;     ///< x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t negatives = 0;  ///< (bootstrap-weighted) class counts reaching the node
  std::uint32_t positives = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  double positive_fraction() const noexcept {
    const std::uint32_t total = negatives + positives;
    return total == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(total);
  }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  const TreeNode& leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i];
  }

  double predict_proba(std::span<const double> x) const { return leaf_for(x).positive_fraction(); }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (!nodes_[i].is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].right), d + 1);
      }
    }
    return best;
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

private:
  std::vector<TreeNode> nodes_;
};

namespace detail {

using u128 = unsigned __int128;

// n * (weighted Gini of a split) = n - S with S = (pL^2 + qL^2)/nL + (pR^2 + qR^2)/nR,
// so the best split maximises S. S is kept as an exact fraction num/den.
struct SplitScore {
  u128 num = 0;
  u128 den = 1;

  static SplitScore of(std::uint64_t neg_l, std::uint64_t pos_l, std::uint64_t neg_r, std::uint64_t pos_r) {
    const std::uint64_t n_l = neg_l + pos_l;
    const std::uint64_t n_r = neg_r + pos_r;
    const u128 sq_l = u128(neg_l) * neg_l + u128(pos_l) * pos_l;
    const u128 sq_r = u128(neg_r) * neg_r + u128(pos_r) * pos_r;
    return {sq_l * n_r + sq_r * n_l, u128(n_l) * n_r};
  }
  // Compares num/den fractions; both sides stay below 2^128 for n < ~10^7.
  friend bool operator>(const SplitScore& a, const SplitScore& b) { return a.num * b.den > b.num * a.den; }
  friend bool operator==(const SplitScore& a, const SplitScore& b) { return a.num * b.den == b.num * a.den; }
};

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  SplitScore score;

  bool beats(const SplitChoice& other) const {
    if (!other.found) return true;
    if (score > other.score) return true;
    if (!(score == other.score)) return false;
    if (feature != other.feature) return feature < other.feature;
    return threshold < other.threshold;
  }
};

// Threshold strictly between two distinct sorted values.
inline double split_point(double lo, double hi) {
  double mid = std::midpoint(lo, hi);
  if (!(mid < hi)) mid = lo;
  return mid;
}

class TreeGrower {
public:
  TreeGrower(const FeatureMatrix& x, std::span<const int> y, std::span<const std::uint32_t> weights,
             const ForestParams& params, std::uint64_t seed)
      : x_(x), y_(y), weights_(weights), params_(params), rng_(seed),
        mtry_(params.max_features.resolve(x.cols())) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] > 0) samples_.push_back(static_cast<std::uint32_t>(i));
    }
    features_.resize(x.cols());
    buffer_.reserve(samples_.size());
  }

  DecisionTree grow() {
    struct Pending {
      std::size_t node, begin, end, depth;
    };
    std::vector<TreeNode> nodes(1);
    std::vector<Pending> stack{{0, 0, samples_.size(), 0}};
    while (!stack.empty()) {
      const Pending item = stack.back();
      stack.pop_back();
      std::uint64_t neg = 0, pos = 0;
      for (std::size_t i = item.begin; i < item.end; ++i) {
        const std::uint32_t s = samples_[i];
        (y_[s] == 1 ? pos : neg) += weights_[s];
      }
      nodes[item.node].negatives = static_cast<std::uint32_t>(neg);
      nodes[item.node].positives = static_cast<std::uint32_t>(pos);

      const std::uint64_t total = neg + pos;
      const bool stop = neg == 0 || pos == 0 ||
                        (params_.max_depth && item.depth >= *params_.max_depth) ||
                        total < params_.min_samples_split || total < 2 * params_.min_samples_leaf;
      if (stop) continue;

      const SplitChoice best = find_split(item.begin, item.end, neg, pos);
      if (!best.found) continue;

      const auto first = samples_.begin() + static_cast<std::ptrdiff_t>(item.begin);
      const auto last = samples_.begin() + static_cast<std::ptrdiff_t>(item.end);
      const auto middle = std::partition(first, last, [&](std::uint32_t s) {
        return x_(s, best.feature) <= best.threshold;
      });
      const std::size_t split_at = static_cast<std::size_t>(middle - samples_.begin());

      const auto left = nodes.size();
      nodes.emplace_back();
      nodes.emplace_back();
      auto& parent = nodes[item.node];
      parent.feature = static_cast<std::int32_t>(best.feature);
      parent.threshold = best.threshold;
      parent.left = static_cast<std::int32_t>(left);
      parent.right = static_cast<std::int32_t>(left + 1);
      stack.push_back({left + 1, split_at, item.end, item.depth + 1});
      stack.push_back({left, item.begin, split_at, item.depth + 1});
    }
    return DecisionTree(std::move(nodes));
  }

private:
  // Visits features in a random order until mtry non-constant ones were scored.
  SplitChoice find_split(std::size_t begin, std::size_t end, std::uint64_t neg, std::uint64_t pos) {
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    SplitChoice best;
    std::size_t scored = 0;
    for (std::size_t j = 0; j < features_.size() && scored < mtry_; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, features_.size() - 1);
      std::swap(features_[j], features_[pick(rng_)]);
      const std::size_t f = features_[j];

      buffer_.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t s = samples_[i];
        buffer_.emplace_back(x_(s, f), s);
      }
      std::sort(buffer_.begin(), buffer_.end());
      if (buffer_.front().first == buffer_.back().first) continue;
      ++scored;

      std::uint64_t neg_l = 0, pos_l = 0;
      for (std::size_t i = 0; i + 1 < buffer_.size(); ++i) {
        const std::uint32_t s = buffer_[i].second;
        (y_[s] == 1 ? pos_l : neg_l) += weights_[s];
        if (buffer_[i].first == buffer_[i + 1].first) continue;
        const std::uint64_t n_l = neg_l + pos_l;
        const std::uint64_t n_r = neg + pos - n_l;
        if (n_l < params_.min_samples_leaf || n_r < params_.min_samples_leaf) continue;
        SplitChoice c{true, f, split_point(buffer_[i].first, buffer_[i + 1].first),
                      SplitScore::of(neg_l, pos_l, neg - neg_l, pos - pos_l)};
        if (c.beats(best)) best = c;
      }
    }
    return best;
  }

  const FeatureMatrix& x_;
  std::span<const int> y_;
  std::span<const std::uint32_t> weights_;
  const ForestParams& params_;
  std::mt19937_64 rng_;
  std::size_t mtry_;
  std::vector<std::uint32_t> samples_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, std::uint32_t>> buffer_;
};

inline void check_training_input(const FeatureMatrix& x, std::span<const int> y) {
  if (x.rows() == 0) throw Error("cannot train on an empty dataset");
  if (y.size() != x.rows()) throw Error("label count does not match sample count");
  for (int label : y) {
    if (label != 0 && label != 1) throw Error("labels must be 0 or 1");
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (double v : x.row(r)) {
      if (!std::isfinite(v)) throw Error("feature values must be finite (row " + std::to_string(r) + ")");
    }
  }
}

}  // namespace detail

/// Grows one CART tree on every sample with unit weight. `tree_seed` drives the
/// feature draws at each node.
inline DecisionTree train_tree(const FeatureMatrix& x, std::span<const int> y, const ForestParams& params,
                               std::uint64_t tree_seed) {
  params.validate();
  detail::check_training_input(x, y);
  const std::vector<std::uint32_t> weights(x.rows(), 1);
  return detail::TreeGrower(x, y, weights, params, tree_seed).grow();
}

class RandomForestModel {
public:
  RandomForestModel() = default;
  RandomForestModel(std::vector<DecisionTree> trees, ForestParams params, std::size_t dimension)
      : trees_(std::move(trees)), params_(std::move(params)), dimension_(dimension) {}

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const ForestParams& params() const noexcept { return params_; }
  std::size_t feature_dimension() const noexcept { return dimension_; }

  /// Free-form key/value annotations persisted with the model.
  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  /// Mean over trees of the positive fraction at the reached leaf.
  double predict_proba(std::span<const double> x) const {
    if (x.size() != dimension_) {
      throw Error("feature dimension mismatch: model expects " + std::to_string(dimension_) + ", got " +
                  std::to_string(x.size()));
    }
    if (trees_.empty()) throw Error("model has no trees");
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.predict_proba(x);
    return std::clamp(sum / static_cast<double>(trees_.size()), 0.0, 1.0);
  }

  /// Genuine (1) iff the score reaches the threshold; a tie authenticates.
  int classify(std::span<const double> x, double threshold) const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("threshold must be in [0,1]");
    return predict_proba(x) >= threshold ? 1 : 0;
  }

  friend bool operator==(const RandomForestModel&, const RandomForestModel&) = default;

private:
  std::vector<DecisionTree> trees_;
  ForestParams params_;
  std::size_t dimension_ = 0;
  std::map<std::string, std::string> metadata_;
};

/// Trains `params.n_trees` trees, each on its own bootstrap draw. `threads == 0`
/// uses the hardware concurrency.
inline RandomForestModel train_forest(const FeatureMatrix& x, std::span<const int> y,
                                      const ForestParams& params, std::size_t threads = 0) {
  params.validate();
  detail::check_training_input(x, y);
  params.max_features.resolve(x.cols());

  std::vector<DecisionTree> trees(params.n_trees);
  const auto grow = [&](std::size_t t) {
    const std::uint64_t tree_seed = detail::derive_seed(params.seed, t);
    std::mt19937_64 rng(tree_seed);
    std::vector<std::uint32_t> weights(x.rows(), params.bootstrap ? 0 : 1);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, x.rows() - 1);
      for (std::size_t i = 0; i < x.rows(); ++i) ++weights[draw(rng)];
    }
    trees[t] = detail::TreeGrower(x, y, weights, params, rng()).grow();
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, params.n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) grow(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < params.n_trees; t = next++) grow(t);
      });
    }
  }
  return RandomForestModel(std::move(trees), params, x.cols());
}

inline double predict_proba(const RandomForestModel& model, std::span<const double> x) {
  return model.predict_proba(x);
}

inline int classify(const RandomForestModel& model, std::span<const double> x, double threshold) {
  return model.classify(x, threshold);
}

// ---- persistence ----------------------------------------------------------
//
//   mousedyn-forest 1
//   dimension <d>
//   n_trees <T> | max_depth <k|none> | min_samples_leaf | min_samples_split
//   max_features <sqrt|all|k> | bootstrap <0|1> | seed <u64>
//   meta <key> <value...>            (zero or more)
//   tree <index> <node count>
//   <feature> <threshold> <left> <right> <negatives> <positives>   (per node)
//   end

inline constexpr int kModelFormatVersion = 1;

inline void save_model(std::ostream& out, const RandomForestModel& model) {
  const auto& p = model.params();
  out << "mousedyn-forest " << kModelFormatVersion << '\n';
  out << "dimension " << model.feature_dimension() << '\n';
  out << "n_trees " << p.n_trees << '\n';
  out << "max_depth " << (p.max_depth ? std::to_string(*p.max_depth) : std::string("none")) << '\n';
  out << "min_samples_leaf " << p.min_samples_leaf << '\n';
  out << "min_samples_split " << p.min_samples_split << '\n';
  out << "max_features " << p.max_features.to_string() << '\n';
  out << "bootstrap " << (p.bootstrap ? 1 : 0) << '\n';
  out << "seed " << p.seed << '\n';
  for (const auto& [key, value] : model.metadata()) out << "meta " << key << ' ' << value << '\n';
  for (std::size_t t = 0; t < model.trees().size(); ++t) {
    const auto& nodes = model.trees()[t].nodes();
    out << "tree " << t << ' ' << nodes.size() << '\n';
    for (const auto& n : nodes) {
      out << n.feature << ' ' << detail::format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
          << n.negatives << ' ' << n.positives << '\n';
    }
  }
  out << "end\n";
}

inline RandomForestModel load_model(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  const auto next = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw ParseError("unexpected end of model file", line_no + 1);
    ++line_no;
    return std::istringstream(line);
  };
  const auto expect_key = [&](std::istringstream& ss, const char* key) {
    std::string word;
    if (!(ss >> word) || word != key) throw ParseError(std::string("expected '") + key + "'", line_no);
  };
  const auto read_value = [&](const char* key) {
    auto ss = next();
    expect_key(ss, key);
    std::string value;
    if (!(ss >> value)) throw ParseError(std::string("missing value for '") + key + "'", line_no);
    return value;
  };
  const auto as_size = [&](const std::string& text) {
    const auto v = detail::parse_int<std::size_t>(text);
    if (!v) throw ParseError("expected a non-negative integer, got '" + text + "'", line_no);
    return *v;
  };

  {
    auto ss = next();
    expect_key(ss, "mousedyn-forest");
    int version = 0;
    if (!(ss >> version) || version != kModelFormatVersion) {
      throw ParseError("unsupported model format version", line_no);
    }
  }
  const std::size_t dimension = as_size(read_value("dimension"));
  ForestParams p;
  p.n_trees = as_size(read_value("n_trees"));
  if (const auto depth = read_value("max_depth"); depth != "none") p.max_depth = as_size(depth);
  p.min_samples_leaf = as_size(read_value("min_samples_leaf"));
  p.min_samples_split = as_size(read_value("min_samples_split"));
  p.max_features = MaxFeatures::parse(read_value("max_features"));
  p.bootstrap = read_value("bootstrap") == "1";
  {
    const auto seed = detail::parse_int<std::uint64_t>(read_value("seed"));
    if (!seed) throw ParseError("bad seed", line_no);
    p.seed = *seed;
  }

  std::map<std::string, std::string> metadata;
  std::vector<DecisionTree> trees;
  for (;;) {
    auto ss = next();
    std::string word;
    ss >> word;
    if (word == "end") break;
    if (word == "meta") {
      std::string key, value;
      ss >> key;
      std::getline(ss >> std::ws, value);
      metadata[key] = value;
      continue;
    }
    if (word != "tree") throw ParseError("expected 'tree', 'meta' or 'end'", line_no);
    std::size_t index = 0, count = 0;
    if (!(ss >> index >> count) || index != trees.size() || count == 0) {
      throw ParseError("bad tree header", line_no);
    }
    std::vector<TreeNode> nodes(count);
    for (std::size_t i = 0; i < count; ++i) {
      auto& n = nodes[i];
      auto row = next();
      std::string threshold;
      if (!(row >> n.feature >> threshold >> n.left >> n.right >> n.negatives >> n.positives)) {
        throw ParseError("bad tree node", line_no);
      }
      const auto t = detail::parse_double(threshold);
      if (!t) throw ParseError("bad threshold", line_no);
      n.threshold = *t;
      const bool leaf = n.feature < 0;
      const auto in_range = [&](std::int32_t child) {
        return child > 0 && static_cast<std::size_t>(child) > i && static_cast<std::size_t>(child) < count;
      };
      if (!leaf && (static_cast<std::size_t>(n.feature) >= dimension || !in_range(n.left) || !in_range(n.right))) {
        throw ParseError("tree node references out of range", line_no);
      }
    }
    trees.emplace_back(std::move(nodes));
  }
  if (trees.size() != p.n_trees) throw ParseError("tree count does not match n_trees", line_no);
  RandomForestModel model(std::move(trees), p, dimension);
  model.metadata() = std::move(metadata);
  return model;
}

}  // namespace mousedyn
