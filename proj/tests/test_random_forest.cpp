#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "mousedyn/random_forest.hpp"
#include "oracles/cart_oracle.hpp"

using namespace mousedyn;

namespace {

ForestParams exact_params() {
  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.max_features = MaxFeatures::all();
  return p;
}

struct Blobs {
  FeatureMatrix x;
  std::vector<int> y;
};

Blobs make_blobs(std::size_t per_class, std::size_t dim, double gap, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Blobs b{FeatureMatrix(2 * per_class, dim), {}};
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 0 : 1;
    for (std::size_t j = 0; j < dim; ++j) b.x(i, j) = g(rng) + (label == 1 ? gap : 0.0);
    b.y.push_back(label);
  }
  return b;
}

std::vector<double> training_scores(const DecisionTree& tree, const FeatureMatrix& x) {
  std::vector<double> s;
  for (std::size_t r = 0; r < x.rows(); ++r) s.push_back(tree.predict_proba(x.row(r)));
  return s;
}

}  // namespace

TEST(TrainTree, PureClassIsSingleLeaf) {
  const FeatureMatrix x(2, {1, 2, 3, 4, 5, 6});
  const std::vector<int> y{1, 1, 1};
  const auto tree = train_tree(x, y, exact_params(), 0);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_TRUE(tree.nodes()[0].is_leaf());
  EXPECT_EQ(tree.nodes()[0].positives, 3u);
  const std::vector<double> probe{100.0, -5.0};
  EXPECT_EQ(tree.predict_proba(probe), 1.0);
}

TEST(TrainTree, OneDimensionalMidpoint) {
  const FeatureMatrix x(1, {1, 2, 8, 9});
  const std::vector<int> y{0, 0, 1, 1};
  const auto tree = train_tree(x, y, exact_params(), 0);
  ASSERT_EQ(tree.nodes().size(), 3u);
  EXPECT_EQ(tree.nodes()[0].feature, 0);
  EXPECT_EQ(tree.nodes()[0].threshold, 5.0);
  EXPECT_EQ(tree.depth(), 1u);
  const std::vector<double> at{5.0}, above{5.000001};
  EXPECT_EQ(tree.predict_proba(at), 0.0);  // x <= threshold goes left
  EXPECT_EQ(tree.predict_proba(above), 1.0);
}

TEST(TrainTree, XorNeedsZeroGainRootSplit) {
  const FeatureMatrix x(2, {0, 0, 0, 1, 1, 0, 1, 1});
  const std::vector<int> y{0, 1, 1, 0};
  const auto tree = train_tree(x, y, exact_params(), 0);
  EXPECT_EQ(tree.depth(), 2u);
  EXPECT_EQ(tree.nodes()[0].feature, 0);
  EXPECT_EQ(tree.nodes()[0].threshold, 0.5);
  EXPECT_EQ(training_scores(tree, x), (std::vector<double>{0, 1, 1, 0}));
}

TEST(TrainTree, AdjacentDoublesKeepBothSidesNonEmpty) {
  const double lo = 1.0, hi = std::nextafter(1.0, 2.0);
  const FeatureMatrix x(1, {lo, hi});
  const std::vector<int> y{0, 1};
  const auto tree = train_tree(x, y, exact_params(), 0);
  EXPECT_EQ(training_scores(tree, x), (std::vector<double>{0, 1}));
  EXPECT_EQ(detail::split_point(lo, hi), lo);
}

TEST(TrainTree, DepthAndLeafLimits) {
  const auto b = make_blobs(100, 3, 0.5, 4);
  auto p = exact_params();
  p.max_depth = 2;
  EXPECT_LE(train_tree(b.x, b.y, p, 0).depth(), 2u);

  p = exact_params();
  p.min_samples_leaf = 15;
  const auto tree = train_tree(b.x, b.y, p, 0);
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf()) {
      EXPECT_GE(n.negatives + n.positives, 15u);
    }
  }

  p = exact_params();
  p.min_samples_split = 1000;
  EXPECT_EQ(train_tree(b.x, b.y, p, 0).nodes().size(), 1u);
}

TEST(TrainTree, DuplicateRowsWithMixedLabelsStayImpure) {
  const FeatureMatrix x(1, {3, 3, 3, 7});
  const std::vector<int> y{1, 0, 1, 0};
  const auto tree = train_tree(x, y, exact_params(), 0);
  const auto s = training_scores(tree, x);
  EXPECT_DOUBLE_EQ(s[0], 2.0 / 3.0);
  EXPECT_EQ(s[3], 0.0);
}

TEST(TrainTree, MatchesExhaustiveOracleOnRandomSets) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(1, 14), dims(1, 4), level(0, 4);
  std::uniform_real_distribution<double> real(-3.0, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = static_cast<std::size_t>(size(rng));
    const std::size_t d = static_cast<std::size_t>(dims(rng));
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    FeatureMatrix x(n, d);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        rows[i][j] = trial % 2 == 0 ? level(rng) : real(rng);
        x(i, j) = rows[i][j];
      }
      y[i] = static_cast<int>(rng() & 1u);
    }
    const auto got = training_scores(train_tree(x, y, exact_params(), rng()), x);
    EXPECT_EQ(got, oracle::cart_training_predictions(rows, y)) << "trial " << trial;
  }
}

TEST(TrainTree, AllFeaturesIgnoresSeed) {
  const auto b = make_blobs(60, 4, 0.7, 9);
  EXPECT_EQ(train_tree(b.x, b.y, exact_params(), 1), train_tree(b.x, b.y, exact_params(), 12345));
}

TEST(TrainTree, InputValidation) {
  const FeatureMatrix empty(0, 3);
  EXPECT_THROW(train_tree(empty, std::vector<int>{}, exact_params(), 0), Error);
  const FeatureMatrix x(1, {1, 2});
  EXPECT_THROW(train_tree(x, std::vector<int>{0}, exact_params(), 0), Error);
  EXPECT_THROW(train_tree(x, std::vector<int>{0, 2}, exact_params(), 0), Error);
  const FeatureMatrix bad(1, {1, NAN});
  EXPECT_THROW(train_tree(bad, std::vector<int>{0, 1}, exact_params(), 0), Error);
  auto p = exact_params();
  p.min_samples_split = 1;
  EXPECT_THROW(train_tree(x, std::vector<int>{0, 1}, p, 0), Error);
  EXPECT_THROW(FeatureMatrix(3, {1, 2}), Error);
}

TEST(MaxFeaturesRule, ResolveAndParse) {
  EXPECT_EQ(MaxFeatures::sqrt().resolve(31), 5u);
  EXPECT_EQ(MaxFeatures::sqrt().resolve(1), 1u);
  EXPECT_EQ(MaxFeatures::sqrt().resolve(16), 4u);
  EXPECT_EQ(MaxFeatures::all().resolve(31), 31u);
  EXPECT_EQ(MaxFeatures::fixed(3).resolve(31), 3u);
  EXPECT_THROW(MaxFeatures::fixed(40).resolve(31), Error);
  EXPECT_THROW(MaxFeatures::fixed(0), Error);
  EXPECT_EQ(MaxFeatures::parse("sqrt"), MaxFeatures::sqrt());
  EXPECT_EQ(MaxFeatures::parse("7"), MaxFeatures::fixed(7));
  EXPECT_THROW(MaxFeatures::parse("log2"), Error);
}

TEST(TrainForest, SingleUnbaggedTreeEqualsTrainTree) {
  const auto b = make_blobs(50, 5, 1.0, 2);
  auto p = exact_params();
  p.seed = 31;
  const auto forest = train_forest(b.x, b.y, p, 1);
  ASSERT_EQ(forest.trees().size(), 1u);
  EXPECT_EQ(forest.trees()[0], train_tree(b.x, b.y, p, 0));
  for (std::size_t r = 0; r < b.x.rows(); ++r) {
    EXPECT_EQ(forest.predict_proba(b.x.row(r)), forest.trees()[0].predict_proba(b.x.row(r)));
  }
}

TEST(TrainForest, DeterministicAcrossRunsAndThreadCounts) {
  const auto b = make_blobs(150, 8, 0.6, 3);
  ForestParams p;
  p.n_trees = 24;
  p.seed = 42;
  const auto one = train_forest(b.x, b.y, p, 1);
  EXPECT_EQ(one, train_forest(b.x, b.y, p, 1));
  EXPECT_EQ(one, train_forest(b.x, b.y, p, 4));
  p.seed = 43;
  EXPECT_NE(one, train_forest(b.x, b.y, p, 1));
}

TEST(TrainForest, SeparatesBlobs) {
  const auto train = make_blobs(300, 6, 3.0, 5);
  const auto test = make_blobs(300, 6, 3.0, 6);
  ForestParams p;
  p.n_trees = 50;
  p.seed = 1;
  const auto model = train_forest(train.x, train.y, p, 1);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < test.x.rows(); ++r) {
    correct += classify(model, test.x.row(r), 0.5) == test.y[r] ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(test.x.rows()), 0.99);
}

TEST(TrainForest, MemorizesDistinctRowsWithoutRandomness) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = make_blobs(80, 3, 0.2, rng());
    auto p = exact_params();
    p.n_trees = 3;
    const auto model = train_forest(b.x, b.y, p, 1);
    for (std::size_t r = 0; r < b.x.rows(); ++r) {
      EXPECT_EQ(model.predict_proba(b.x.row(r)), static_cast<double>(b.y[r]));
    }
  }
}

TEST(TrainForest, ScoresStayInUnitInterval) {
  const auto b = make_blobs(100, 4, 0.3, 10);
  ForestParams p;
  p.n_trees = 15;
  const auto model = train_forest(b.x, b.y, p, 1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> probe{d(rng), d(rng), d(rng), d(rng)};
    const double s = model.predict_proba(probe);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(RandomForestModelScoring, MeanOfLeafFractionsAndTies) {
  // Tree 1 votes 1.0 everywhere, tree 2 votes 0.0 -> 0.5.
  DecisionTree yes({TreeNode{-1, 0.0, -1, -1, 0, 4}});
  DecisionTree no({TreeNode{-1, 0.0, -1, -1, 3, 0}});
  ForestParams p;
  p.n_trees = 2;
  const RandomForestModel model({yes, no}, p, 2);
  const std::vector<double> x{0.0, 0.0};
  EXPECT_EQ(model.predict_proba(x), 0.5);
  EXPECT_EQ(model.classify(x, 0.5), 1);
  EXPECT_EQ(model.classify(x, std::nextafter(0.5, 1.0)), 0);
  EXPECT_EQ(model.classify(x, 0.0), 1);
  EXPECT_THROW(model.classify(x, 1.01), Error);
  EXPECT_THROW(model.classify(x, -0.1), Error);
  const std::vector<double> wrong{1.0, 2.0, 3.0};
  EXPECT_THROW(model.predict_proba(wrong), Error);
}

TEST(ModelPersistence, RoundTripGivesIdenticalScores) {
  const auto b = make_blobs(120, 7, 0.4, 12);
  ForestParams p;
  p.n_trees = 12;
  p.max_depth = 9;
  p.seed = 99;
  auto model = train_forest(b.x, b.y, p, 1);
  model.metadata()["owner_id"] = "3";
  model.metadata()["event_filter"] = "-1, 0";
  std::stringstream ss;
  save_model(ss, model);
  const auto loaded = load_model(ss);
  EXPECT_EQ(loaded, model);
  EXPECT_EQ(loaded.metadata().at("event_filter"), "-1, 0");
  const auto probe = make_blobs(50, 7, 0.4, 13);
  for (std::size_t r = 0; r < probe.x.rows(); ++r) {
    EXPECT_EQ(loaded.predict_proba(probe.x.row(r)), model.predict_proba(probe.x.row(r)));
  }
}

TEST(ModelPersistence, RejectsCorruptFiles) {
  const auto b = make_blobs(20, 2, 2.0, 1);
  auto p = exact_params();
  std::stringstream ss;
  save_model(ss, train_forest(b.x, b.y, p, 1));
  const std::string text = ss.str();

  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_model(truncated), ParseError);

  std::string wrong_version = text;
  wrong_version.replace(0, std::string("mousedyn-forest 1").size(), "mousedyn-forest 9");
  std::stringstream v(wrong_version);
  EXPECT_THROW(load_model(v), ParseError);

  // Root pointing at itself would loop forever when scoring.
  std::string cyclic = text;
  const auto tree_line = cyclic.find("tree 0 ");
  const auto root = cyclic.find('\n', tree_line) + 1;
  const auto root_end = cyclic.find('\n', root);
  std::istringstream fields(cyclic.substr(root, root_end - root));
  std::string feature, threshold;
  fields >> feature >> threshold;
  cyclic.replace(root, root_end - root, feature + " " + threshold + " 0 0 1 1");
  std::stringstream c(cyclic);
  EXPECT_THROW(load_model(c), ParseError);
}
