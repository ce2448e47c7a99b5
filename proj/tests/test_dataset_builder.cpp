#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "mousedyn/dataset_builder.hpp"

using namespace mousedyn;

namespace {

// Features encode (user, index) so samples stay distinguishable after relabelling.
UserActions make_user(std::int64_t id, std::size_t n) {
  UserActions u;
  u.user_id = id;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector f{};
    f[0] = static_cast<double>(id);
    f[1] = static_cast<double>(i);
    f[2] = 0.5 * static_cast<double>(i) + 0.125;
    u.features.push_back(f);
  }
  return u;
}

std::vector<UserSplit> make_splits(const std::vector<std::size_t>& sizes) {
  std::vector<UserSplit> splits;
  for (std::size_t u = 0; u < sizes.size(); ++u) {
    splits.push_back(split_user(make_user(static_cast<std::int64_t>(u), sizes[u])));
  }
  return splits;
}

std::map<std::int64_t, std::size_t> imposters_by_source(const std::vector<LabeledSample>& v) {
  std::map<std::int64_t, std::size_t> m;
  for (const auto& s : v) {
    if (s.label == 0) ++m[s.source_user];
  }
  return m;
}

void check_dataset(const UserDataset& ds, const std::vector<UserSplit>& splits) {
  std::set<std::pair<std::int64_t, std::size_t>> train_ids;
  for (const auto& [part, pools_train] : {std::pair{&ds.train, true}, std::pair{&ds.test, false}}) {
    std::size_t pos = 0, neg = 0;
    std::set<std::pair<std::int64_t, std::size_t>> seen;
    for (const auto& s : *part) {
      EXPECT_EQ(s.label == 1, s.source_user == ds.owner_id);
      (s.label == 1 ? pos : neg) += 1;
      EXPECT_TRUE(seen.insert({s.source_user, s.ordinal}).second) << "duplicate sample";
      // Provenance: the sample must exist in the matching pool of its source.
      const auto& split = splits[static_cast<std::size_t>(s.source_user)];
      const auto& pool = pools_train ? split.train : split.test;
      EXPECT_TRUE(std::any_of(pool.begin(), pool.end(), [&](const LabeledSample& p) {
        return p.ordinal == s.ordinal && p.features == s.features;
      }));
      if (pools_train) {
        train_ids.insert({s.source_user, s.ordinal});
      } else {
        EXPECT_FALSE(train_ids.count({s.source_user, s.ordinal})) << "train/test leakage";
      }
    }
    EXPECT_EQ(pos, neg);
    const auto by_source = imposters_by_source(*part);
    if (pos > 0 && splits.size() > 1) {
      std::size_t lo = pos, hi = 0;
      for (const auto& split : splits) {
        if (split.user_id == ds.owner_id) continue;
        const std::size_t c = by_source.count(split.user_id) ? by_source.at(split.user_id) : 0;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      EXPECT_LE(hi - lo, 1u);
    }
  }
}

}  // namespace

TEST(SplitUser, ChronologicalFloor) {
  const auto s = split_user(make_user(3, 10), {0.7});
  ASSERT_EQ(s.train.size(), 7u);
  ASSERT_EQ(s.test.size(), 3u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(s.train[i].ordinal, i);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.test[i].ordinal, 7 + i);
  EXPECT_EQ(s.train[0].source_user, 3);

  const auto small = split_user(make_user(0, 3), {0.7});
  EXPECT_EQ(small.train.size(), 2u);
  EXPECT_EQ(small.test.size(), 1u);

  const auto thirty = split_user(make_user(0, 30), {0.7});
  EXPECT_EQ(thirty.train.size(), 21u);
  for (std::size_t n = 0; n <= 1000; ++n) {
    EXPECT_EQ(split_user(make_user(0, n), {0.7}).train.size(), n * 7 / 10) << n;
  }

  const auto empty = split_user(make_user(0, 0), {0.7});
  EXPECT_TRUE(empty.train.empty());
  EXPECT_TRUE(empty.test.empty());
}

TEST(SplitUser, RatioMustBeOpenInterval) {
  EXPECT_THROW(split_user(make_user(0, 10), {0.0}), Error);
  EXPECT_THROW(split_user(make_user(0, 10), {1.0}), Error);
}

TEST(SplitUser, ExplicitOrdinalsCarried) {
  auto u = make_user(1, 4);
  u.ordinals = {10, 20, 30, 40};
  const auto s = split_user(u, {0.5});
  EXPECT_EQ(s.train[1].ordinal, 20u);
  EXPECT_EQ(s.test[0].ordinal, 30u);
  u.ordinals.pop_back();
  EXPECT_THROW(split_user(u), Error);
}

TEST(SplitUser, ShuffledModeIsSeededAndKeepsOrder) {
  const auto u = make_user(2, 50);
  const SplitOptions opt{0.7, SplitMode::Shuffled, 99};
  const auto a = split_user(u, opt);
  const auto b = split_user(u, opt);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.train.size(), 35u);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end(),
                             [](const auto& x, const auto& y) { return x.ordinal < y.ordinal; }));
  const auto chrono = split_user(u, {0.7});
  EXPECT_NE(a.train, chrono.train);
  const auto other = split_user(u, {0.7, SplitMode::Shuffled, 100});
  EXPECT_NE(a.train, other.train);
}

TEST(ImposterQuotas, Examples) {
  EXPECT_EQ(imposter_quotas(9, 9), std::vector<std::size_t>(9, 1));
  EXPECT_EQ(imposter_quotas(18, 9), std::vector<std::size_t>(9, 2));
  std::vector<std::size_t> ten(9, 1);
  ten[0] = 2;
  EXPECT_EQ(imposter_quotas(10, 9), ten);
  EXPECT_THROW(imposter_quotas(5, 0), Error);
}

TEST(ImposterQuotas, QuotaLaw) {
  for (std::size_t imposters = 1; imposters <= 30; ++imposters) {
    for (std::size_t n = 0; n <= 200; ++n) {
      const auto q = imposter_quotas(n, imposters);
      ASSERT_EQ(q.size(), imposters);
      EXPECT_EQ(std::accumulate(q.begin(), q.end(), std::size_t{0}), n);
      const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
      EXPECT_LE(*hi - *lo, 1u);
      EXPECT_TRUE(std::is_sorted(q.rbegin(), q.rend()));
    }
  }
}

TEST(BuildUserDataset, NineTrainGivesOneFromEachImposter) {
  // owner 0 has 13 actions -> 9 train, 4 test
  std::vector<std::size_t> sizes(10, 40);
  sizes[0] = 13;
  const auto splits = make_splits(sizes);
  const auto ds = build_user_dataset(0, splits, 7);
  const auto train = imposters_by_source(ds.train);
  ASSERT_EQ(train.size(), 9u);
  for (const auto& [user, c] : train) EXPECT_EQ(c, 1u) << user;
  EXPECT_EQ(ds.train.size(), 18u);
  check_dataset(ds, splits);
}

TEST(BuildUserDataset, RemainderGoesToLowestIds) {
  std::vector<std::size_t> sizes(10, 40);
  sizes[4] = 15;  // 10 train, 5 test
  const auto splits = make_splits(sizes);
  const auto ds = build_user_dataset(4, splits, 7);
  const auto train = imposters_by_source(ds.train);
  EXPECT_EQ(train.at(0), 2u);
  for (std::int64_t u : {1, 2, 3, 5, 6, 7, 8, 9}) EXPECT_EQ(train.at(u), 1u) << u;
  const auto test = imposters_by_source(ds.test);
  for (std::int64_t u : {0, 1, 2, 3, 5}) EXPECT_EQ(test.at(u), 1u) << u;
  for (std::int64_t u : {6, 7, 8, 9}) EXPECT_EQ(test.count(u), 0u) << u;
  check_dataset(ds, splits);
}

TEST(BuildUserDataset, EighteenGivesTwoEach) {
  std::vector<std::size_t> sizes(10, 40);
  sizes[9] = 26;  // 18 train
  const auto splits = make_splits(sizes);
  const auto ds = build_user_dataset(9, splits, 1);
  for (const auto& [user, c] : imposters_by_source(ds.train)) EXPECT_EQ(c, 2u) << user;
}

TEST(BuildUserDataset, ShortPoolNamesUserAndShortfall) {
  std::vector<std::size_t> sizes{100, 10, 100};
  const auto splits = make_splits(sizes);  // user 1: 7 train, 3 test
  try {
    build_user_dataset(0, splits, 1);  // needs 35 from each
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("user 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("short by 28"), std::string::npos) << msg;
  }
}

TEST(BuildUserDataset, RequiresOwnerAndImposters) {
  const auto one = make_splits({10});
  EXPECT_THROW(build_user_dataset(0, one, 1), Error);
  const auto two = make_splits({10, 10});
  EXPECT_THROW(build_user_dataset(5, two, 1), Error);
}

TEST(BuildUserDatasetProperty, BalanceLeakageDeterminism) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t users = 2 + trial % 9;
    std::uniform_int_distribution<std::size_t> size(0, 30);
    std::vector<std::size_t> sizes(users);
    for (auto& s : sizes) s = size(rng);
    // Every pool large enough for any owner's quota.
    const std::size_t big = *std::max_element(sizes.begin(), sizes.end());
    for (auto& s : sizes) s = std::max(s, big / std::max<std::size_t>(1, users - 1) * 2 + 4);
    const auto splits = make_splits(sizes);
    const std::uint64_t seed = rng();
    for (std::size_t owner = 0; owner < users; ++owner) {
      const auto id = static_cast<std::int64_t>(owner);
      const auto ds = build_user_dataset(id, splits, seed);
      check_dataset(ds, splits);
      const auto again = build_user_dataset(id, splits, seed);
      EXPECT_EQ(ds.train, again.train);
      EXPECT_EQ(ds.test, again.test);
    }
  }
}

TEST(BuildUserDataset, SeedChangesImposterDraw) {
  const auto splits = make_splits({30, 60, 60});
  const auto a = build_user_dataset(0, splits, 1);
  const auto b = build_user_dataset(0, splits, 2);
  EXPECT_NE(a.train, b.train);
}

TEST(SummarizeCounts, LargeCorpusTotals) {
  const std::vector<std::size_t> train{32953, 39684, 36685, 51510, 39395, 32931, 28568, 42903, 31169, 41186};
  const std::vector<std::size_t> test{8334, 9474, 9207, 12512, 9784, 7920, 6903, 10746, 7562, 10182};
  std::vector<UserCounts> users;
  for (std::size_t i = 0; i < train.size(); ++i) {
    users.push_back({static_cast<std::int64_t>(9 - i), train[9 - i], test[9 - i]});
  }
  const auto summary = summarize_counts(users);
  EXPECT_EQ(summary.total_genuine_train, 376984u);
  // The per-user test rows add up to 92,624.
  EXPECT_EQ(summary.total_genuine_test, 92624u);
  EXPECT_EQ(summary.users.front().user_id, 0);
  EXPECT_EQ(summary.users.front().genuine_train, 32953u);

  users.push_back({3, 1, 1});
  EXPECT_THROW(summarize_counts(users), Error);
}

TEST(AssembleMaster, CountsAndErrors) {
  std::vector<UserActions> users;
  for (std::int64_t u = 0; u < 4; ++u) users.push_back(make_user(u, 20 + 10 * static_cast<std::size_t>(u)));
  const auto master = build_master(users, {}, 5);
  ASSERT_EQ(master.users.size(), 4u);
  std::size_t want_train = 0, want_test = 0;
  for (const auto& u : users) {
    const auto s = split_user(u);
    want_train += s.train.size();
    want_test += s.test.size();
  }
  EXPECT_EQ(master.counts.total_genuine_train, want_train);
  EXPECT_EQ(master.counts.total_genuine_test, want_test);
  EXPECT_EQ(master.owner(2).owner_id, 2);
  EXPECT_THROW(master.owner(7), Error);

  EXPECT_THROW(assemble_master({master.users[0]}), Error);
  EXPECT_THROW(assemble_master({master.users[0], master.users[0]}), Error);
  std::vector<UserActions> single{make_user(0, 10)};
  EXPECT_THROW(build_master(single, {}, 1), Error);
}

TEST(SamplesCsv, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 50; ++i) {
    LabeledSample s;
    for (auto& v : s.features) v = d(rng) / 3.0;
    s.features[5] = 0.1;
    s.features[6] = 5e-324;
    s.label = i % 2;
    s.source_user = i % 7;
    s.ordinal = static_cast<std::size_t>(i * 13);
    samples.push_back(s);
  }
  std::stringstream ss;
  write_samples_csv(ss, samples);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')).find("vx_mean,"), 0u);
  EXPECT_NE(text.find("user_id,label,ordinal\n"), std::string::npos);
  EXPECT_EQ(read_samples_csv(ss), samples);
}

TEST(SamplesCsv, RejectsBadRows) {
  std::stringstream header;
  write_samples_csv(header, {});
  std::stringstream bad(header.str() + "1,2,3\n");
  EXPECT_THROW(read_samples_csv(bad), ParseError);
  std::string row;
  for (std::size_t i = 0; i < kFeatureCount; ++i) row += "0,";
  std::stringstream bad_label(header.str() + row + "1,2,0\n");
  EXPECT_THROW(read_samples_csv(bad_label), ParseError);
  std::stringstream ok(header.str() + row + "1,1,0\n");
  EXPECT_EQ(read_samples_csv(ok).size(), 1u);
}
