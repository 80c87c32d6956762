#include <gtest/gtest.h>

#include <random>

#include "dtdms/nlp.hpp"
#include "test_util.hpp"

using namespace dtdms;
using namespace dtdms::nlp;

namespace {

std::vector<TweetRecord> toy() {
  return {{"1", "", "", "fire fire", 1},
          {"2", "", "", "flood", 1},
          {"3", "", "", "sunny", 0},
          {"4", "", "", "calm day", 0}};
}

std::vector<TweetRecord> numbered(std::size_t n) {
  std::vector<TweetRecord> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back({std::to_string(i), "", "", "x", static_cast<int>(i % 2)});
  return v;
}

}  // namespace

TEST(Csv, QuotedFieldsAndLineNumbers) {
  const auto rows = parse_csv("\xEF\xBB\xBF" "a,b\n\"x,\"\"y\"\"\",\"multi\nline\"\r\nlast,\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].cells, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(rows[1].cells, (std::vector<std::string>{"x,\"y\"", "multi\nline"}));
  EXPECT_EQ(rows[2].line, 4u);
  EXPECT_EQ(rows[2].cells, (std::vector<std::string>{"last", ""}));
}

TEST(Corpus, ParsesLabelledAndUnlabelled) {
  const auto recs = parse_corpus("id,keyword,location,text,target\n1,quake,Izmir,\"help, now\",1\n2,,,fine,0\n3,,,?,\n");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].text, "help, now");
  EXPECT_EQ(recs[0].location, "Izmir");
  EXPECT_EQ(recs[0].target, 1);
  EXPECT_EQ(recs[1].target, 0);
  EXPECT_EQ(recs[2].target, std::nullopt);
  EXPECT_EQ(parse_corpus("text,location,keyword,id\nhi,,,9\n")[0].id, "9");
}

TEST(Corpus, Errors) {
  try {
    parse_corpus("id,keyword,text\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "location");
  }
  try {
    parse_corpus("id,keyword,location,text,target\n1,,,a,0\n2,,,b,yes\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.field(), "target");
  }
  try {
    parse_corpus("id,keyword,location,text\n1,,,a\n1,,,b\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "id");
  }
  EXPECT_THROW(parse_corpus("id,keyword,location,text\n1,,a\n"), ParseError);
  EXPECT_THROW(parse_corpus(""), ParseError);
}

TEST(Split, SizesFollowFloorRule) {
  EXPECT_EQ(split_sizes(7613, {}), (SplitSizes{6091, 761, 761}));
  EXPECT_EQ(split_sizes(10, {}), (SplitSizes{8, 1, 1}));
  EXPECT_EQ(split_sizes(9, {}), (SplitSizes{9, 0, 0}));
  EXPECT_EQ(split_sizes(100, {0.42, 0.29, 0.29, 0}), (SplitSizes{42, 29, 29}));
  EXPECT_THROW(split_sizes(10, {0.5, 0.5, 0.0, 0}), ValueError);
  EXPECT_THROW(split_sizes(10, {0.5, 0.3, 0.3, 0}), ValueError);
}

TEST(Split, PartitionIsDisjointCompleteAndSeeded) {
  for (std::size_t n : {1u, 2u, 10u, 37u, 500u}) {
    const auto recs = numbered(n);
    const auto a = split_corpus(recs, {0.8, 0.1, 0.1, 7});
    const auto b = split_corpus(recs, {0.8, 0.1, 0.1, 7});
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    std::set<std::string> ids;
    for (const auto* part : {&a.train, &a.dev, &a.test})
      for (const auto& r : *part) EXPECT_TRUE(ids.insert(r.id).second);
    EXPECT_EQ(ids.size(), n);
    const auto sizes = split_sizes(n, {});
    EXPECT_EQ(a.dev.size(), sizes.dev);
    EXPECT_EQ(a.test.size(), sizes.test);
  }
  EXPECT_NE(split_corpus(numbered(50), {0.8, 0.1, 0.1, 1}).train,
            split_corpus(numbered(50), {0.8, 0.1, 0.1, 2}).train);
  EXPECT_THROW(split_corpus({}, {}), ValueError);
}

TEST(Permutation, IsAPermutation) {
  auto p = seeded_permutation(1000, 99);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

TEST(Tokenizer, LowercasesAndKeepsUtf8) {
  EXPECT_EQ(tokenize("Fire!! in İzmir, 3rd-floor"),
            (std::vector<std::string>{"fire", "in", "\xC4\xB0zmir", "3rd", "floor"}));
  EXPECT_TRUE(tokenize("  ...  ").empty());
}

TEST(NaiveBayes, ToyPosteriorMatchesHandComputation) {
  const auto m = BaselineModel::train(toy());
  EXPECT_EQ(m.vocabulary_size(), 5u);
  EXPECT_DOUBLE_EQ(m.prior(1), 0.5);
  // 3 tokens per class, |V| = 5: P(fire|1) = 3/8, P(fire|0) = 1/8.
  EXPECT_NEAR(*m.log_likelihood(1, "fire"), std::log(3.0 / 8.0), 1e-12);
  EXPECT_NEAR(*m.log_likelihood(0, "fire"), std::log(1.0 / 8.0), 1e-12);
  const auto r = m.classify("FIRE fire");
  EXPECT_EQ(r.label, 1);
  EXPECT_NEAR(r.posterior[1], 0.9, 1e-12);
  EXPECT_NEAR(r.score, 0.9, 1e-12);
}

TEST(NaiveBayes, UnknownTextFallsBackToPriorAndTiesGoToZero) {
  const auto m = BaselineModel::train(toy());
  const auto r = m.classify("zebra");
  EXPECT_DOUBLE_EQ(r.posterior[0], 0.5);
  EXPECT_EQ(r.label, 0);
  EXPECT_EQ(m.classify("").label, 0);

  auto skewed = toy();
  skewed.push_back({"5", "", "", "breeze", 0});
  EXPECT_NEAR(BaselineModel::train(skewed).classify("").posterior[0], 0.6, 1e-12);
}

TEST(NaiveBayes, PosteriorsSumToOne) {
  std::mt19937_64 rng(3);
  const auto data = dtdms::testing::synthetic_tweets(rng, 200);
  const auto m = BaselineModel::train(data);
  for (const auto& r : data) {
    const auto c = m.classify(r.text);
    EXPECT_NEAR(c.posterior[0] + c.posterior[1], 1.0, 1e-12);
    EXPECT_GE(c.score, 0.5);
  }
}

TEST(NaiveBayes, DuplicatingCorpusKeepsConfidentLabels) {
  std::mt19937_64 rng(4);
  auto data = dtdms::testing::synthetic_tweets(rng, 300);
  const auto m1 = BaselineModel::train(data);
  auto twice = data;
  for (auto r : data) {
    r.id += "b";
    twice.push_back(r);
  }
  const auto m2 = BaselineModel::train(twice);
  for (const auto& r : data) {
    const auto a = m1.classify(r.text);
    if (a.score < 0.99) continue;
    EXPECT_EQ(m2.classify(r.text).label, a.label);
  }
}

TEST(NaiveBayes, SeparableCorpusScoresHigh) {
  std::mt19937_64 rng(11);
  const auto data = dtdms::testing::synthetic_tweets(rng, 200);
  const auto split = split_corpus(data, {0.8, 0.1, 0.1, 5});
  const auto m = BaselineModel::train(split.train);
  EXPECT_GE(evaluate(m, split.test).accuracy, 0.95);
}

TEST(NaiveBayes, SingleClassTrainingRejected) {
  std::vector<TweetRecord> one{{"1", "", "", "a", 1}, {"2", "", "", "b", 1}};
  EXPECT_THROW(BaselineModel::train(one), ValueError);
  std::vector<TweetRecord> unlabeled{{"1", "", "", "a", std::nullopt}};
  EXPECT_THROW(BaselineModel::train(unlabeled), ValueError);
}

TEST(Metrics, MajorityClassTestSet) {
  // Model says 0 for everything unknown; half of the test set is 1.
  const auto m = BaselineModel::train(toy());
  std::vector<TweetRecord> test{{"a", "", "", "zzz", 0}, {"b", "", "", "yyy", 1}};
  const auto r = evaluate(m, test);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.precision[0], 0.5);
  EXPECT_DOUBLE_EQ(r.recall[0], 1.0);
  EXPECT_DOUBLE_EQ(r.precision[1], 0.0);
  EXPECT_DOUBLE_EQ(r.recall[1], 0.0);
  EXPECT_EQ(r.confusion[1][0], 1u);
  EXPECT_THROW(evaluate(m, {}), ValueError);
}

TEST(ModelFile, RoundTripAndTokenizerCheck) {
  const auto m = BaselineModel::train(toy());
  const Json j = Json::parse(m.to_json().dump());
  const auto back = BaselineModel::from_json(j);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.classify("fire").posterior[1], m.classify("fire").posterior[1]);

  Json bad = j;
  bad["tokenizer"] = "whitespace-v0";
  EXPECT_THROW(BaselineModel::from_json(bad), ValueError);
  bad = j;
  bad["format"] = "other";
  EXPECT_THROW(BaselineModel::from_json(bad), ParseError);
  bad = j;
  bad["log_likelihood"][0].erase(0);
  EXPECT_THROW(BaselineModel::from_json(bad), ParseError);
}

TEST(ReportReadings, PositiveTweetsInKnownZones) {
  const auto m = BaselineModel::train(toy());
  std::vector<TweetRecord> tweets{{"a", "", "Z1", "fire fire", std::nullopt},
                                  {"b", "", "Z9", "fire fire", std::nullopt},
                                  {"c", "", "Z1", "sunny", std::nullopt}};
  const auto out = report_readings(m, tweets, {"Z1", "Z2"}, 30.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].kind, ReadingKind::report);
  EXPECT_EQ(out[0].target_id, "Z1");
  EXPECT_EQ(out[0].ts, 30.0);
  EXPECT_EQ(out[0].sensor_id, "nlp:a");
}
