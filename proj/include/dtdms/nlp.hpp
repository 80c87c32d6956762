#pragma once

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dtdms/city.hpp"
#include "dtdms/ingest.hpp"

namespace dtdms::nlp {

struct TweetRecord {
  std::string id;
  std::string keyword;
  std::string location;
  std::string text;
  std::optional<int> target;  // 0 = not a disaster, 1 = disaster

  bool operator==(const TweetRecord&) const = default;
};

/// RFC 4180 reader: quoted fields may hold commas, doubled quotes and newlines.
/// Each row carries the 1-based line it started on.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

inline std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string cell;
  bool quoted = false;
  bool row_open = false;
  std::size_t line = 1;
  row.line = 1;

  auto end_cell = [&] {
    row.cells.push_back(std::move(cell));
    cell.clear();
  };
  auto end_row = [&] {
    end_cell();
    rows.push_back(std::move(row));
    row = CsvRow{};
    row_open = false;
  };

  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!row_open) {
      row.line = line;
      row_open = true;
    }
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        break;
      case ',':
        end_cell();
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_row();
        break;
      default:
        cell += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", row.line);
  if (row_open) end_row();
  return rows;
}

/// Loads a labelled (or unlabelled) tweet CSV with header
/// id,keyword,location,text[,target].
inline std::vector<TweetRecord> parse_corpus(std::string_view csv) {
  auto rows = parse_csv(csv);
  if (rows.empty()) throw ParseError("empty CSV, expected a header row", 1);

  const auto& header = rows.front().cells;
  auto column = [&](const char* name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  std::size_t cols[4];
  const char* required[] = {"id", "keyword", "location", "text"};
  for (int i = 0; i < 4; ++i) {
    auto c = column(required[i]);
    if (!c) throw ParseError("missing column", 1, required[i]);
    cols[i] = *c;
  }
  const auto target_col = column("target");

  std::vector<TweetRecord> out;
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.cells.size() == 1 && row.cells[0].empty()) continue;
    if (row.cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, got " +
                           std::to_string(row.cells.size()),
                       row.line);
    TweetRecord rec{row.cells[cols[0]], row.cells[cols[1]], row.cells[cols[2]], row.cells[cols[3]],
                    std::nullopt};
    if (target_col && !row.cells[*target_col].empty()) {
      const auto& t = row.cells[*target_col];
      if (t != "0" && t != "1")
        throw ParseError("target must be 0 or 1, got '" + t + "'", row.line, "target");
      rec.target = t == "1" ? 1 : 0;
    }
    if (!ids.insert(rec.id).second) throw ParseError("duplicate id '" + rec.id + "'", row.line, "id");
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<TweetRecord> load_corpus(const std::filesystem::path& csv) {
  return parse_corpus(detail::read_file(csv));
}

struct SplitSpec {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train > 0 && dev > 0 && test > 0)) throw ValueError("split ratios must be > 0");
    if (std::abs(train + dev + test - 1.0) > 1e-9) throw ValueError("split ratios must sum to 1");
  }
};

/// floor(n * ratio), nudged by 1e-9 so ratios like 0.29 of 100 are not lost
/// to binary rounding.
inline std::size_t floor_share(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

struct SplitSizes {
  std::size_t train, dev, test;
  bool operator==(const SplitSizes&) const = default;
};

/// dev and test get floor(n * ratio); train takes the remainder.
inline SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  const std::size_t dev = floor_share(n, spec.dev);
  const std::size_t test = floor_share(n, spec.test);
  return {n - dev - test, dev, test};
}

/// Seeded Fisher-Yates with mt19937_64 and rejection sampling, so the
/// permutation is identical on every standard library.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do draw = rng();
    while (draw >= limit);
    std::swap(idx[i - 1], idx[draw % bound]);
  }
  return idx;
}

struct Split {
  std::vector<TweetRecord> train, dev, test;
};

inline Split split_corpus(const std::vector<TweetRecord>& records, const SplitSpec& spec) {
  if (records.empty()) throw ValueError("cannot split an empty corpus");
  const auto sizes = split_sizes(records.size(), spec);
  const auto perm = seeded_permutation(records.size(), spec.seed);
  Split s;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto& r = records[perm[i]];
    if (i < sizes.train)
      s.train.push_back(r);
    else if (i < sizes.train + sizes.dev)
      s.dev.push_back(r);
    else
      s.test.push_back(r);
  }
  return s;
}

inline constexpr std::string_view kTokenizerVersion = "lower-alnum-v1";

/// Lowercases ASCII and splits on runs of ASCII non-alphanumerics. Bytes >= 0x80
/// count as word characters so UTF-8 words stay whole.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Classifier plug-in point; the naive Bayes baseline is the shipped one.
class Classifier {
 public:
  virtual ~Classifier() = default;
  struct Result {
    int label = 0;
    double score = 1.0;      // posterior of `label`
    double posterior[2] = {0.5, 0.5};
  };
  virtual Result classify(std::string_view text) const = 0;
};

/// Multinomial naive Bayes over word tokens with add-one smoothing.
class BaselineModel final : public Classifier {
 public:
  BaselineModel() = default;

  /// Trains on labelled records. Throws ValueError unless both classes occur.
  static BaselineModel train(const std::vector<TweetRecord>& train_set) {
    std::size_t docs[2] = {0, 0};
    std::map<std::string, std::uint64_t> counts[2];
    std::uint64_t totals[2] = {0, 0};
    for (const auto& r : train_set) {
      if (!r.target) throw ValueError("training record '" + r.id + "' has no label");
      const int c = *r.target;
      ++docs[c];
      for (auto& tok : tokenize(r.text)) {
        ++counts[c][tok];
        ++totals[c];
      }
    }
    if (docs[0] == 0 || docs[1] == 0) throw ValueError("training set must contain both classes");

    BaselineModel m;
    std::set<std::string> vocab;
    for (const auto& cc : counts)
      for (const auto& [tok, _] : cc) vocab.insert(tok);
    const double v = static_cast<double>(vocab.size());
    const double n = static_cast<double>(docs[0] + docs[1]);
    for (int c = 0; c < 2; ++c) m.prior_[c] = static_cast<double>(docs[c]) / n;
    std::size_t i = 0;
    for (const auto& tok : vocab) {
      m.vocab_.emplace(tok, i++);
      for (int c = 0; c < 2; ++c) {
        auto it = counts[c].find(tok);
        const double k = it == counts[c].end() ? 0.0 : static_cast<double>(it->second);
        m.loglik_[c].push_back(std::log((k + 1.0) / (static_cast<double>(totals[c]) + v)));
      }
    }
    return m;
  }

  Result classify(std::string_view text) const override {
    double lp[2] = {std::log(prior_[0]), std::log(prior_[1])};
    for (const auto& tok : tokenize(text)) {
      auto it = vocab_.find(tok);
      if (it == vocab_.end()) continue;
      for (int c = 0; c < 2; ++c) lp[c] += loglik_[c][it->second];
    }
    const double m = std::max(lp[0], lp[1]);
    const double e0 = std::exp(lp[0] - m);
    const double e1 = std::exp(lp[1] - m);
    Result r;
    r.posterior[0] = e0 / (e0 + e1);
    r.posterior[1] = e1 / (e0 + e1);
    r.label = r.posterior[1] > r.posterior[0] ? 1 : 0;
    r.score = r.posterior[r.label];
    return r;
  }

  std::size_t vocabulary_size() const { return vocab_.size(); }
  double prior(int c) const { return prior_[c]; }

  /// Log P(token | class), nullopt for tokens outside the vocabulary.
  std::optional<double> log_likelihood(int c, const std::string& token) const {
    auto it = vocab_.find(token);
    if (it == vocab_.end()) return std::nullopt;
    return loglik_[c][it->second];
  }

  OrderedJson to_json() const {
    std::vector<std::string> words(vocab_.size());
    for (const auto& [tok, i] : vocab_) words[i] = tok;
    return {{"format", "dtdms-naive-bayes"},
            {"version", 1},
            {"tokenizer", kTokenizerVersion},
            {"vocabulary", words},
            {"priors", {prior_[0], prior_[1]}},
            {"log_likelihood", {loglik_[0], loglik_[1]}}};
  }

  static BaselineModel from_json(const Json& j) {
    detail::Fields f(j, "");
    if (f.string("format") != "dtdms-naive-bayes") throw ParseError("not a baseline model", 0, "format");
    if (f.integer("version") != 1) throw ParseError("unsupported model version", 0, "version");
    if (f.string("tokenizer") != kTokenizerVersion)
      throw ValueError("model tokenizer '" + f.string("tokenizer") + "' does not match '" +
                       std::string(kTokenizerVersion) + "'");
    BaselineModel m;
    const auto words = f.array("vocabulary").get<std::vector<std::string>>();
    const auto priors = f.array("priors").get<std::vector<double>>();
    const auto ll = f.array("log_likelihood").get<std::vector<std::vector<double>>>();
    if (priors.size() != 2 || ll.size() != 2 || ll[0].size() != words.size() ||
        ll[1].size() != words.size())
      throw ParseError("inconsistent model dimensions");
    if (std::abs(priors[0] + priors[1] - 1.0) > 1e-9) throw ValueError("model priors must sum to 1");
    for (std::size_t i = 0; i < words.size(); ++i)
      if (!m.vocab_.emplace(words[i], i).second) throw ParseError("duplicate vocabulary token");
    m.prior_[0] = priors[0];
    m.prior_[1] = priors[1];
    m.loglik_[0] = ll[0];
    m.loglik_[1] = ll[1];
    return m;
  }

  bool operator==(const BaselineModel& o) const {
    return vocab_ == o.vocab_ && prior_[0] == o.prior_[0] && prior_[1] == o.prior_[1] &&
           loglik_[0] == o.loglik_[0] && loglik_[1] == o.loglik_[1];
  }

 private:
  std::map<std::string, std::size_t> vocab_;
  double prior_[2] = {0.5, 0.5};
  std::vector<double> loglik_[2];
};

struct Metrics {
  double accuracy = 0.0;
  double precision[2] = {0.0, 0.0};  // 0 when the class is never predicted
  double recall[2] = {0.0, 0.0};     // 0 when the class never occurs
  std::size_t n = 0;
  std::size_t confusion[2][2] = {{0, 0}, {0, 0}};  // [actual][predicted]

  bool operator==(const Metrics&) const = default;
};

inline Metrics evaluate(const Classifier& model, const std::vector<TweetRecord>& test_set) {
  if (test_set.empty()) throw ValueError("cannot evaluate on an empty test set");
  Metrics m;
  std::size_t correct = 0;
  for (const auto& r : test_set) {
    if (!r.target) throw ValueError("test record '" + r.id + "' has no label");
    const int predicted = model.classify(r.text).label;
    ++m.confusion[*r.target][predicted];
    correct += predicted == *r.target;
  }
  m.n = test_set.size();
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  for (int c = 0; c < 2; ++c) {
    const std::size_t tp = m.confusion[c][c];
    const std::size_t predicted = m.confusion[0][c] + m.confusion[1][c];
    const std::size_t actual = m.confusion[c][0] + m.confusion[c][1];
    m.precision[c] = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.recall[c] = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
  }
  return m;
}

inline OrderedJson metrics_to_json(const Metrics& m) {
  return {{"n", m.n},
          {"accuracy", m.accuracy},
          {"precision", {m.precision[0], m.precision[1]}},
          {"recall", {m.recall[0], m.recall[1]}},
          {"confusion", {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}}}};
}

/// Positive tweets whose location exactly names a zone become unverified
/// report readings for the twin.
inline std::vector<SensorReading> report_readings(const Classifier& model,
                                                  const std::vector<TweetRecord>& tweets,
                                                  const std::set<std::string>& zones, double ts) {
  std::vector<SensorReading> out;
  for (const auto& t : tweets) {
    if (!zones.contains(t.location)) continue;
    if (model.classify(t.text).label != 1) continue;
    out.push_back({ts, "nlp:" + t.id, ReadingKind::report, t.location, 1.0});
  }
  return out;
}

}  // namespace dtdms::nlp
