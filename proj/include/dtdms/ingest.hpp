#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "dtdms/city.hpp"
#include "dtdms/net.hpp"
#include "dtdms/quake.hpp"
#include "dtdms/snapshot.hpp"

namespace dtdms {

enum class ReadingKind { occupancy, structural, utility, report };

inline std::string_view to_string(ReadingKind k) {
  switch (k) {
    case ReadingKind::occupancy: return "occupancy";
    case ReadingKind::structural: return "structural";
    case ReadingKind::utility: return "utility";
    case ReadingKind::report: return "report";
  }
  return "occupancy";
}

inline std::optional<ReadingKind> parse_reading_kind(std::string_view s) {
  for (auto k : {ReadingKind::occupancy, ReadingKind::structural, ReadingKind::utility,
                 ReadingKind::report})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct SensorReading {
  double ts = 0.0;
  std::string sensor_id;
  ReadingKind kind = ReadingKind::occupancy;
  std::string target_id;
  std::variant<double, std::string> value;

  bool operator==(const SensorReading&) const = default;
};

/// A feed line that is not a well-formed reading record.
class MalformedReading : public ParseError {
 public:
  MalformedReading(std::string message, std::size_t byte_offset)
      : ParseError(message + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Parses one newline-delimited JSON record.
/// Throws MalformedReading, or ValueError for an unknown kind or negative ts.
inline SensorReading parse_reading(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw MalformedReading("not a JSON record", e.byte == 0 ? 0 : e.byte - 1);
  }
  if (!j.is_object()) throw MalformedReading("record must be a JSON object", 0);

  auto field = [&](const char* key) -> const Json& {
    auto it = j.find(key);
    if (it == j.end()) throw MalformedReading(std::string("missing field '") + key + "'", 0);
    return *it;
  };
  auto text = [&](const char* key) {
    const Json& v = field(key);
    if (!v.is_string()) throw MalformedReading(std::string("field '") + key + "' must be a string", 0);
    return v.get<std::string>();
  };

  SensorReading r;
  const Json& ts = field("ts");
  if (!ts.is_number()) throw MalformedReading("field 'ts' must be a number", 0);
  r.ts = ts.get<double>();
  if (!(r.ts >= 0.0)) throw ValueError("negative timestamp " + ts.dump());
  r.sensor_id = text("sensor_id");
  const std::string kind = text("kind");
  auto k = parse_reading_kind(kind);
  if (!k) throw ValueError("unknown reading kind '" + kind + "'");
  r.kind = *k;
  r.target_id = text("target_id");
  const Json& v = field("value");
  if (v.is_number())
    r.value = v.get<double>();
  else if (v.is_string())
    r.value = v.get<std::string>();
  else
    throw MalformedReading("field 'value' must be a number or a token", 0);
  return r;
}

/// Serializes a reading as one feed line (no trailing newline).
inline std::string to_line(const SensorReading& r) {
  OrderedJson j;
  j["ts"] = r.ts;
  j["sensor_id"] = r.sensor_id;
  j["kind"] = to_string(r.kind);
  j["target_id"] = r.target_id;
  if (const double* d = std::get_if<double>(&r.value))
    j["value"] = *d;
  else
    j["value"] = std::get<std::string>(r.value);
  return j.dump();
}

enum class ApplyOutcome { applied, ignored, stale, rejected };

/// Mutable twin fed by sensor readings.
///
/// Before a scenario is applied the twin is pre-disaster and occupancy
/// readings update the city; afterwards occupancy is frozen. Structural and
/// utility readings are overrides that beat the damage model, including when
/// the scenario is applied later.
class LiveTwin {
 public:
  explicit LiveTwin(CityGraph city, double staleness_tolerance = 0.0)
      : city_(std::move(city)), tolerance_(staleness_tolerance), head_(pre_disaster_snapshot(city_)) {}

  const CityGraph& city() const { return city_; }
  const TwinSnapshot& head() const { return head_; }
  bool post_disaster() const { return post_disaster_; }
  std::optional<double> watermark() const { return watermark_; }
  std::uint64_t stale_count() const { return stale_; }
  std::uint64_t rejected_count() const { return rejected_; }

  /// Applies the shock and makes the t = 0 snapshot the head.
  template <class Jitter = HashJitter>
  const TwinSnapshot& apply_scenario(const DisasterScenario& sc, const Jitter& jitter = {}) {
    TwinSnapshot s = apply_earthquake(city_, sc, jitter);
    for (const auto& [id, dmg] : damage_override_) {
      auto& st = s.building_state.at(id);
      st.damage = dmg;
      st.trapped = dmg == Damage::collapsed
                       ? round_persons(static_cast<double>(city_.find_building(id)->occupancy) *
                                       building_severity(city_, sc, *city_.find_building(id), jitter))
                       : 0;
    }
    for (const auto& [id, status] : infra_override_) s.infra_status.at(id) = status;
    s.reports = head_.reports;
    head_ = std::move(s);
    post_disaster_ = true;
    return head_;
  }

  /// Replaces the head with a later snapshot produced elsewhere (e.g. rescue
  /// evolution); sensor overrides stay in force.
  void set_head(TwinSnapshot s) {
    for (const auto& [id, status] : infra_override_) s.infra_status.at(id) = status;
    head_ = std::move(s);
  }

  ApplyOutcome apply(const SensorReading& r) {
    if (watermark_ && r.ts < *watermark_ - tolerance_) {
      ++stale_;
      return ApplyOutcome::stale;
    }
    auto outcome = validate(r);
    if (outcome == ApplyOutcome::rejected) {
      ++rejected_;
      return outcome;
    }
    if (outcome == ApplyOutcome::applied) mutate(r);
    watermark_ = watermark_ ? std::max(*watermark_, r.ts) : r.ts;
    if (post_disaster_) head_.t = std::max(head_.t, r.ts);
    return outcome;
  }

  /// Canonical dump of everything readings can change (counters excluded).
  OrderedJson state_json() const {
    OrderedJson occ = OrderedJson::object();
    for (const auto& b : city_.buildings) occ[b.id] = b.occupancy;
    OrderedJson dmg = OrderedJson::object();
    for (const auto& [id, d] : damage_override_) dmg[id] = to_string(d);
    OrderedJson infra = OrderedJson::object();
    for (const auto& [id, s] : infra_override_) infra[id] = to_string(s);
    return {{"post_disaster", post_disaster_},
            {"watermark", watermark_ ? OrderedJson(*watermark_) : OrderedJson(nullptr)},
            {"occupancy", occ},
            {"damage_override", dmg},
            {"infra_override", infra},
            {"head", snapshot_to_json(head_)}};
  }

  std::uint64_t state_hash() const { return fnv1a64(state_json().dump()); }

 private:
  static std::optional<std::string> token(const SensorReading& r) {
    if (auto s = std::get_if<std::string>(&r.value)) return *s;
    return std::nullopt;
  }
  static std::optional<double> number(const SensorReading& r) {
    if (auto d = std::get_if<double>(&r.value)) return *d;
    return std::nullopt;
  }

  ApplyOutcome validate(const SensorReading& r) const {
    switch (r.kind) {
      case ReadingKind::occupancy: {
        auto v = number(r);
        if (!city_.find_building(r.target_id) || !v || *v < 0 || *v != std::floor(*v))
          return ApplyOutcome::rejected;
        return post_disaster_ ? ApplyOutcome::ignored : ApplyOutcome::applied;
      }
      case ReadingKind::structural: {
        auto v = token(r);
        if (!city_.find_building(r.target_id) || !v || !parse_damage(*v)) return ApplyOutcome::rejected;
        return ApplyOutcome::applied;
      }
      case ReadingKind::utility: {
        auto v = token(r);
        if (!city_.find_infra(r.target_id) || !v || !parse_infra_status(*v))
          return ApplyOutcome::rejected;
        return ApplyOutcome::applied;
      }
      case ReadingKind::report: {
        auto v = number(r);
        if (r.target_id.empty() || (v && (*v < 1 || *v != std::floor(*v))))
          return ApplyOutcome::rejected;
        if (!v && token(r)) return ApplyOutcome::rejected;
        return ApplyOutcome::applied;
      }
    }
    return ApplyOutcome::rejected;
  }

  void mutate(const SensorReading& r) {
    switch (r.kind) {
      case ReadingKind::occupancy:
        city_.find_building_mut(r.target_id)->occupancy = static_cast<std::int64_t>(*number(r));
        break;
      case ReadingKind::structural: {
        const Damage d = *parse_damage(*token(r));
        damage_override_[r.target_id] = d;
        head_.building_state.at(r.target_id).damage = d;
        break;
      }
      case ReadingKind::utility: {
        const InfraStatus s = *parse_infra_status(*token(r));
        infra_override_[r.target_id] = s;
        head_.infra_status.at(r.target_id) = s;
        break;
      }
      case ReadingKind::report:
        head_.reports.push_back({r.target_id, static_cast<std::int64_t>(number(r).value_or(1.0))});
        break;
    }
  }

  CityGraph city_;
  double tolerance_;
  TwinSnapshot head_;
  bool post_disaster_ = false;
  std::optional<double> watermark_;
  std::uint64_t stale_ = 0;
  std::uint64_t rejected_ = 0;
  std::map<std::string, Damage> damage_override_;
  std::map<std::string, InfraStatus> infra_override_;
};

/// Reads and validates a whole replay file: every line must parse and
/// timestamps must be nondecreasing. Blank lines are skipped. Errors carry
/// 1-based line numbers.
inline std::vector<SensorReading> read_feed(std::istream& in) {
  std::vector<SensorReading> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    SensorReading r;
    try {
      r = parse_reading(line);
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!out.empty() && r.ts < out.back().ts)
      throw ParseError("feed is not sorted by ts", lineno, "ts");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<SensorReading> read_feed_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open '" + file.string() + "'");
  return read_feed(in);
}

struct ThreadSleeper {
  void operator()(std::chrono::duration<double> d) const { std::this_thread::sleep_for(d); }
};

/// Emits the readings of a replay file in order, spacing them by the ts gap
/// divided by `speed` (infinity = no pacing). Returns the number emitted.
template <class Sink, class Sleeper = ThreadSleeper>
std::size_t replay(const std::filesystem::path& file, double speed, Sink&& sink,
                   const Sleeper& sleep = {}) {
  if (!(speed > 0.0)) throw ValueError("replay speed must be > 0");
  const auto readings = read_feed_file(file);
  for (std::size_t i = 0; i < readings.size(); ++i) {
    if (i > 0 && std::isfinite(speed)) {
      const double gap = (readings[i].ts - readings[i - 1].ts) / speed;
      if (gap > 0) sleep(std::chrono::duration<double>(gap));
    }
    sink(readings[i]);
  }
  return readings.size();
}

/// Single-writer application queue. Producers push from any thread; one
/// worker applies readings strictly in arrival order.
class IngestQueue {
 public:
  using Apply = std::function<void(const SensorReading&)>;

  explicit IngestQueue(Apply apply) : apply_(std::move(apply)), worker_([this] { run(); }) {}
  ~IngestQueue() { close(); }

  IngestQueue(const IngestQueue&) = delete;
  IngestQueue& operator=(const IngestQueue&) = delete;

  void push(SensorReading r) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      queue_.push_back(std::move(r));
      ++pushed_;
    }
    cv_.notify_all();
  }

  /// Blocks until every pushed reading has been applied.
  void drain() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return applied_ == pushed_; });
  }

  /// Blocks until at least `n` readings have been applied or the timeout hits.
  bool wait_applied(std::uint64_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return applied_ >= n; });
  }

  std::uint64_t applied() const {
    std::lock_guard lock(mu_);
    return applied_;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      closed_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

 private:
  void run() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
      if (queue_.empty()) return;
      SensorReading r = std::move(queue_.front());
      queue_.pop_front();
      lock.unlock();
      apply_(r);
      lock.lock();
      ++applied_;
      cv_.notify_all();
    }
  }

  Apply apply_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<SensorReading> queue_;
  std::uint64_t pushed_ = 0;
  std::uint64_t applied_ = 0;
  bool closed_ = false;
  std::thread worker_;
};

/// TCP ingress for the line protocol. Each connection streams records; on
/// the first malformed record the server writes one {"error": ...} line and
/// closes that connection.
class FeedServer {
 public:
  using Sink = std::function<void(SensorReading)>;

  FeedServer(std::string host, std::uint16_t port, Sink sink)
      : listener_(net::listen_tcp(host, port)), sink_(std::move(sink)) {
    port_ = net::local_port(listener_);
    acceptor_ = std::thread([this] { accept_loop(); });
  }
  ~FeedServer() { stop(); }

  FeedServer(const FeedServer&) = delete;
  FeedServer& operator=(const FeedServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::uint64_t protocol_errors() const { return errors_.load(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    std::list<std::thread> conns;
    {
      std::lock_guard lock(mu_);
      conns.swap(conns_);
    }
    for (auto& t : conns) t.join();
    listener_.reset();
  }

 private:
  void accept_loop() {
    while (!stopping_) {
      if (!listener_.readable(100)) continue;
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) continue;
      std::lock_guard lock(mu_);
      conns_.emplace_back([this, s = net::Socket(fd)]() mutable { serve(std::move(s)); });
    }
  }

  void serve(net::Socket s) {
    net::LineReader reader(s);
    std::string line;
    std::size_t lineno = 0;
    while (reader.next(line, [this] { return !stopping_.load(); })) {
      ++lineno;
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      try {
        sink_(parse_reading(line));
      } catch (const Error& e) {
        ++errors_;
        OrderedJson err{{"error", e.what()}, {"line", lineno}};
        s.send_all(err.dump() + "\n");
        return;
      }
    }
  }

  net::Socket listener_;
  Sink sink_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> errors_{0};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::thread> conns_;
};

}  // namespace dtdms
