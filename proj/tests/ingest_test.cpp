#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "dtdms/ingest.hpp"
#include "test_util.hpp"

using namespace dtdms;
using dtdms::testing::TempDir;

namespace {

CityGraph desk() { return load_city(std::string(DTDMS_DATA_DIR) + "/desk_city.json"); }

SensorReading reading(double ts, ReadingKind kind, std::string target, std::variant<double, std::string> v) {
  return {ts, "s-" + target, kind, std::move(target), std::move(v)};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST(ParseReading, RoundTripsNumericAndTokenValues) {
  const auto a = parse_reading(R"({"ts":12.5,"sensor_id":"s1","kind":"occupancy","target_id":"B1","value":40})");
  EXPECT_EQ(a.ts, 12.5);
  EXPECT_EQ(a.kind, ReadingKind::occupancy);
  EXPECT_EQ(std::get<double>(a.value), 40.0);
  EXPECT_EQ(parse_reading(to_line(a)), a);

  const auto b = parse_reading(R"({"ts":0,"sensor_id":"s2","kind":"utility","target_id":"W1","value":"down"})");
  EXPECT_EQ(std::get<std::string>(b.value), "down");
  EXPECT_EQ(parse_reading(to_line(b)), b);
}

TEST(ParseReading, MalformedRecordsRaise) {
  EXPECT_THROW(parse_reading("{not json"), MalformedReading);
  EXPECT_THROW(parse_reading("[1,2]"), MalformedReading);
  EXPECT_THROW(parse_reading(R"({"sensor_id":"s","kind":"report","target_id":"z","value":1})"), MalformedReading);
  EXPECT_THROW(parse_reading(R"({"ts":"x","sensor_id":"s","kind":"report","target_id":"z","value":1})"),
               MalformedReading);
}

TEST(ParseReading, NegativeTimestampAndUnknownKind) {
  EXPECT_THROW(parse_reading(R"({"ts":-1,"sensor_id":"s","kind":"report","target_id":"z","value":1})"), ValueError);
  EXPECT_THROW(parse_reading(R"({"ts":1,"sensor_id":"s","kind":"smell","target_id":"z","value":1})"), ValueError);
}

TEST(LiveTwinTest, OccupancyUpdatesBeforeDisasterOnly) {
  LiveTwin twin(desk());
  EXPECT_EQ(twin.apply(reading(1, ReadingKind::occupancy, "B1", 7.0)), ApplyOutcome::applied);
  EXPECT_EQ(twin.city().find_building("B1")->occupancy, 7);
  DisasterScenario sc;
  sc.epicenter = {41.004, 29.008};
  sc.magnitude = 5;
  twin.apply_scenario(sc);
  EXPECT_TRUE(twin.post_disaster());
  EXPECT_EQ(twin.apply(reading(2, ReadingKind::occupancy, "B1", 99.0)), ApplyOutcome::ignored);
  EXPECT_EQ(twin.city().find_building("B1")->occupancy, 7);
}

TEST(LiveTwinTest, UtilityOverrideSurvivesLaterSnapshots) {
  LiveTwin twin(desk());
  EXPECT_EQ(twin.apply(reading(1, ReadingKind::utility, "W1", std::string("down"))), ApplyOutcome::applied);
  EXPECT_EQ(twin.head().infra_status.at("W1"), InfraStatus::down);
  DisasterScenario sc;
  sc.magnitude = 0;
  twin.apply_scenario(sc);
  EXPECT_EQ(twin.head().infra_status.at("W1"), InfraStatus::down);
  auto next = twin.head();
  next.t = 100;
  next.infra_status["W1"] = InfraStatus::up;
  twin.set_head(next);
  EXPECT_EQ(twin.head().infra_status.at("W1"), InfraStatus::down);
}

TEST(LiveTwinTest, StructuralCollapseOverrideComputesTrapped) {
  LiveTwin twin(desk());
  twin.apply(reading(0, ReadingKind::structural, "B1", std::string("collapsed")));
  DisasterScenario sc;
  sc.magnitude = 0;
  const auto& s = twin.apply_scenario(sc, PinnedJitter{0.5});
  EXPECT_EQ(s.building_state.at("B1").damage, Damage::collapsed);
  EXPECT_EQ(s.building_state.at("B1").trapped, 0);  // severity is 0 at magnitude 0
  EXPECT_EQ(s.count(Damage::collapsed), 1);
}

TEST(LiveTwinTest, StaleReadingsDroppedAndCounted) {
  LiveTwin twin(desk());
  EXPECT_EQ(twin.apply(reading(10, ReadingKind::report, "z1", 1.0)), ApplyOutcome::applied);
  EXPECT_EQ(twin.apply(reading(9, ReadingKind::report, "z1", 1.0)), ApplyOutcome::stale);
  EXPECT_EQ(twin.stale_count(), 1u);
  EXPECT_EQ(twin.watermark(), 10.0);
  EXPECT_EQ(twin.head().reports.size(), 1u);

  LiveTwin tolerant(desk(), 5.0);
  tolerant.apply(reading(10, ReadingKind::report, "z1", 1.0));
  EXPECT_EQ(tolerant.apply(reading(6, ReadingKind::report, "z1", 1.0)), ApplyOutcome::applied);
  EXPECT_EQ(tolerant.watermark(), 10.0);
}

TEST(LiveTwinTest, InvalidReadingsLeaveStateUntouched) {
  LiveTwin twin(desk());
  twin.apply(reading(1, ReadingKind::occupancy, "B2", 3.0));
  const auto before = twin.state_hash();
  const std::vector<SensorReading> bad{
      reading(2, ReadingKind::occupancy, "nope", 3.0),
      reading(2, ReadingKind::occupancy, "B2", -1.0),
      reading(2, ReadingKind::occupancy, "B2", 2.5),
      reading(2, ReadingKind::occupancy, "B2", std::string("many")),
      reading(2, ReadingKind::structural, "B2", std::string("wobbly")),
      reading(2, ReadingKind::structural, "W1", std::string("collapsed")),
      reading(2, ReadingKind::utility, "B2", std::string("down")),
      reading(2, ReadingKind::utility, "W1", 0.0),
      reading(2, ReadingKind::report, "", 1.0),
      reading(2, ReadingKind::report, "z", 0.0),
      reading(2, ReadingKind::report, "z", std::string("x")),
  };
  for (const auto& r : bad) EXPECT_EQ(twin.apply(r), ApplyOutcome::rejected) << to_line(r);
  EXPECT_EQ(twin.state_hash(), before);
  EXPECT_EQ(twin.rejected_count(), bad.size());
}

TEST(LiveTwinTest, PostDisasterReadingsAdvanceHeadTime) {
  LiveTwin twin(desk());
  DisasterScenario sc;
  twin.apply_scenario(sc);
  twin.apply(reading(42, ReadingKind::report, "z", 3.0));
  EXPECT_EQ(twin.head().t, 42.0);
  ASSERT_EQ(twin.head().reports.size(), 1u);
  EXPECT_EQ(twin.head().reports[0].count, 3);
}

TEST(ReadFeed, ParsesAndSkipsBlankLines) {
  std::istringstream in(
      R"({"ts":0,"sensor_id":"a","kind":"report","target_id":"z","value":1})"
      "\n\n"
      R"({"ts":1,"sensor_id":"a","kind":"report","target_id":"z","value":2})"
      "\r\n"
      R"({"ts":1,"sensor_id":"a","kind":"report","target_id":"z","value":3})");
  const auto v = read_feed(in);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(std::get<double>(v[2].value), 3.0);
}

TEST(ReadFeed, UnsortedNamesLineAndField) {
  std::istringstream in(
      R"({"ts":5,"sensor_id":"a","kind":"report","target_id":"z","value":1})"
      "\n"
      R"({"ts":4,"sensor_id":"a","kind":"report","target_id":"z","value":1})"
      "\n");
  try {
    read_feed(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "ts");
  }
}

TEST(ReadFeed, MalformedLineNumbered) {
  std::istringstream in("\n{\"ts\":1}\n");
  try {
    read_feed(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Replay, EmptyFileEmitsNothing) {
  TempDir dir;
  write_file(dir / "empty.ndjson", "");
  int n = 0;
  EXPECT_EQ(replay(dir / "empty.ndjson", 1.0, [&](const SensorReading&) { ++n; }), 0u);
  EXPECT_EQ(n, 0);
}

TEST(Replay, PacesByTimestampGapOverSpeed) {
  TempDir dir;
  write_file(dir / "f.ndjson",
             R"({"ts":0,"sensor_id":"a","kind":"report","target_id":"z","value":1})"
             "\n"
             R"({"ts":10,"sensor_id":"a","kind":"report","target_id":"z","value":1})"
             "\n"
             R"({"ts":10,"sensor_id":"a","kind":"report","target_id":"z","value":1})"
             "\n"
             R"({"ts":16,"sensor_id":"a","kind":"report","target_id":"z","value":1})"
             "\n");
  std::vector<double> sleeps;
  auto fake = [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); };
  std::vector<double> seen;
  EXPECT_EQ(replay(dir / "f.ndjson", 2.0, [&](const SensorReading& r) { seen.push_back(r.ts); }, fake), 4u);
  EXPECT_EQ(seen, (std::vector<double>{0, 10, 10, 16}));
  EXPECT_EQ(sleeps, (std::vector<double>{5, 3}));

  sleeps.clear();
  replay(dir / "f.ndjson", std::numeric_limits<double>::infinity(), [](const SensorReading&) {}, fake);
  EXPECT_TRUE(sleeps.empty());
  EXPECT_THROW(replay(dir / "f.ndjson", 0.0, [](const SensorReading&) {}, fake), ValueError);
}

TEST(IngestQueueTest, AppliesInArrivalOrderFromManyProducers) {
  std::vector<std::string> applied;
  IngestQueue q([&](const SensorReading& r) { applied.push_back(r.sensor_id); });
  std::vector<std::thread> producers;
  for (int p = 0; p < 4; ++p)
    producers.emplace_back([&, p] {
      for (int i = 0; i < 250; ++i)
        q.push({static_cast<double>(i), std::to_string(p) + ":" + std::to_string(i), ReadingKind::report, "z", 1.0});
    });
  for (auto& t : producers) t.join();
  q.drain();
  ASSERT_EQ(applied.size(), 1000u);
  std::map<char, int> last;
  for (const auto& id : applied) {
    const int i = std::stoi(id.substr(2));
    auto it = last.find(id[0]);
    if (it != last.end()) {
      EXPECT_GT(i, it->second);
    }
    last[id[0]] = i;
  }
}

TEST(FeedServerTest, StreamsReadingsAndReportsProtocolErrors) {
  std::mutex mu;
  std::vector<SensorReading> got;
  FeedServer server("127.0.0.1", 0, [&](SensorReading r) {
    std::lock_guard lock(mu);
    got.push_back(std::move(r));
  });
  ASSERT_GT(server.port(), 0);

  auto sock = net::connect_tcp("127.0.0.1", server.port());
  const auto r1 = reading(1, ReadingKind::report, "z", 2.0);
  ASSERT_TRUE(sock.send_all(to_line(r1) + "\n\n"));
  ASSERT_TRUE(sock.send_all("{\"ts\": oops\n"));
  net::LineReader reader(sock);
  std::string line;
  ASSERT_TRUE(reader.next(line, [] { return true; }));
  const auto err = Json::parse(line);
  EXPECT_TRUE(err.contains("error"));
  EXPECT_EQ(err["line"], 3);
  EXPECT_FALSE(reader.next(line, [] { return true; }));  // server closed the connection
  EXPECT_EQ(server.protocol_errors(), 1u);
  server.stop();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], r1);
}
