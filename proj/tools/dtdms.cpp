// dtdms: command-line entry points for the disaster-management twin.
//
//   dtdms serve    --city F [--scenario F] [--mode education|estimating] --port P
//                  [--feed-port P] [--replay F --speed X]
//   dtdms estimate --city F --scenario F --out F
//   dtdms nlp train|eval|classify ...
//   dtdms feed     --port P --file F        (push a replay file to a live feed)

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "dtdms/city.hpp"
#include "dtdms/ingest.hpp"
#include "dtdms/net.hpp"
#include "dtdms/nlp.hpp"
#include "dtdms/quake.hpp"
#include "dtdms/service.hpp"

namespace {

using namespace dtdms;

double parse_speed(const std::string& s) {
  if (s == "inf" || s == "max") return std::numeric_limits<double>::infinity();
  const double v = std::stod(s);
  if (!(v > 0)) throw ValueError("--speed must be > 0 or 'inf'");
  return v;
}

/// Blocks SIGINT/SIGTERM in every thread and waits for one on a helper.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }

  template <class Fn>
  std::thread on_signal(Fn fn) {
    return std::thread([this, fn] {
      int sig = 0;
      sigwait(&set_, &sig);
      fn();
    });
  }

 private:
  sigset_t set_;
};

int cmd_serve(const std::string& city_file, const std::string& scenario_file, const std::string& mode_s,
              const std::string& host, int port, int feed_port, const std::string& replay_file,
              const std::string& speed_s, double horizon_hours) {
  auto mode = parse_mode(mode_s);
  if (!mode) throw ValueError("--mode must be education or estimating");
  SessionOptions options;
  options.horizon_s = horizon_hours * 3600.0;

  SignalWaiter signals;
  Session session(load_city(city_file), *mode, options);
  if (!scenario_file.empty()) session.load_scenario(load_scenario(scenario_file));

  IngestQueue queue([&](const SensorReading& r) {
    if (session.ingest(r) == ApplyOutcome::stale)
      std::cerr << "ingest: stale reading from " << r.sensor_id << " at ts=" << r.ts << "\n";
  });

  std::optional<FeedServer> feed;
  if (feed_port >= 0) {
    feed.emplace("0.0.0.0", static_cast<std::uint16_t>(feed_port),
                 [&](SensorReading r) { queue.push(std::move(r)); });
    std::cerr << "feed: listening on port " << feed->port() << "\n";
  }

  std::thread replayer;
  if (!replay_file.empty()) {
    const double speed = parse_speed(speed_s);
    replayer = std::thread([&, speed] {
      try {
        const auto n = replay(replay_file, speed, [&](const SensorReading& r) { queue.push(r); });
        std::cerr << "replay: " << n << " readings queued\n";
      } catch (const std::exception& e) {
        std::cerr << "replay: " << e.what() << "\n";
      }
    });
  }

  ApiServer api(session);
  const int bound = api.bind(host, port);
  std::cerr << "serve: http://" << host << ":" << bound << " (" << to_string(*mode) << " mode)\n";
  auto stopper = signals.on_signal([&] { api.stop(); });
  api.run();

  if (replayer.joinable()) replayer.join();
  if (feed) feed->stop();
  queue.close();
  stopper.join();
  return 0;
}

int cmd_feed(const std::string& host, int port, const std::string& file) {
  const auto readings = read_feed_file(file);
  auto sock = net::connect_tcp(host, static_cast<std::uint16_t>(port));
  for (const auto& r : readings)
    if (!sock.send_all(to_line(r) + "\n")) throw Error("feed connection closed by peer");
  sock.shutdown_write();
  net::LineReader reader(sock);
  std::string line;
  if (reader.next(line, [] { return true; })) {
    std::cerr << "feed: server replied " << line << "\n";
    return 1;
  }
  std::cout << readings.size() << " readings sent\n";
  return 0;
}

Json read_model_file(const std::string& path) { return detail::parse_json_text(detail::read_file(path)); }

int cmd_nlp_train(const std::string& corpus, std::uint64_t seed, const std::string& out) {
  const auto records = nlp::load_corpus(corpus);
  nlp::SplitSpec spec;
  spec.seed = seed;
  const auto split = nlp::split_corpus(records, spec);
  const auto model = nlp::BaselineModel::train(split.train);
  OrderedJson j = model.to_json();
  j["split"] = {{"seed", seed}, {"ratios", {spec.train, spec.dev, spec.test}}};
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + out + "'");
  f << j.dump() << "\n";

  std::cout << "records " << records.size() << "  train " << split.train.size() << "  dev "
            << split.dev.size() << "  test " << split.test.size() << "\n";
  std::cout << "vocabulary " << model.vocabulary_size() << "\n";
  if (!split.dev.empty())
    std::cout << "dev accuracy " << nlp::evaluate(model, split.dev).accuracy << "\n";
  return 0;
}

int cmd_nlp_eval(const std::string& model_file, const std::string& corpus,
                 std::optional<std::uint64_t> seed, const std::string& which) {
  const Json mj = read_model_file(model_file);
  const auto model = nlp::BaselineModel::from_json(mj);
  const auto records = nlp::load_corpus(corpus);
  std::vector<nlp::TweetRecord> eval_set;
  if (which == "all") {
    eval_set = records;
  } else {
    nlp::SplitSpec spec;
    if (seed)
      spec.seed = *seed;
    else if (mj.contains("split"))
      spec.seed = mj["split"]["seed"].get<std::uint64_t>();
    const auto split = nlp::split_corpus(records, spec);
    if (which == "test")
      eval_set = split.test;
    else if (which == "dev")
      eval_set = split.dev;
    else
      throw ValueError("--split must be test, dev or all");
  }
  std::cout << nlp::metrics_to_json(nlp::evaluate(model, eval_set)).dump(2) << "\n";
  return 0;
}

int cmd_nlp_classify(const std::string& model_file, const std::string& text) {
  const auto model = nlp::BaselineModel::from_json(read_model_file(model_file));
  const auto r = model.classify(text);
  std::cout << OrderedJson{{"label", r.label}, {"score", r.score}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Digital-twin disaster management simulator"};
  app.require_subcommand(1);

  std::string city, scenario, out, mode = "education", host = "127.0.0.1", replay_file, speed = "inf";
  int port = 8080, feed_port = -1;
  double horizon_hours = 72.0;

  auto* serve = app.add_subcommand("serve", "Run the HTTP/event-stream API for one session");
  serve->add_option("--city", city, "City file (JSON)")->required();
  serve->add_option("--scenario", scenario, "Scenario file (JSON) applied at start");
  serve->add_option("--mode", mode, "education or estimating")->capture_default_str();
  serve->add_option("--host", host, "HTTP bind address")->capture_default_str();
  serve->add_option("--port", port, "HTTP port")->capture_default_str();
  serve->add_option("--feed-port", feed_port, "TCP port for the live sensor feed");
  serve->add_option("--replay", replay_file, "Replay file (*.ndjson) fed into the twin");
  serve->add_option("--speed", speed, "Replay speed multiplier, or 'inf'")->capture_default_str();
  serve->add_option("--horizon-hours", horizon_hours, "Session horizon")->capture_default_str();

  auto* estimate = app.add_subcommand("estimate", "Auto-select the best plan and write its report");
  estimate->add_option("--city", city, "City file (JSON)")->required();
  estimate->add_option("--scenario", scenario, "Scenario file (JSON)")->required();
  estimate->add_option("--out", out, "Report output file")->required();

  std::string feed_file;
  auto* feed = app.add_subcommand("feed", "Send a replay file to a live feed port");
  feed->add_option("--host", host)->capture_default_str();
  feed->add_option("--port", port)->required();
  feed->add_option("--file", feed_file)->required();

  auto* nlp_cmd = app.add_subcommand("nlp", "Disaster-tweet baseline classifier");
  nlp_cmd->require_subcommand(1);
  std::string corpus, model, text, which = "test";
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> eval_seed;

  auto* train = nlp_cmd->add_subcommand("train", "Split 80:10:10 and train on the train part");
  train->add_option("--corpus", corpus)->required();
  train->add_option("--seed", seed)->capture_default_str();
  train->add_option("--out", model)->required();

  auto* eval = nlp_cmd->add_subcommand("eval", "Evaluate a model (default: the test split)");
  eval->add_option("--model", model)->required();
  eval->add_option("--corpus", corpus)->required();
  eval->add_option("--seed", eval_seed, "Split seed (default: the model's training seed)");
  eval->add_option("--split", which, "test, dev or all")->capture_default_str();

  auto* classify = nlp_cmd->add_subcommand("classify", "Classify one text");
  classify->add_option("--model", model)->required();
  classify->add_option("--text", text)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve)
      return cmd_serve(city, scenario, mode, host, port, feed_port, replay_file, speed, horizon_hours);
    if (*estimate) return run_estimate(city, scenario, out);
    if (*feed) return cmd_feed(host, port, feed_file);
    if (*train) return cmd_nlp_train(corpus, seed, model);
    if (*eval) return cmd_nlp_eval(model, corpus, eval_seed, which);
    if (*classify) return cmd_nlp_classify(model, text);
  } catch (const std::exception& e) {
    std::cerr << "dtdms: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
