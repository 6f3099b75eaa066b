#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "fracbubbles/experiment.hpp"

using namespace fracbubbles;

namespace {
ExperimentSpec parse(const char* text) { return parse_config(nlohmann::json::parse(text)); }
}  // namespace

TEST_CASE("minimal config fills defaults") {
  const ExperimentSpec s = parse(R"({"kind":"decay","k_list":[8,16]})");
  CHECK(s.kind == Kind::Decay);
  CHECK(s.params.N() == 3);
  CHECK(s.params.s() == doctest::Approx(0.5));
  CHECK(s.params.q() == doctest::Approx(4.0));
  CHECK(s.delta == doctest::Approx(1.0));
  CHECK(s.eta == doctest::Approx(0.1));
  CHECK(s.k_list == std::vector<int>{8, 16});
  CHECK(s.grid.n == 128);
  CHECK(s.grid.L == doctest::Approx(16.0));
}

TEST_CASE("schema violations name their key") {
  CHECK_THROWS_WITH_AS(parse(R"({"kind":"decay","k_list":[16,8]})"), doctest::Contains("k_list"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"kind":"decay","q":7})"), doctest::Contains("q outside (N/2s, N/s)"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"kind":"bogus"})"), doctest::Contains("/kind"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"kind":"refine","grid":{"n":100}})"), doctest::Contains("/grid"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"kind":"decay","k_list":[8,"x"]})"), doctest::Contains("/k_list/1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse(R"({"kind":"decay","delta":-1})"), doctest::Contains("/delta"), ConfigError);
}

TEST_CASE("kind defaults") {
  CHECK(parse(R"({"kind":"reduction"})").delta_list == std::vector<double>{3.0, 6.0, 12.0});
  CHECK(parse(R"({"kind":"reduction"})").k_list == std::vector<int>{32, 64, 128});
  CHECK(parse(R"({"kind":"decay"})").k_list.size() == 5);
  CHECK(parse(R"({"kind":"refine","mode":"gluing"})").mode == RefineMode::Gluing);
}

TEST_CASE("refine CSV has provenance, header and deterministic rows") {
  const ExperimentSpec s = parse(R"({"kind":"refine","k":4,"mu_k_power":1.0,"grid":{"n":32,"L":8},"max_iter":4})");
  std::ostringstream a, b;
  const int rc = run(s, a);
  run(s, b);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# spec: {", 0) == 0);
  std::getline(in, line);
  CHECK(line == "iter,residual_norm,damping");
  std::getline(in, line);
  CHECK(line.rfind("0,", 0) == 0);
  CHECK(line.find('e') != std::string::npos);
  CHECK((rc == kPass || rc == kToleranceFailure));
}

TEST_CASE("failed tolerance writes a marker row") {
  const ExperimentSpec s = parse(R"({"kind":"refine","k":4,"mu_k_power":1.0,"grid":{"n":16,"L":4},"max_iter":0})");
  std::ostringstream os;
  CHECK(run(s, os) == kToleranceFailure);
  CHECK(os.str().find("\nFAILED,") != std::string::npos);
}

TEST_CASE("thread count does not change results") {
  ExperimentSpec s = parse(R"({"kind":"refine","k":4,"mu_k_power":1.0,"grid":{"n":32,"L":8},"max_iter":3})");
  std::ostringstream one, four;
  run(s, one);
  s.threads = 4;
  run(s, four);
  const auto strip = [](std::string t) { return t.substr(t.find('\n')); };
  CHECK(strip(one.str()) == strip(four.str()));
}
