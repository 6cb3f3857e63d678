#include <doctest.h>

#include <random>
#include <sstream>

#include "gin/clicklog.hpp"
#include "gin/error.hpp"

using namespace gin::clicklog;

TEST_CASE("parse_click_log basics") {
  {
    std::istringstream in("");
    CHECK(parse_click_log(in).empty());
  }
  {
    std::istringstream in("u1\t100\tRed Dress\ti42\n");
    auto events = parse_click_log(in);
    REQUIRE(events.size() == 1);
    CHECK(events[0].user_id == "u1");
    CHECK(events[0].timestamp == 100);
    CHECK(events[0].query_tokens == std::set<std::string>{"red", "dress"});
    CHECK(events[0].item_id == "i42");
  }
  {
    std::istringstream in("u1\t100\tred dress\n");
    CHECK_THROWS_WITH_AS(parse_click_log(in), doctest::Contains("line 1"), gin::DataError);
  }
  {
    std::istringstream in("# comment\n\nu1\tnope\tq\ti1\n");
    CHECK_THROWS_WITH_AS(parse_click_log(in), doctest::Contains("line 3"), gin::DataError);
  }
  {
    std::istringstream in("u1\t-5\tq\ti1\n");
    CHECK_THROWS_AS(parse_click_log(in), gin::DataError);
  }
}

TEST_CASE("query_similarity is jaccard") {
  std::set<std::string> red_dress{"red", "dress"};
  CHECK(query_similarity(red_dress, red_dress) == 1.0);
  CHECK(query_similarity(red_dress, {"blue", "shoes"}) == 0.0);
  CHECK(query_similarity(red_dress, {"red", "shoes"}) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(query_similarity({"a"}, {"b", "a"}) == query_similarity({"b", "a"}, {"a"}));
  CHECK_THROWS_AS(query_similarity({}, red_dress), gin::DataError);
}

namespace {

ClickEvent make_event(std::string user, std::int64_t ts, std::set<std::string> q, std::string item) {
  return ClickEvent{std::move(user), ts, std::move(q), std::move(item)};
}

}  // namespace

TEST_CASE("segment_sessions boundary rules") {
  SessionConfig cfg;  // 0.3 / 1800
  {
    auto sessions = segment_sessions({make_event("u", 10, {"a"}, "i1")}, cfg);
    REQUIRE(sessions.size() == 1);
    CHECK(sessions[0].events.size() == 1);
  }
  {
    auto sessions = segment_sessions(
        {make_event("u", 10, {"red", "dress"}, "i1"), make_event("u", 20, {"red", "dress"}, "i2")}, cfg);
    REQUIRE(sessions.size() == 1);
    CHECK(sessions[0].events.size() == 2);
  }
  {
    auto sessions = segment_sessions(
        {make_event("u", 10, {"red"}, "i1"), make_event("u", 20, {"shoes"}, "i2")}, cfg);
    CHECK(sessions.size() == 2);
  }
  {
    // Same query but a gap beyond 30 minutes.
    auto sessions = segment_sessions(
        {make_event("u", 10, {"red"}, "i1"), make_event("u", 10 + 1801, {"red"}, "i2")}, cfg);
    CHECK(sessions.size() == 2);
  }
  {
    CHECK_THROWS_AS(segment_sessions(
        {make_event("u", 20, {"a"}, "i1"), make_event("u", 10, {"a"}, "i2")}, cfg), gin::DataError);
  }
}

TEST_CASE("sessions partition each user's events and respect boundaries") {
  std::mt19937_64 rng(42);
  SessionConfig cfg;
  for (int it = 0; it < 50; ++it) {
    std::vector<ClickEvent> events;
    const int users = 1 + static_cast<int>(rng() % 4);
    for (int u = 0; u < users; ++u) {
      std::int64_t ts = 1000;
      const int count = static_cast<int>(rng() % 30);
      for (int i = 0; i < count; ++i) {
        ts += static_cast<std::int64_t>(rng() % 2500);
        std::set<std::string> q;
        q.insert("t" + std::to_string(rng() % 3));
        if (rng() % 2) q.insert("t" + std::to_string(rng() % 3));
        events.push_back(make_event("u" + std::to_string(u), ts, q, "i" + std::to_string(rng() % 10)));
      }
    }
    sort_events(events);
    auto sessions = segment_sessions(events, cfg);

    // Concatenation of a user's sessions equals that user's event list.
    std::vector<ClickEvent> rebuilt;
    for (const auto& s : sessions) {
      REQUIRE_FALSE(s.events.empty());
      for (const auto& ev : s.events) {
        CHECK(ev.user_id == s.user_id);
        rebuilt.push_back(ev);
      }
    }
    REQUIRE(rebuilt.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
      CHECK(rebuilt[i].user_id == events[i].user_id);
      CHECK(rebuilt[i].timestamp == events[i].timestamp);
      CHECK(rebuilt[i].item_id == events[i].item_id);
    }

    // Adjacent pairs within one session satisfy both rules.
    for (const auto& s : sessions) {
      for (std::size_t i = 1; i < s.events.size(); ++i) {
        CHECK(s.events[i].timestamp - s.events[i - 1].timestamp <= cfg.max_gap_seconds);
        CHECK(query_similarity(s.events[i].query_tokens, s.events[i - 1].query_tokens) >=
              cfg.jaccard_threshold);
      }
    }

    // Determinism.
    auto again = segment_sessions(events, cfg);
    REQUIRE(again.size() == sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i)
      CHECK(again[i].events.size() == sessions[i].events.size());
  }
}

TEST_CASE("filter_max_age keeps the trailing window") {
  std::vector<ClickEvent> events{make_event("u", 0, {"q"}, "old"),
                                 make_event("u", 40 * 86400, {"q"}, "new")};
  auto kept = filter_max_age(events, 30);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].item_id == "new");
  CHECK(filter_max_age(events, 0).size() == 2);
}
