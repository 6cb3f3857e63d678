#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "gin/cograph.hpp"
#include "gin/error.hpp"

using namespace gin::cograph;
using gin::clicklog::ClickEvent;
using gin::clicklog::Session;

namespace {

Session session_of(const std::vector<std::string>& items) {
  Session s;
  s.user_id = "u";
  std::int64_t ts = 0;
  for (const auto& item : items) {
    s.events.push_back(ClickEvent{"u", ts++, {"q"}, item});
  }
  return s;
}

// Independent oracle: count every pair within window distance per session.
std::map<std::pair<std::string, std::string>, std::int64_t> brute_force_weights(
    const std::vector<Session>& sessions, int window) {
  std::map<std::pair<std::string, std::string>, std::int64_t> counts;
  for (const auto& s : sessions) {
    const auto& ev = s.events;
    for (std::size_t i = 0; i < ev.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (i - j <= static_cast<std::size_t>(window) && ev[i].item_id != ev[j].item_id) {
          auto key = ev[i].item_id < ev[j].item_id
                         ? std::make_pair(ev[i].item_id, ev[j].item_id)
                         : std::make_pair(ev[j].item_id, ev[i].item_id);
          ++counts[key];
        }
  }
  return counts;
}

std::map<std::pair<std::string, std::string>, std::int64_t> graph_weights(const CoGraph& g) {
  std::map<std::pair<std::string, std::string>, std::int64_t> counts;
  for (const auto& u : g.node_ids())
    for (const auto& [v, w] : g.neighbors(u))
      if (u < v) counts[{u, v}] = w;
  return counts;
}

std::string save_to_string(const CoGraph& g) {
  std::ostringstream os;
  save_graph(g, os);
  return os.str();
}

}  // namespace

TEST_CASE("build_graph window examples") {
  auto g = build_graph({session_of({"a", "b", "c"})}, 1);
  CHECK(g.num_edges() == 2);
  CHECK(neighbors_topn(g, "a", 5) == std::vector<Neighbor>{{"b", 1}});
  CHECK(neighbors_topn(g, "b", 5) == std::vector<Neighbor>{{"a", 1}, {"c", 1}});

  auto g2 = build_graph({session_of({"a", "b"}), session_of({"a", "b"})}, 1);
  CHECK(neighbors_topn(g2, "a", 5) == std::vector<Neighbor>{{"b", 2}});

  CHECK(build_graph({session_of({"a"})}, 3).num_edges() == 0);
  CHECK(build_graph({session_of({"a", "a", "a"})}, 2).num_edges() == 0);  // no self-loops
  CHECK_THROWS_AS(build_graph({}, 0), gin::DataError);
}

TEST_CASE("build_graph equals brute-force pair counting") {
  std::mt19937_64 rng(9);
  for (int it = 0; it < 50; ++it) {
    const int window = 1 + static_cast<int>(rng() % 3);
    std::vector<Session> sessions;
    int total_events = 0;
    while (total_events < 100) {
      const int len = 1 + static_cast<int>(rng() % 12);
      std::vector<std::string> items;
      for (int i = 0; i < len; ++i) items.push_back("i" + std::to_string(rng() % 20));
      sessions.push_back(session_of(items));
      total_events += len;
      if (rng() % 4 == 0) break;
    }
    auto g = build_graph(sessions, window);
    CHECK(graph_weights(g) == brute_force_weights(sessions, window));

    // Symmetry.
    for (const auto& u : g.node_ids())
      for (const auto& [v, w] : g.neighbors(u)) {
        bool found = false;
        for (const auto& [back, bw] : g.neighbors(v))
          if (back == u) {
            found = true;
            CHECK(bw == w);
          }
        CHECK(found);
      }

    // Determinism of the serialized form.
    CHECK(save_to_string(g) == save_to_string(build_graph(sessions, window)));
  }
}

TEST_CASE("neighbors_topn order and ties") {
  auto g = build_graph({session_of({"u", "x", "u", "x", "u", "x", "u", "x", "u", "x", "u", "y", "u",
                                    "y", "u", "y", "u", "z"})},
                       1);
  // u-x weight 10, u-y weight 5 (interleaved pairs double-count), u-z 1.
  auto top = neighbors_topn(g, "u", 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].first == "x");
  CHECK(top[1].first == "y");

  CHECK(neighbors_topn(g, "absent", 3).empty());

  // Equal weights break ties by ascending id.
  auto tie = build_graph({session_of({"x", "u", "y"})}, 1);
  auto picked = neighbors_topn(tie, "u", 1);
  REQUIRE(picked.size() == 1);
  CHECK(picked[0].first == "x");
}

TEST_CASE("diffuse frontier construction") {
  auto g = build_graph({session_of({"a", "b"})}, 1);
  {
    auto layers = diffuse(g, {"a"}, 0, 3);
    REQUIRE(layers.layers.size() == 1);
    CHECK(layers.layers[0] == std::set<std::string>{"a"});
  }
  {
    auto layers = diffuse(g, {"a"}, 1, 3);
    REQUIRE(layers.layers.size() == 2);
    CHECK(layers.layers[0] == std::set<std::string>{"a"});
    CHECK(layers.layers[1] == std::set<std::string>{"a", "b"});
    CHECK(layers.neighbor_map.at("a") == std::vector<Neighbor>{{"b", 1}});
  }
  {
    auto layers = diffuse(g, {"isolated"}, 2, 3);
    for (const auto& layer : layers.layers) CHECK(layer == std::set<std::string>{"isolated"});
    CHECK(layers.neighbor_map.at("isolated").empty());
  }
  CHECK_THROWS_AS(diffuse(g, {}, 1, 3), gin::DataError);
}

TEST_CASE("diffusion invariants on random graphs") {
  std::mt19937_64 rng(31);
  for (int it = 0; it < 100; ++it) {
    std::vector<Session> sessions;
    const int len = 5 + static_cast<int>(rng() % 40);
    std::vector<std::string> items;
    for (int i = 0; i < len; ++i) items.push_back("i" + std::to_string(rng() % 15));
    sessions.push_back(session_of(items));
    auto g = build_graph(sessions, 1 + static_cast<int>(rng() % 2));

    std::vector<std::string> seeds;
    const int num_seeds = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < num_seeds; ++i) seeds.push_back("i" + std::to_string(rng() % 15));
    const int depth = static_cast<int>(rng() % 4);

    auto layers = diffuse(g, seeds, depth, 3);
    REQUIRE(layers.layers.size() == static_cast<std::size_t>(depth) + 1);
    CHECK(layers.layers[0] == std::set<std::string>(seeds.begin(), seeds.end()));
    for (std::size_t k = 1; k < layers.layers.size(); ++k) {
      for (const auto& id : layers.layers[k - 1]) CHECK(layers.layers[k].count(id) == 1);
    }

    // Monotone growth in n.
    auto grow = [&](int n) { return diffuse(g, seeds, depth, n).layers.back(); };
    auto s1 = grow(1), s3 = grow(3), s5 = grow(5);
    for (const auto& id : s1) CHECK(s3.count(id) == 1);
    for (const auto& id : s3) CHECK(s5.count(id) == 1);
  }
}

TEST_CASE("graph save/load round trip and errors") {
  {
    CoGraph empty;
    std::istringstream in(save_to_string(empty));
    CHECK(load_graph(in) == empty);
  }
  {
    auto g = build_graph({session_of({"a", "b"}), session_of({"a", "b"})}, 1);
    const std::string bytes = save_to_string(g);
    std::istringstream in(bytes);
    CoGraph back = load_graph(in);
    CHECK(back == g);
    CHECK(save_to_string(back) == bytes);
  }
  auto load_str = [](const std::string& s) {
    std::istringstream in(s);
    return load_graph(in);
  };
  CHECK_THROWS_WITH_AS(load_str("BOGUS v1 0 0\n"), doctest::Contains("magic"), gin::DataError);
  CHECK_THROWS_WITH_AS(load_str("GINGRAPH v1 2 1\nb\ta\t2\n"), doctest::Contains("line 2"),
                       gin::DataError);
  CHECK_THROWS_AS(load_str("GINGRAPH v1 2 2\na\tb\t2\na\tb\t1\n"), gin::DataError);
  CHECK_THROWS_AS(load_str("GINGRAPH v1 2 1\na\tb\t0\n"), gin::DataError);
  CHECK_THROWS_AS(load_str("GINGRAPH v1 2 2\na\tb\t2\n"), gin::DataError);  // edge count mismatch
  CHECK_THROWS_AS(load_str("GINGRAPH v1 9 1\na\tb\t2\n"), gin::DataError);  // node count mismatch
}
