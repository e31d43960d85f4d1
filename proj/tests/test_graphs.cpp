#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "graphmask/graphs.hpp"
#include "support.hpp"

using namespace graphmask;
using namespace graphmask::testing;

namespace {
constexpr int x = 0, y = 1, z = 2, w = 3;
}

TEST_CASE("label and gold mask for simple stars") {
  const StarGraphExample a = star({x, x, y, z}, x, y);
  CHECK(a.label);
  CHECK(gold_mask(a) == std::vector<bool>{true, true, true, false});

  const StarGraphExample b = star({y, y, x}, x, y);
  CHECK_FALSE(b.label);
  CHECK(gold_mask(b) == std::vector<bool>{true, true, true});

  CHECK(gold_mask(star({x, y, z, w}, x, z)) == std::vector<bool>{true, false, true, false});
  CHECK(gold_mask(star({x, x, x}, x, y)) == std::vector<bool>{true, true, true});
  CHECK(gold_mask(star({z, w, z}, x, y)) == std::vector<bool>{false, false, false});
}

TEST_CASE("ties count as false") {
  CHECK_FALSE(star({x, y, z}, x, y).label);
}

TEST_CASE("star graph edges point from leaves to the centroid in leaf order") {
  const Graph g = star({2, 0, 1}, 0, 1).graph();
  REQUIRE(g.num_edges() == 3);
  CHECK(g.num_vertices == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g.edges[i].source == i + 1);
    CHECK(g.edges[i].target == 0);
  }
  CHECK(g.edges[0].relation == 2);
}

TEST_CASE("default dataset has the 10000/1000/1000 split and valid examples") {
  GeneratorConfig cfg;
  const Dataset ds = generate_dataset(cfg);
  CHECK(ds.train.size() == 10000);
  CHECK(ds.validation.size() == 1000);
  CHECK(ds.test.size() == 1000);
  std::size_t positives = 0;
  for (const auto* split : {&ds.train, &ds.validation, &ds.test}) {
    for (const auto& e : *split) {
      CHECK(e.num_leaves() >= kMinLeaves);
      CHECK(e.num_leaves() <= kMaxLeaves);
      CHECK(e.query.first != e.query.second);
      CHECK(e.label == e.compute_label());
      positives += e.label;
    }
  }
  const double rate = static_cast<double>(positives) / 12000.0;
  CHECK(rate >= cfg.min_positive_rate);
  CHECK(rate <= cfg.max_positive_rate);
}

TEST_CASE("generation is deterministic in the seed") {
  GeneratorConfig cfg;
  cfg.seed = 7;
  cfg.count = 10;
  const Dataset a = generate_dataset(cfg);
  const Dataset b = generate_dataset(cfg);
  auto dump = [](const Dataset& d) {
    std::string s;
    for (const auto* split : {&d.train, &d.validation, &d.test}) {
      for (const auto& e : *split) s += example_to_json(e) + "\n";
    }
    return s;
  };
  CHECK(dump(a) == dump(b));
  cfg.seed = 8;
  CHECK(dump(generate_dataset(cfg)) != dump(a));
}

TEST_CASE("impossible balance is an error") {
  GeneratorConfig cfg;
  cfg.num_colors = 2;
  cfg.count = 1;
  CHECK_THROWS(generate_dataset(cfg));
}

TEST_CASE("jsonl round trip") {
  GeneratorConfig cfg;
  cfg.count = 60;
  const Dataset ds = generate_dataset(cfg);
  const auto path = std::filesystem::temp_directory_path() / "graphmask_roundtrip.jsonl";
  write_jsonl(path.string(), ds.train);
  const auto back = read_jsonl(path.string());
  REQUIRE(back.size() == ds.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].leaf_colors == ds.train[i].leaf_colors);
    CHECK(back[i].query == ds.train[i].query);
    CHECK(back[i].label == ds.train[i].label);
  }
  std::filesystem::remove(path);
  CHECK_THROWS(example_from_json("{\"leaves\": [0, 1], \"query\": [0]}"));
}

TEST_CASE("disjoint union offsets vertices and keeps edge order") {
  const Graph a = star({0, 1}, 0, 1).graph();
  const Graph b = star({2}, 0, 1).graph();
  const Graph u = disjoint_union({&a, &b});
  CHECK(u.num_vertices == 5);
  REQUIRE(u.num_edges() == 3);
  CHECK(u.edges[2].source == 4);
  CHECK(u.edges[2].target == 3);
  CHECK(u.edges[2].relation == 2);
}

TEST_CASE("graph validation rejects out-of-range endpoints") {
  Graph g;
  g.num_vertices = 2;
  g.edges.push_back({0, 2, 0});
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}
