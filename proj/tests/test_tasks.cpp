#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gradsynth/tasks.hpp"

using namespace gradsynth;

namespace {

TaskValue L(std::vector<int> xs) { return TaskValue(std::move(xs)); }

std::string key_of(const std::vector<TaskValue>& inputs) {
  std::string key;
  for (const TaskValue& v : inputs) key += to_string(v) + ";";
  return key;
}

}  // namespace

TEST_CASE("reference semantics") {
  CHECK(reference(make_task("len"), {L({3, 1, 4})}) == TaskOutput::of_int(3));
  CHECK(reference(make_task("rev"), {L({1, 2, 3})}) == TaskOutput::of_list({3, 2, 1}));
  CHECK(reference(make_task("sum"), {L({1, 2, 3})}) == TaskOutput::of_int(6));
  CHECK(reference(make_task("max"), {L({2, 9, 5})}) == TaskOutput::of_int(9));
  CHECK(reference(make_task("last2"), {L({1, 2, 3})}) == TaskOutput::of_int(2));
  CHECK(reference(make_task("mapInc"), {L({7, 2})}) == TaskOutput::of_list({8, 3}));
  CHECK(reference(make_task("revMapInc"), {L({1, 2, 3})}) == TaskOutput::of_list({4, 3, 2}));
  CHECK(reference(make_task("mapAddK"), {L({1, 2}), TaskValue(3)}) ==
        TaskOutput::of_list({4, 5}));
  CHECK(reference(make_task("pairwiseSum"), {L({1, 2}), L({3, 4})}) ==
        TaskOutput::of_list({4, 6}));
  CHECK(reference(make_task("allGtK"), {L({3, 4}), TaskValue(2)}) == TaskOutput::of_bool(true));
  CHECK(reference(make_task("allGtK"), {L({3, 1}), TaskValue(2)}) == TaskOutput::of_bool(false));
  CHECK(reference(make_task("exGtK"), {L({1, 6}), TaskValue(5)}) == TaskOutput::of_bool(true));
  CHECK(reference(make_task("exGtK"), {L({1, 2}), TaskValue(5)}) == TaskOutput::of_bool(false));
  CHECK(reference(make_task("findLastIdx"), {L({5, 1, 5, 2}), TaskValue(5)}) ==
        TaskOutput::of_int(2));
  CHECK(reference(make_task("getIdx"), {L({5, 6, 7}), TaskValue(2)}) == TaskOutput::of_int(7));
  CHECK(reference(make_task("dupK", 3), {TaskValue(7)}) == TaskOutput::of_list({7, 7, 7}));
  CHECK(reference(make_task("getK", 1), {L({4, 9, 2})}) == TaskOutput::of_int(9));

  CHECK_THROWS_AS(make_task("frobnicate"), std::invalid_argument);
  CHECK_THROWS_AS(reference(make_task("last2"), {L({4})}), std::invalid_argument);
  CHECK_THROWS_AS(reference(make_task("findLastIdx"), {L({1, 2}), TaskValue(9)}),
                  std::invalid_argument);
}

TEST_CASE("reference metamorphic properties") {
  std::mt19937_64 rng(11);
  const Task rev = make_task("rev");
  const Task sum = make_task("sum");
  const Task mx = make_task("max");
  for (int trial = 0; trial < 50; ++trial) {
    const int len = 1 + static_cast<int>(rng() % 5);
    std::vector<int> xs(static_cast<size_t>(len));
    for (int& x : xs) x = 1 + static_cast<int>(rng() % 9);

    const TaskOutput r = reference(rev, {L(xs)});
    CHECK(reference(rev, {L(r.list)}) == TaskOutput::of_list(xs));

    std::vector<int> perm = xs;
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(reference(sum, {L(perm)}) == reference(sum, {L(xs)}));

    const TaskOutput m = reference(mx, {L(xs)});
    CHECK(std::count(xs.begin(), xs.end(), m.scalar) > 0);
  }
}

TEST_CASE("generated examples satisfy the reference and the bounds") {
  const int M = 20;
  const int maxlen = 5;
  for (const std::string& name : task_names()) {
    CAPTURE(name);
    const Task t = make_task(name, 2);
    for (int group = 1; group <= 3; ++group) {
      const ExampleSet set = generate_examples(t, M, maxlen, group, 42);
      REQUIRE(set.train.size() == 5);
      REQUIRE(set.test.size() == 25);

      std::set<std::string> train_keys;
      for (const Example& ex : set.train) train_keys.insert(key_of(ex.inputs));
      CHECK(train_keys.size() == 5);  // mutually distinct training inputs
      for (const Example& ex : set.test) CHECK(train_keys.count(key_of(ex.inputs)) == 0);

      std::vector<Example> all = set.train;
      all.insert(all.end(), set.test.begin(), set.test.end());
      for (const Example& ex : all) {
        CHECK(reference(t, ex.inputs) == ex.output);
        for (const TaskValue& v : ex.inputs) {
          if (std::holds_alternative<int>(v)) {
            CHECK(std::get<int>(v) >= 0);
            CHECK(std::get<int>(v) < M);
          } else {
            const auto& xs = std::get<std::vector<int>>(v);
            CHECK(xs.size() >= 1);
            CHECK(xs.size() <= static_cast<size_t>(maxlen));
            for (int x : xs) {
              CHECK(x >= 1);  // nonzero elements: zero marks list ends
              CHECK(x < M);
            }
          }
        }
        if (ex.output.kind == OutputKind::List) {
          for (int x : ex.output.list) {
            CHECK(x >= 0);
            CHECK(x < M);
          }
        } else {
          CHECK(ex.output.scalar >= 0);
          CHECK(ex.output.scalar < M);
        }
      }
    }
  }
}

TEST_CASE("boolean tasks see both outcomes in a batch") {
  for (const char* name : {"allGtK", "exGtK"}) {
    const Task t = make_task(name);
    const ExampleSet set = generate_examples(t, 20, 5, 1, 7);
    int trues = 0;
    for (const Example& ex : set.test) trues += ex.output.scalar;
    CHECK(trues > 0);
    CHECK(trues < 25);
  }
}

TEST_CASE("generation is deterministic and varies by group and seed") {
  const Task t = make_task("findLastIdx");
  const ExampleSet a = generate_examples(t, 20, 5, 1, 42);
  const ExampleSet b = generate_examples(t, 20, 5, 1, 42);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(key_of(a.train[i].inputs) == key_of(b.train[i].inputs));
    CHECK(a.train[i].output == b.train[i].output);
  }

  const auto all_keys = [](const ExampleSet& s) {
    std::string k;
    for (const Example& ex : s.train) k += key_of(ex.inputs);
    for (const Example& ex : s.test) k += key_of(ex.inputs);
    return k;
  };
  CHECK(all_keys(a) != all_keys(generate_examples(t, 20, 5, 2, 42)));
  CHECK(all_keys(a) != all_keys(generate_examples(t, 20, 5, 1, 43)));
}

TEST_CASE("impossible bounds are rejected") {
  CHECK_THROWS_AS(generate_examples(make_task("dupK", 7), 20, 5, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_examples(make_task("getK", 5), 20, 5, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_examples(make_task("sum"), 4, 5, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_examples(make_task("last2"), 20, 1, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_examples(make_task("len"), 20, 0, 1, 1), std::invalid_argument);
}

TEST_CASE("stable hash matches the published test vectors") {
  CHECK(fnv1a("") == 14695981039346656037ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("abc") == 0xe71fa2190541574bULL);
  CHECK(fnv1a(uint64_t{0}) != fnv1a(uint64_t{1}));
}
