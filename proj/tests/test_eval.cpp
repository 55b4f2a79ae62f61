#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "nbl/eval.hpp"

using namespace nbl;

TEST_SUITE("eval") {

TEST_CASE("sentence F1: exact match, disjoint, conventions, symmetry") {
  CHECK(sentence_f1({{0, 2}}, {{0, 2}}, 3) == doctest::Approx(1.0));
  CHECK(sentence_f1({{1, 3}}, {{0, 2}}, 3) == doctest::Approx(0.0));
  CHECK(sentence_f1({}, {}, 2) == doctest::Approx(1.0));   // empty vs empty
  CHECK(sentence_f1({{0, 2}}, {}, 4) == doctest::Approx(0.0));  // one empty
  // trivial spans (width 1, whole sentence) are removed from both sides
  CHECK(sentence_f1({{0, 1}, {0, 2}, {0, 3}}, {{0, 2}}, 3) ==
        doctest::Approx(1.0));
  // symmetry
  std::vector<Span> a = {{0, 2}, {2, 4}}, b = {{0, 2}, {1, 4}};
  CHECK(sentence_f1(a, b, 4) == doctest::Approx(sentence_f1(b, a, 4)));
  CHECK_THROWS_AS(sentence_f1({{0, 5}}, {}, 3), std::out_of_range);
}

TEST_CASE("attachment scores: identity, hand-counted, undirected credit") {
  auto [udas1, uuas1] = attachment_scores({2, 0, 2}, {2, 0, 2});
  CHECK(udas1 == doctest::Approx(1.0));
  CHECK(uuas1 == doctest::Approx(1.0));

  auto [udas2, uuas2] = attachment_scores({0, 1, 2}, {2, 0, 2});
  CHECK(udas2 == doctest::Approx(1.0 / 3.0));
  (void)uuas2;

  // gold arc 1 -> 2 predicted reversed: UUAS credit, no UDAS credit
  auto [udas3, uuas3] = attachment_scores({2, 0}, {0, 1});
  CHECK(udas3 == doctest::Approx(0.0));
  CHECK(uuas3 == doctest::Approx(0.5));  // pair {1,2} matches, root pair not

  CHECK_THROWS_AS(attachment_scores({0}, {0, 1}), std::invalid_argument);

  // UUAS >= UDAS on random head assignments
  std::mt19937 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t l = 2 + trial % 5;
    std::uniform_int_distribution<std::size_t> d(0, l);
    std::vector<std::size_t> p(l), g(l);
    for (std::size_t t = 0; t < l; ++t) {
      p[t] = d(rng);
      g[t] = d(rng);
    }
    auto [ud, uu] = attachment_scores(p, g);
    CHECK(uu >= ud);
  }
}

TEST_CASE("label recall: micro aggregation and omitted labels") {
  LabelTally t;
  t.add({{0, 2}, {2, 4}}, {{0, 2, "NP"}, {2, 4, "VP"}, {0, 5, "S"}}, 5);
  t.add({{1, 3}}, {{0, 2, "NP"}}, 4);
  auto r = t.recalls();
  CHECK(r.at("NP") == doctest::Approx(0.5));  // 1 of 2 gold NPs found
  CHECK(r.at("VP") == doctest::Approx(1.0));
  CHECK(r.count("S") == 0);    // whole-sentence span is trivial
  CHECK(r.count("PP") == 0);   // absent from gold: omitted

  // weighted label recalls equal overall span recall
  double weighted = 0.0;
  std::size_t gold_total = 0, hits = 0;
  for (const auto& [label, c] : t.counts) {
    weighted += double(c.first);
    gold_total += c.second;
    hits += c.first;
  }
  CHECK(weighted / double(gold_total) ==
        doctest::Approx(double(hits) / double(gold_total)));

  LabelTally none;
  none.add({}, {{0, 2, "NP"}}, 3);
  CHECK(none.recalls().at("NP") == doctest::Approx(0.0));
}

TEST_CASE("aggregate_runs: population std and formatting") {
  EvalReport a, b;
  a.f1_mean = 0.58;
  b.f1_mean = 0.62;
  a.udas = b.udas = 0.4;
  a.ppl = 100.0;
  b.ppl = 200.0;
  auto agg = aggregate_runs({a, b});
  CHECK(agg.f1_mean == doctest::Approx(0.60));
  CHECK(agg.f1_std == doctest::Approx(0.02));
  CHECK(agg.udas == doctest::Approx(0.4));
  CHECK(agg.ppl == doctest::Approx(150.0));

  auto same = aggregate_runs({a, a, a});
  CHECK(same.f1_std == doctest::Approx(0.0));

  CHECK(format_mean_std(60.4, 1.6) == "60.4 ± 1.6");
  CHECK(format_mean_std(100.0 * agg.f1_mean, 100.0 * agg.f1_std) ==
        "60.0 ± 2.0");
}

TEST_CASE("report CSV has the exact column contract") {
  EvalReport r;
  r.f1_mean = 0.5;
  r.ppl = 42.0;
  write_report_csv("report_test.csv", r);
  std::ifstream is("report_test.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "f1_mean,f1_std,udas,uuas,ppl");
  std::string row;
  std::getline(is, row);
  CHECK(row.substr(0, 4) == "0.5,");
  std::remove("report_test.csv");

  r.label_recall["NP"] = 0.75;
  auto table = report_table(r);
  CHECK(table.find("F1") != std::string::npos);
  CHECK(table.find("recall NP") != std::string::npos);
}

}  // TEST_SUITE
