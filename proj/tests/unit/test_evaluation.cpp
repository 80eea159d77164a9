#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "xsent/evaluation.hpp"

using namespace xsent;

TEST_CASE("accuracy") {
  const std::vector<int> g{1, 1, 2, 4, 5}, p{1, 2, 2, 4, 4};
  CHECK(accuracy(g, p) == doctest::Approx(60.0));
  CHECK(accuracy(g, g) == 100.0);
  CHECK(accuracy(std::vector<int>{1, 2}, std::vector<int>{2, 1}) == 0.0);
  CHECK_THROWS_AS(accuracy(g, std::vector<int>{1}), DataError);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
}

TEST_CASE("macro F1") {
  const std::vector<int> g{1, 1, 2, 4, 5}, p{1, 2, 2, 4, 4};
  const auto f = per_class_f1(g, p);
  CHECK(f[0] == doctest::Approx(2.0 / 3.0));
  CHECK(f[1] == doctest::Approx(2.0 / 3.0));
  CHECK(f[2] == doctest::Approx(2.0 / 3.0));
  CHECK(f[3] == 0.0);
  CHECK(macro_f1(g, p) == doctest::Approx(50.0));
  CHECK(macro_f1(std::vector<int>{1, 2, 4, 5}, std::vector<int>{1, 2, 4, 5}) == 100.0);
  CHECK(macro_f1(std::vector<int>{4, 4}, std::vector<int>{4, 4}) == 25.0);
  CHECK_THROWS_AS(macro_f1(std::vector<int>{3}, std::vector<int>{1}), DataError);
  CHECK_THROWS_AS(macro_f1(std::vector<int>{1}, std::vector<int>{7}), DataError);
}

TEST_CASE("unparsed predictions are wrong but never false positives") {
  const std::vector<int> g{1, 2}, p{kNoPrediction, 2};
  CHECK(accuracy(g, p) == 50.0);
  const auto f = per_class_f1(g, p);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 1.0);
  CHECK_THROWS_AS(accuracy(std::vector<int>{kNoPrediction}, std::vector<int>{1}), DataError);
}

TEST_CASE("macro F1 is invariant under relabeling") {
  Rng rng(8);
  std::vector<int> g, p;
  for (int i = 0; i < 300; ++i) {
    g.push_back(kRatings[uniform_index(rng, 4)]);
    p.push_back(kRatings[uniform_index(rng, 4)]);
  }
  std::array<int, 4> perm{5, 1, 4, 2};  // 1->5, 2->1, 4->4, 5->2
  auto relabel = [&](std::vector<int> v) {
    for (int& x : v) x = perm[rating_to_class(x)];
    return v;
  };
  CHECK(macro_f1(relabel(g), relabel(p)) == doctest::Approx(macro_f1(g, p)).epsilon(1e-12));
}

namespace {

std::vector<Review> three_cells() {
  std::vector<Review> r;
  auto add = [&](Language l, Domain d, std::vector<int> gold) {
    for (int x : gold) r.push_back(test::review("", "t", x, l, d, Split::Test));
  };
  add(Language::IT, Domain::Books, {1, 2, 4, 5});
  add(Language::RO, Domain::Books, {1, 1, 5, 5, 2, 4});
  add(Language::RO, Domain::Music, {4, 4, 5, 2});
  return r;
}

}  // namespace

TEST_CASE("build_report on a three-cell fixture") {
  const auto gold = three_cells();
  const std::vector<int> pred{1, 2, 4, 4, /**/ 1, 2, 5, 5, 2, 1, /**/ 4, 5, 5, 2};
  const auto r = build_report(gold, pred);

  auto g_of = [&](std::size_t b, std::size_t n) {
    std::vector<int> g, p;
    for (std::size_t i = b; i < b + n; ++i) {
      g.push_back(gold[i].rating);
      p.push_back(pred[i]);
    }
    return std::pair{g, p};
  };
  const auto [g0, p0] = g_of(0, 4);
  const auto [g1, p1] = g_of(4, 6);
  const auto [g2, p2] = g_of(10, 4);
  const auto& it_books = r.cells[0][0];
  const auto& ro_books = r.cells[1][0];
  const auto& ro_music = r.cells[1][2];
  REQUIRE(it_books);
  REQUIRE(ro_books);
  REQUIRE(ro_music);
  CHECK_FALSE(r.cells[0][1].has_value());
  CHECK_FALSE(r.by_domain[1].has_value());
  CHECK(it_books->accuracy == 75.0);
  CHECK(it_books->f1 == doctest::Approx(macro_f1(g0, p0)));
  CHECK(ro_books->accuracy == doctest::Approx(accuracy(g1, p1)));
  CHECK(ro_music->f1 == doctest::Approx(macro_f1(g2, p2)));

  // Pooled Books column.
  std::vector<int> gb(g0), pb(p0);
  gb.insert(gb.end(), g1.begin(), g1.end());
  pb.insert(pb.end(), p1.begin(), p1.end());
  CHECK(r.by_domain[0]->f1 == doctest::Approx(macro_f1(gb, pb)));
  CHECK(r.by_domain[0]->count == 10);
  CHECK(r.by_domain[0]->accuracy >= std::min(it_books->accuracy, ro_books->accuracy));
  CHECK(r.by_domain[0]->accuracy <= std::max(it_books->accuracy, ro_books->accuracy));

  // Avg. over the present cells.
  CHECK(r.average->f1 == doctest::Approx((it_books->f1 + ro_books->f1 + ro_music->f1) / 3.0));
  CHECK(r.overall.accuracy == doctest::Approx(accuracy(std::vector<int>(pred.begin(), pred.end()), [&] {
          std::vector<int> g;
          for (const auto& x : gold) g.push_back(x.rating);
          return g;
        }())));

  ReportOptions avg;
  avg.aggregation = Aggregation::Averaged;
  avg.average = AverageOver::Columns;
  const auto r2 = build_report(gold, pred, avg);
  CHECK(r2.by_domain[0]->f1 == doctest::Approx((it_books->f1 + ro_books->f1) / 2.0));
  CHECK(r2.average->f1 ==
        doctest::Approx((r2.by_domain[0]->f1 + r2.by_domain[2]->f1 + r2.by_language[0]->f1 + r2.by_language[1]->f1) /
                        4.0));

  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["cells"].size() == 6);
  CHECK(j["by_domain"]["movies"].is_null());
  const std::string table = report_to_table(r, "XLM-R");
  CHECK(table.find("Books") < table.find("Movies"));
  CHECK(table.find("RO") < table.find("Avg."));
  CHECK(table.find("70.00") != std::string::npos);
}

TEST_CASE("single cell equals global metrics") {
  std::vector<Review> gold;
  for (int x : {1, 2, 4, 5, 5}) gold.push_back(test::review("", "t", x, Language::RO, Domain::Movies));
  const std::vector<int> pred{1, 1, 4, 5, 2};
  const auto r = build_report(gold, pred);
  CHECK(r.cells[1][1]->f1 == r.overall.f1);
  CHECK(r.average->accuracy == r.overall.accuracy);
  CHECK_THROWS_AS(build_report(gold, std::vector<int>{1}), DataError);
}

TEST_CASE("random predictions sit near chance") {
  Rng rng(12);
  std::vector<Review> gold;
  std::vector<int> pred;
  for (int i = 0; i < 8000; ++i) {
    gold.push_back(test::review("", "t", kRatings[i % 4], kLanguages[i % 2], kDomains[i % 3]));
    pred.push_back(kRatings[uniform_index(rng, 4)]);
  }
  CHECK(build_report(gold, pred).overall.accuracy == doctest::Approx(25.0).epsilon(0.08));
}
