#include <doctest.h>

#include <cmath>
#include <fstream>

#include "cmtda/metrics.hpp"
#include "test_util.hpp"

using namespace cmtda;
using cmtda::test::TempDir;

TEST_CASE("iou_scores on hand-computed confusion counts") {
    SUBCASE("perfect prediction gives IoU 1 for every class") {
        ConfusionMatrix cm(3);
        cm.at(0, 0) = 10;
        cm.at(1, 1) = 20;
        cm.at(2, 2) = 5;
        const IouReport r = iou_scores(cm);
        for (double v : r.iou) CHECK(v == doctest::Approx(1.0));
        CHECK(r.miou == doctest::Approx(1.0));
    }
    SUBCASE("worked 2-class example: 50% and 66.7% average to 58.3%") {
        ConfusionMatrix cm(2);
        cm.at(0, 0) = 50;
        cm.at(0, 1) = 50;
        cm.at(1, 0) = 0;
        cm.at(1, 1) = 100;
        const IouReport r = iou_scores(cm);
        CHECK(r.iou[0] == doctest::Approx(0.5));
        CHECK(r.iou[1] == doctest::Approx(100.0 / 150.0));
        CHECK(r.miou == doctest::Approx((0.5 + 100.0 / 150.0) / 2));
    }
    SUBCASE("zero-union classes are excluded from the mean") {
        ConfusionMatrix cm(3);
        cm.at(0, 0) = 10;
        cm.at(1, 1) = 30;
        const IouReport r = iou_scores(cm);
        CHECK_FALSE(r.valid[2]);
        CHECK(std::isnan(r.iou[2]));
        CHECK(r.miou == doctest::Approx(1.0));
    }
    SUBCASE("empty matrix is rejected") {
        ConfusionMatrix cm(3);
        CHECK_THROWS_AS(iou_scores(cm), ConfigError);
    }
}

TEST_CASE("iou_scores equals a brute-force set computation on random label maps") {
    Rng rng(101);
    for (int trial = 0; trial < 25; ++trial) {
        const int C = 4;
        LabelMap pred(16, 16), gt(16, 16);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, C - 1));
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, C - 1));
        ConfusionMatrix cm(C);
        cm.add(pred, gt);
        const IouReport r = iou_scores(cm);
        for (int c = 0; c < C; ++c) {
            long long inter = 0, uni = 0;
            for (std::size_t j = 0; j < pred.v.size(); ++j) {
                const bool inp = pred.v[j] == c, ing = gt.v[j] == c;
                inter += inp && ing;
                uni += inp || ing;
            }
            if (uni == 0) {
                CHECK_FALSE(r.valid[static_cast<std::size_t>(c)]);
            } else {
                CHECK(r.iou[static_cast<std::size_t>(c)] ==
                      doctest::Approx(static_cast<double>(inter) / uni));
            }
        }
    }
}

TEST_CASE("confusion accumulation is order-independent") {
    Rng rng(102);
    LabelMap p1(8, 8), g1(8, 8), p2(8, 8), g2(8, 8);
    for (auto& v : p1.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    for (auto& v : g1.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    for (auto& v : p2.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    for (auto& v : g2.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    ConfusionMatrix ab(3), ba(3);
    ab.add(p1, g1);
    ab.add(p2, g2);
    ba.add(p2, g2);
    ba.add(p1, g1);
    for (int t = 0; t < 3; ++t)
        for (int p = 0; p < 3; ++p) CHECK(ab.at(t, p) == ba.at(t, p));
}

namespace {

// Table-1-shaped fixture: initial scores on the diagonal, final column drops.
MetricMatrix matrix_with_drops(const std::vector<double>& initial,
                               const std::vector<double>& drops, double final_target) {
    const int K = static_cast<int>(initial.size()) + 1;
    std::vector<std::string> names;
    for (int k = 0; k < K; ++k) names.push_back("t" + std::to_string(k + 1));
    MetricMatrix m(names);
    for (int k = 0; k + 1 < K; ++k) {
        m.set(k, k, initial[static_cast<std::size_t>(k)] / 100.0);
        for (int s = k + 1; s < K; ++s) {
            const double v = (s == K - 1)
                                 ? (initial[static_cast<std::size_t>(k)] -
                                    drops[static_cast<std::size_t>(k)]) / 100.0
                                 : initial[static_cast<std::size_t>(k)] / 100.0;
            m.set(k, s, v);
        }
    }
    m.set(K - 1, K - 1, final_target / 100.0);
    return m;
}

}  // namespace

TEST_CASE("accumulated forgetting reproduces the published row sums") {
    SUBCASE("drops 7.2, 2.8, 1.3 sum to 11.3") {
        const MetricMatrix m =
            matrix_with_drops({34.7 + 7.2, 65.8 + 2.8, 78.4 + 1.3}, {7.2, 2.8, 1.3}, 65.2);
        CHECK(std::abs(100.0 * accumulated_forgetting(m) - 11.3) < 1e-9);
    }
    SUBCASE("drops 1.9, 1.3, 1.1 sum to 4.3") {
        const MetricMatrix m =
            matrix_with_drops({24.0 + 1.9, 42.0 + 1.3, 50.8 + 1.1}, {1.9, 1.3, 1.1}, 44.0);
        CHECK(std::abs(100.0 * accumulated_forgetting(m) - 4.3) < 1e-9);
    }
    SUBCASE("single target has nothing to forget") {
        MetricMatrix m(std::vector<std::string>{"only"});
        m.set(0, 0, 0.5);
        CHECK(accumulated_forgetting(m) == 0.0);
    }
    SUBCASE("missing entries are an error") {
        MetricMatrix m(std::vector<std::string>{"a", "b"});
        m.set(0, 0, 0.5);
        m.set(1, 1, 0.6);
        CHECK_THROWS_AS(accumulated_forgetting(m), ConfigError);
    }
    SUBCASE("A.F. ignores the final target's own score") {
        MetricMatrix a = matrix_with_drops({40, 50}, {2, 1}, 60);
        MetricMatrix b = matrix_with_drops({40, 50}, {2, 1}, 10);
        CHECK(accumulated_forgetting(a) == doctest::Approx(accumulated_forgetting(b)));
    }
}

TEST_CASE("miou_average is the exact arithmetic mean of final scores") {
    SUBCASE("published final row averages to 61.025") {
        const MetricMatrix m = matrix_with_drops({34.7, 65.8, 78.4}, {0, 0, 0}, 65.2);
        CHECK(100.0 * miou_average(m) == doctest::Approx((34.7 + 65.8 + 78.4 + 65.2) / 4));
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * miou_average(m));
        CHECK(std::string(buf) == "61.0");
    }
    SUBCASE("equal entries return themselves") {
        const MetricMatrix m = matrix_with_drops({55, 55, 55}, {0, 0, 0}, 55);
        CHECK(100.0 * miou_average(m) == doctest::Approx(55.0));
    }
    SUBCASE("single target returns that target's score") {
        MetricMatrix m(std::vector<std::string>{"only"});
        m.set(0, 0, 0.42);
        CHECK(miou_average(m) == doctest::Approx(0.42));
    }
}

TEST_CASE("metrics json round trip preserves the matrix") {
    TempDir tmp("metrics");
    MetricMatrix m(std::vector<std::string>{"night", "rain"});
    m.set(0, 0, 0.61, {0.5, 0.7});
    m.set(0, 1, 0.58, {0.45, 0.71});
    m.set(1, 1, 0.66, {0.6, 0.72});
    const std::string path = tmp / "metrics.json";
    save_metrics_json(m, path);
    const MetricMatrix b = load_metrics_json(path);
    CHECK(b.targets() == m.targets());
    for (int k = 0; k < 2; ++k)
        for (int s = k; s < 2; ++s) {
            CHECK(b.get(k, s) == doctest::Approx(m.get(k, s)));
            CHECK(b.per_class(k, s) == m.per_class(k, s));
        }
    CHECK_FALSE(b.has(1, 0));
}

TEST_CASE("report rendering") {
    TempDir tmp("report");
    const MetricMatrix m = matrix_with_drops({34.7 + 7.2, 65.8 + 2.8, 78.4 + 1.3},
                                             {7.2, 2.8, 1.3}, 65.2);
    render_report(m, tmp.str(), "mic");

    SUBCASE("table matches the golden fixture") {
        const std::string golden = std::string(CMTDA_GOLDEN_DIR) + "/report_v1.txt";
        if (cmtda::test::regen_golden() || !std::filesystem::exists(golden)) {
            std::filesystem::create_directories(CMTDA_GOLDEN_DIR);
            std::filesystem::copy_file(tmp / "report.txt", golden,
                                       std::filesystem::copy_options::overwrite_existing);
            MESSAGE("golden report regenerated");
        }
        CHECK(cmtda::test::file_bytes(tmp / "report.txt") == cmtda::test::file_bytes(golden));
    }
    SUBCASE("change annotation equals final minus initial") {
        std::ifstream is(tmp / "report.txt");
        std::string header, row;
        std::getline(is, header);
        std::getline(is, row);
        CHECK(row.find("34.7 (-7.2)") != std::string::npos);
        CHECK(row.find("65.8 (-2.8)") != std::string::npos);
        CHECK(row.find("78.4 (-1.3)") != std::string::npos);
        CHECK(row.find("11.3") != std::string::npos);
    }
    SUBCASE("csv re-parse equals the source matrix") {
        std::ifstream is(tmp / "report.csv");
        std::string line;
        std::getline(is, line);
        CHECK(line == "target,step,miou");
        int rows = 0;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto c1 = line.find(','), c2 = line.rfind(',');
            const std::string target = line.substr(0, c1);
            const int step = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
            const double v = std::stod(line.substr(c2 + 1));
            int k = -1;
            for (std::size_t i = 0; i < m.targets().size(); ++i)
                if (m.targets()[i] == target) k = static_cast<int>(i);
            REQUIRE(k >= 0);
            CHECK(v == doctest::Approx(m.get(k, step - 1)).epsilon(1e-12));
            ++rows;
        }
        CHECK(rows == 4 + 3 + 2 + 1);
    }
    SUBCASE("curves image exists") {
        CHECK(std::filesystem::exists(tmp / "forgetting_curves.png"));
    }
}

TEST_CASE("comparison report carries the delta A.F. line") {
    TempDir tmp("cmp");
    const MetricMatrix a = matrix_with_drops({40, 50}, {4, 2}, 55);
    const MetricMatrix b = matrix_with_drops({40, 50}, {1, 1}, 56);
    render_comparison(a, "baseline", b, "full", tmp.str());
    std::ifstream is(tmp / "compare.txt");
    std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(all.find("delta A.F.") != std::string::npos);
    CHECK(all.find("4.0") != std::string::npos);  // (4+2) - (1+1)
}
