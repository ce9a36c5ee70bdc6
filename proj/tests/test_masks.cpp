#include <doctest.h>

#include <cmath>

#include "cmtda/masks.hpp"
#include "test_util.hpp"

using namespace cmtda;
using cmtda::test::TempDir;

namespace {

Tensor const_map(int h, int w, float v) { return Tensor(1, h, w, v); }

ClassPrototypes protos_from_rows(const std::vector<std::vector<float>>& rows, float decay = 0.99f) {
    ClassPrototypes p(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()), decay);
    for (std::size_t c = 0; c < rows.size(); ++c) {
        for (std::size_t d = 0; d < rows[c].size(); ++d) p.row(static_cast<int>(c))[d] = rows[c][d];
        p.count[c] = 1;
    }
    return p;
}

TargetRepresentation tr_from_rows(const std::vector<std::vector<float>>& rows) {
    TargetRepresentation t;
    t.num_classes = static_cast<int>(rows.size());
    t.dim = static_cast<int>(rows[0].size());
    t.present.assign(rows.size(), 1);
    for (const auto& r : rows) t.tr.insert(t.tr.end(), r.begin(), r.end());
    return t;
}

}  // namespace

TEST_CASE("model_level_mask direct evaluation") {
    const Tensor q_cur = const_map(2, 2, 0.9f);
    const Tensor q_pre = const_map(2, 2, 0.5f);
    SUBCASE("alpha 0.8 blends toward the previous teacher") {
        const Tensor m = model_level_mask(q_cur, q_pre, 0.8);
        for (float v : m.v) CHECK(v == doctest::Approx(0.58).epsilon(1e-6));
    }
    SUBCASE("alpha 0 returns the current confidence exactly") {
        const Tensor m = model_level_mask(q_cur, q_pre, 0.0);
        CHECK(m.v == q_cur.v);
    }
    SUBCASE("alpha 1 returns the previous confidence exactly") {
        const Tensor m = model_level_mask(q_cur, q_pre, 1.0);
        CHECK(m.v == q_pre.v);
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(model_level_mask(q_cur, const_map(2, 3, 0.5f), 0.5), ShapeError);
    }
}

TEST_CASE("model_level_mask bounds and monotonicity over random draws") {
    Rng rng(71);
    for (int trial = 0; trial < 1000; ++trial) {
        const float qc = static_cast<float>(rng.uniform());
        const float qp = static_cast<float>(rng.uniform());
        const double a = rng.uniform();
        const Tensor m = model_level_mask(const_map(1, 1, qc), const_map(1, 1, qp), a);
        CHECK(m.v[0] >= 0.f);
        CHECK(m.v[0] <= 1.f);
        // raising either confidence never lowers the weight
        const float up = static_cast<float>(rng.uniform(qc, 1.0));
        const Tensor m2 = model_level_mask(const_map(1, 1, up), const_map(1, 1, qp), a);
        CHECK(m2.v[0] >= m.v[0] - 1e-7f);
    }
}

TEST_CASE("alpha schedule is a clamped linear ramp") {
    AlphaSchedule s{0.8, 0.2, 100};
    CHECK(alpha_at(s, 0) == doctest::Approx(0.8));
    CHECK(alpha_at(s, 100) == doctest::Approx(0.2));
    CHECK(alpha_at(s, 50) == doctest::Approx(0.5));
    CHECK(alpha_at(s, 1000) == doctest::Approx(0.2));
    CHECK_THROWS_AS(alpha_at(s, -1), ConfigError);
}

TEST_CASE("source prototype updates") {
    const int D = 3;
    Tensor feats(D, 2, 2);
    LabelMap labs(2, 2, 0);

    SUBCASE("first update seeds the row with the class mean (brute-force oracle)") {
        Rng rng(72);
        for (float& v : feats.v) v = static_cast<float>(rng.uniform());
        labs.v = {0, 1, 1, 0};
        ClassPrototypes p(2, D, 0.9f);
        update_source_prototypes(p, feats, labs);
        // brute force per-class mean
        for (int c = 0; c < 2; ++c) {
            for (int d = 0; d < D; ++d) {
                double sum = 0;
                int n = 0;
                for (int j = 0; j < 4; ++j)
                    if (labs.v[static_cast<std::size_t>(j)] == c) {
                        sum += feats.v[static_cast<std::size_t>(d) * 4 + j];
                        ++n;
                    }
                CHECK(p.row(c)[d] == doctest::Approx(sum / n).epsilon(1e-6));
            }
            CHECK(p.count[static_cast<std::size_t>(c)] == 1);
        }
    }
    SUBCASE("absent class rows are untouched") {
        ClassPrototypes p(3, D, 0.9f);
        p.row(2)[0] = 42.f;
        p.count[2] = 5;
        for (float& v : feats.v) v = 1.f;
        labs.v = {0, 0, 1, 1};
        update_source_prototypes(p, feats, labs);
        CHECK(p.row(2)[0] == 42.f);
        CHECK(p.count[2] == 5);
    }
    SUBCASE("constant features converge geometrically to the fixed point") {
        ClassPrototypes p(1, D, 0.9f);
        for (float& v : feats.v) v = 2.f;
        labs.v = {0, 0, 0, 0};
        update_source_prototypes(p, feats, labs);  // seeds at 2.0 exactly
        CHECK(p.row(0)[0] == doctest::Approx(2.f));
        // push the prototype away, then watch the gap shrink by the decay factor
        p.row(0)[0] = 1.f;
        float prev_gap = 1.f;
        for (int i = 0; i < 5; ++i) {
            update_source_prototypes(p, feats, labs);
            const float gap = std::abs(p.row(0)[0] - 2.f);
            CHECK(gap == doctest::Approx(prev_gap * 0.9f).epsilon(1e-5));
            prev_gap = gap;
        }
    }
    SUBCASE("resolution mismatch is rejected") {
        ClassPrototypes p(2, D, 0.9f);
        LabelMap wrong(3, 3, 0);
        CHECK_THROWS_AS(update_source_prototypes(p, feats, wrong), ShapeError);
    }
}

TEST_CASE("target representation equals the brute-force per-class mean") {
    SUBCASE("single class collapses to the global mean") {
        Tensor feats(2, 2, 2);
        Rng rng(73);
        for (float& v : feats.v) v = static_cast<float>(rng.uniform());
        LabelMap labs(2, 2, 3);
        const TargetRepresentation tr = target_representation(feats, labs);
        REQUIRE(tr.num_classes == 4);
        CHECK(tr.has(3));
        CHECK_FALSE(tr.has(0));
        for (int d = 0; d < 2; ++d) {
            double mean = 0;
            for (int j = 0; j < 4; ++j) mean += feats.v[static_cast<std::size_t>(d) * 4 + j];
            CHECK(tr.row(3)[d] == doctest::Approx(mean / 4).epsilon(1e-6));
        }
    }
    SUBCASE("two spatially separated constant classes are recovered exactly") {
        Tensor feats(1, 2, 2);
        feats.v = {5.f, 5.f, 9.f, 9.f};
        LabelMap labs(2, 2);
        labs.v = {0, 0, 1, 1};
        const TargetRepresentation tr = target_representation(feats, labs);
        CHECK(tr.row(0)[0] == 5.f);
        CHECK(tr.row(1)[0] == 9.f);
    }
    SUBCASE("random fixture matches a brute-force loop") {
        Rng rng(74);
        Tensor feats(4, 4, 4);
        for (float& v : feats.v) v = static_cast<float>(rng.normal());
        LabelMap labs(4, 4);
        for (auto& l : labs.v) l = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
        const TargetRepresentation tr = target_representation(feats, labs);
        for (int c = 0; c < 3; ++c) {
            for (int d = 0; d < 4; ++d) {
                double sum = 0;
                int n = 0;
                for (int j = 0; j < 16; ++j)
                    if (labs.v[static_cast<std::size_t>(j)] == c) {
                        sum += feats.v[static_cast<std::size_t>(d) * 16 + j];
                        ++n;
                    }
                if (n == 0) {
                    CHECK_FALSE(tr.has(c));
                } else {
                    CHECK(tr.row(c)[d] == doctest::Approx(sum / n).epsilon(1e-5));
                }
            }
        }
    }
}

TEST_CASE("feature_level_mask direct evaluations") {
    SUBCASE("TR equal to SR with other classes distinct gives weight 1") {
        auto sr = protos_from_rows({{1.f, 0.f}, {5.f, 5.f}});
        auto tr = tr_from_rows({{1.f, 0.f}, {2.f, 2.f}});
        LabelMap pred(1, 2);
        pred.v = {0, 1};
        const Tensor m = feature_level_mask(tr, sr, pred);
        CHECK(m.v[0] == doctest::Approx(1.0));
    }
    SUBCASE("a single present class gives weight 0") {
        auto sr = protos_from_rows({{0.f, 0.f}});
        auto tr = tr_from_rows({{3.f, 4.f}});
        LabelMap pred(1, 1);
        pred.v = {0};
        const Tensor m = feature_level_mask(tr, sr, pred);
        CHECK(m.v[0] == doctest::Approx(0.0));
    }
    SUBCASE("C=2 worked example: distances 1 and 3 give 0.75") {
        // |TR_1 - SR_1|^2 = 1, |TR_2 - SR_1|^2 = 3 -> m = 1 - 1/4
        auto sr = protos_from_rows({{0.f, 0.f, 0.f}, {10.f, 0.f, 0.f}});
        auto tr = tr_from_rows({{1.f, 0.f, 0.f}, {1.f, 1.f, 1.f}});
        LabelMap pred(1, 1);
        pred.v = {0};
        const Tensor m = feature_level_mask(tr, sr, pred);
        CHECK(m.v[0] == doctest::Approx(0.75).epsilon(1e-6));
    }
    SUBCASE("uninitialized SR rows and absent TR classes get weight 1") {
        ClassPrototypes sr(2, 2, 0.9f);  // count = 0 everywhere
        auto tr = tr_from_rows({{1.f, 1.f}, {2.f, 2.f}});
        LabelMap pred(1, 2);
        pred.v = {0, 1};
        const Tensor m = feature_level_mask(tr, sr, pred);
        CHECK(m.v[0] == 1.f);
        CHECK(m.v[1] == 1.f);
    }
    SUBCASE("near-zero denominator falls back to weight 1") {
        auto sr = protos_from_rows({{1.f, 1.f}});
        auto tr = tr_from_rows({{1.f, 1.f}});
        LabelMap pred(1, 1);
        pred.v = {0};
        CHECK(feature_level_mask(tr, sr, pred).v[0] == 1.f);
    }
}

TEST_CASE("feature mask ratio stays in [0,1] and the max(0,.) guard stays idle") {
    Rng rng(75);
    for (int trial = 0; trial < 1000; ++trial) {
        const int C = rng.uniform_int(1, 5);
        const int D = rng.uniform_int(1, 6);
        std::vector<std::vector<float>> sr_rows, tr_rows;
        for (int c = 0; c < C; ++c) {
            std::vector<float> a, b;
            for (int d = 0; d < D; ++d) {
                a.push_back(static_cast<float>(rng.normal() * 2));
                b.push_back(static_cast<float>(rng.normal() * 2));
            }
            sr_rows.push_back(a);
            tr_rows.push_back(b);
        }
        const auto weights =
            feature_level_class_weights(tr_from_rows(tr_rows), protos_from_rows(sr_rows), false);
        for (int c1 = 0; c1 < C; ++c1) {
            CHECK(weights[static_cast<std::size_t>(c1)] >= 0.f);
            CHECK(weights[static_cast<std::size_t>(c1)] <= 1.f);
            // the numerator is one summand of the denominator, so the ratio
            // can only exceed 1 via the epsilon rule, never the guard
            double num = 0, den = 0;
            for (int d = 0; d < D; ++d) {
                const double diff = tr_rows[static_cast<std::size_t>(c1)][static_cast<std::size_t>(d)] -
                                    sr_rows[static_cast<std::size_t>(c1)][static_cast<std::size_t>(d)];
                num += diff * diff;
            }
            for (int c = 0; c < C; ++c)
                for (int d = 0; d < D; ++d) {
                    const double diff =
                        tr_rows[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] -
                        sr_rows[static_cast<std::size_t>(c1)][static_cast<std::size_t>(d)];
                    den += diff * diff;
                }
            if (den >= 1e-8) CHECK(num <= den + 1e-9);
        }
        // alternative denominator still lands in [0,1] thanks to the guard
        const auto alt =
            feature_level_class_weights(tr_from_rows(tr_rows), protos_from_rows(sr_rows), true);
        for (float w : alt) {
            CHECK(w >= 0.f);
            CHECK(w <= 1.f);
        }
    }
}

TEST_CASE("feature mask is piecewise constant over the predicted-class partition") {
    auto sr = protos_from_rows({{0.f, 0.f}, {4.f, 0.f}, {0.f, 4.f}});
    auto tr = tr_from_rows({{1.f, 0.f}, {4.f, 1.f}, {1.f, 4.f}});
    LabelMap pred(2, 3);
    pred.v = {0, 1, 2, 2, 1, 0};
    const Tensor m = feature_level_mask(tr, sr, pred);
    CHECK(m.at(0, 0, 0) == m.at(0, 1, 2));
    CHECK(m.at(0, 0, 1) == m.at(0, 1, 1));
    CHECK(m.at(0, 0, 2) == m.at(0, 1, 0));
}

TEST_CASE("prototype snapshots round trip through the container format") {
    TempDir tmp("protos");
    ClassPrototypes p(3, 4, 0.97f);
    Rng rng(76);
    for (float& v : p.sr) v = static_cast<float>(rng.normal());
    p.count = {3, 0, 12};
    const std::string path = tmp / "p.pt0";
    save_prototypes(p, path);
    const ClassPrototypes q = load_prototypes(path);
    CHECK(q.num_classes == 3);
    CHECK(q.dim == 4);
    CHECK(q.decay == doctest::Approx(0.97f));
    CHECK(q.sr == p.sr);
    CHECK(q.count == p.count);
}
