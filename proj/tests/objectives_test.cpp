#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mbk/grad_check.hpp"
#include "mbk/objectives.hpp"

using namespace mbk;

namespace {

TensorPtr random_tensor(const Shape& shape, Rng& rng, double scl = 1.0) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)));
    for (auto& v : d) {
        v = (rng.next_unit() * 2.0 - 1.0) * scl;
    }
    return make_tensor(shape, std::move(d));
}

TensorPtr random_stochastic(const Shape& shape, Rng& rng) {
    auto logits = random_tensor(shape, rng, 2.0);
    return softmax(logits, -1);
}

// Literal double-loop evaluation of the plain feature-map MSE.
double fmt_oracle(const TensorPtr& a, const TensorPtr& b) {
    const auto T = a->shape[0];
    const auto N = a->shape[1];
    double acc = 0.0;
    for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t n = 0; n < N; ++n) {
            const double d = a->data[static_cast<std::size_t>(t * N + n)] -
                             b->data[static_cast<std::size_t>(t * N + n)];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(T * N);
}

// Brute-force KL over heads and rows with the same 1e-12 floor.
double at_oracle(const TensorPtr& p, const TensorPtr& q) {
    const auto cols = p->shape.back();
    const auto rows = p->size() / cols;
    double acc = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            const double pv = p->data[static_cast<std::size_t>(r * cols + c)];
            const double qv = q->data[static_cast<std::size_t>(r * cols + c)];
            acc += pv * (std::log(std::max(pv, 1e-12)) - std::log(std::max(qv, 1e-12)));
        }
    }
    return acc / static_cast<double>(rows);
}

}  // namespace

TEST_CASE("raw_fmt_loss identity, constant and oracle cases") {
    Rng rng(1);
    auto h = random_tensor({3, 4}, rng);
    auto same = make_tensor(h->shape, h->data);
    CHECK(raw_fmt_loss(h, same)->data[0] == 0.0);

    auto ones_map = ones({5, 7});
    auto zeros_map = zeros({5, 7});
    CHECK(raw_fmt_loss(ones_map, zeros_map)->data[0] == 1.0);

    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    CHECK(std::fabs(raw_fmt_loss(a, b)->data[0] - fmt_oracle(a, b)) < 1e-12);
}

TEST_CASE("raw_fmt_loss scales quadratically") {
    Rng rng(2);
    auto h = random_tensor({4, 6}, rng);
    auto z = zeros({4, 6});
    const double c = 3.5;
    const double base = raw_fmt_loss(h, z)->data[0];
    const double scaled = raw_fmt_loss(scale(h, c), z)->data[0];
    CHECK(scaled == doctest::Approx(c * c * base).epsilon(1e-12));
}

TEST_CASE("fmt_loss vanishes on identical maps and rejects shape mismatch") {
    Rng rng(3);
    auto h = random_tensor({3, 5}, rng);
    auto same = make_tensor(h->shape, h->data);
    CHECK(fmt_loss(h, same, 1.0)->data[0] < 1e-10);

    auto narrow = random_tensor({3, 4}, rng);
    try {
        fmt_loss(h, narrow, 1.0);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("inter-block") != std::string::npos);
    }
}

TEST_CASE("at_loss identity, closed-form and brute-force oracle") {
    auto p = make_tensor({1, 1, 2}, {0.5, 0.5});
    auto same = make_tensor({1, 1, 2}, {0.5, 0.5});
    CHECK(at_loss(p, same)->data[0] < 1e-12);

    // KL((.5,.5) || (.25,.75)) = 0.5 ln 2 + 0.5 ln(2/3).
    auto q = make_tensor({1, 1, 2}, {0.25, 0.75});
    const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(at_loss(p, q)->data[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::fabs(at_loss(p, q)->data[0] - 0.143841) < 1e-5);

    Rng rng(4);
    auto pr = random_stochastic({2, 3, 5}, rng);
    auto qr = random_stochastic({2, 3, 5}, rng);
    CHECK(at_loss(pr, qr)->data[0] >= 0.0);
    CHECK(std::fabs(at_loss(pr, qr)->data[0] - at_oracle(pr, qr)) < 1e-10);
}

TEST_CASE("at_loss is asymmetric on a generic pair") {
    Rng rng(5);
    auto p = random_stochastic({1, 4, 4}, rng);
    auto q = random_stochastic({1, 4, 4}, rng);
    CHECK(at_loss(p, q)->data[0] != at_loss(q, p)->data[0]);
}

TEST_CASE("at_loss rejects non-stochastic rows") {
    auto p = make_tensor({1, 1, 2}, {0.5, 0.5});
    auto bad = make_tensor({1, 1, 2}, {0.7, 0.6});
    CHECK_THROWS_AS(at_loss(p, bad), DomainError);
    CHECK_THROWS_AS(at_loss(bad, p), DomainError);
}

TEST_CASE("transfer losses treat the teacher as constant") {
    Rng rng(6);
    auto teacher = random_tensor({2, 3}, rng);
    teacher->requires_grad = true;
    auto student = random_tensor({2, 3}, rng);
    CHECK_THROWS_AS(raw_fmt_loss(teacher, student), ContractError);
    CHECK_THROWS_AS(fmt_loss(teacher, student, 1.0), ContractError);
}

TEST_CASE("layer_kt_loss combines the two terms linearly") {
    Rng rng(7);
    LayerTrace teacher;
    LayerTrace student;
    for (int l = 0; l < 2; ++l) {
        teacher.feature_maps.push_back(random_tensor({3, 6}, rng));
        student.feature_maps.push_back(random_tensor({3, 6}, rng));
        teacher.attentions.push_back(random_stochastic({2, 3, 3}, rng));
        student.attentions.push_back(random_stochastic({2, 3, 3}, rng));
    }
    TransferWeights w;
    const double f = fmt_loss(teacher.feature_maps[1], student.feature_maps[1],
                              w.fmt_stats_weight)->data[0];
    const double a = at_loss(teacher.attentions[1], student.attentions[1])->data[0];
    CHECK(layer_kt_loss(teacher, student, 1, w)->data[0] ==
          doctest::Approx(f + a).epsilon(1e-12));

    TransferWeights fmt_only = w;
    fmt_only.at_weight = 0.0;
    CHECK(layer_kt_loss(teacher, student, 1, fmt_only)->data[0] ==
          doctest::Approx(f).epsilon(1e-12));
    TransferWeights at_only = w;
    at_only.fmt_weight = 0.0;
    CHECK(layer_kt_loss(teacher, student, 1, at_only)->data[0] ==
          doctest::Approx(a).epsilon(1e-12));

    LayerTrace same;
    same.feature_maps = {make_tensor(teacher.feature_maps[0]->shape,
                                     teacher.feature_maps[0]->data),
                         make_tensor(teacher.feature_maps[1]->shape,
                                     teacher.feature_maps[1]->data)};
    same.attentions = {make_tensor(teacher.attentions[0]->shape, teacher.attentions[0]->data),
                       make_tensor(teacher.attentions[1]->shape, teacher.attentions[1]->data)};
    for (std::int64_t l = 0; l < 2; ++l) {
        CHECK(layer_kt_loss(teacher, same, l, w)->data[0] < 1e-10);
    }

    CHECK_THROWS_AS(layer_kt_loss(teacher, student, 2, w), LookupError);
}

TEST_CASE("pd combination follows the mixing formula") {
    auto mlm = scalar(2.0);
    auto kd = scalar(1.0);
    auto nsp = scalar(0.3);
    CHECK(combine_pd(mlm, kd, nsp, 0.5)->data[0] == doctest::Approx(1.8).epsilon(1e-12));
    CHECK_THROWS_AS(combine_pd(mlm, kd, nsp, 0.0), ConfigError);
    CHECK_THROWS_AS(combine_pd(mlm, kd, nsp, 1.0), ConfigError);
}

TEST_CASE("one-hot teacher distribution makes KD equal the MLM term") {
    Rng rng(8);
    auto logits = random_tensor({3, 5}, rng, 2.0);
    const std::vector<std::int64_t> labels = {1, 4, 0};
    auto onehot = zeros({3, 5});
    for (std::size_t k = 0; k < labels.size(); ++k) {
        onehot->data[k * 5 + static_cast<std::size_t>(labels[k])] = 1.0;
    }
    const double mlm = cross_entropy_labels(logits, labels)->data[0];
    const double kd = cross_entropy_soft(logits, onehot)->data[0];
    CHECK(kd == doctest::Approx(mlm).epsilon(1e-12));

    auto nsp_logits = make_tensor({1, 2}, {0.2, -0.4});
    const double nsp = cross_entropy_labels(nsp_logits, {1})->data[0];
    const double combined = pd_loss(logits, labels, onehot, nsp_logits, 1, 0.5)->data[0];
    CHECK(combined == doctest::Approx(mlm + nsp).epsilon(1e-12));
}

TEST_CASE("pd_loss requires at least one masked position") {
    auto logits = zeros({0, 5});
    auto probs = zeros({0, 5});
    auto nsp_logits = make_tensor({1, 2}, {0.0, 0.0});
    CHECK_THROWS_AS(pd_loss(logits, {}, probs, nsp_logits, 0, 0.5), ContractError);
}

TEST_CASE("cross entropy against a hand-computed value") {
    auto logits = make_tensor({1, 2}, {1.0, 2.0});
    const double expected = std::log(std::exp(1.0) + std::exp(2.0)) - 2.0;
    CHECK(cross_entropy_labels(logits, {1})->data[0] ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("every loss passes the finite-difference check on the student side") {
    Rng rng(9);

    auto teacher_map = random_tensor({3, 5}, rng);
    auto student_map = random_tensor({3, 5}, rng);
    CHECK(grad_check("raw_fmt",
                     [&] { return raw_fmt_loss(teacher_map, student_map); },
                     {student_map}, 1e-4)
              .pass);
    CHECK(grad_check("fmt",
                     [&] { return fmt_loss(teacher_map, student_map, 1.0); },
                     {student_map}, 1e-4)
              .pass);
    CHECK(grad_check("fmt stats-only",
                     [&] { return fmt_loss(teacher_map, student_map, 2.5); },
                     {student_map}, 1e-4)
              .pass);

    auto teacher_attn = random_stochastic({2, 3, 3}, rng);
    auto student_logits = random_tensor({2, 3, 3}, rng, 2.0);
    CHECK(grad_check("at through softmax",
                     [&] { return at_loss(teacher_attn, softmax(student_logits, -1)); },
                     {student_logits}, 1e-4)
              .pass);

    auto mlm_logits = random_tensor({4, 6}, rng, 2.0);
    auto teacher_probs = random_stochastic({4, 6}, rng);
    auto nsp_logits = random_tensor({1, 2}, rng);
    const std::vector<std::int64_t> labels = {0, 5, 2, 2};
    CHECK(grad_check("pd",
                     [&] { return pd_loss(mlm_logits, labels, teacher_probs, nsp_logits, 1, 0.5); },
                     {mlm_logits, nsp_logits}, 1e-4)
              .pass);
}
