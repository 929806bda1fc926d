#include <doctest.h>

#include <cmath>
#include <vector>

#include "fusionnet/adam.hpp"
#include "fusionnet/graph.hpp"
#include "fusionnet/rng.hpp"
#include "gradcheck.hpp"

using namespace fusionnet;

namespace {

template <typename T>
TensorT<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    TensorT<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Scalar probe: sum(R * x) with a fixed random R keeps every gradient entry
// well conditioned for finite differences.
template <typename T>
VarT<T> weighted_sum(const VarT<T>& x, uint64_t seed = 99) {
    Rng rng(seed);
    TensorT<T> r(x->value.shape());
    for (int64_t i = 0; i < r.numel(); ++i) {
        const double mag = rng.uniform(0.5, 1.5);
        r[i] = static_cast<T>(rng.uniform() < 0.5 ? -mag : mag);
    }
    return sum(mul(make_const(std::move(r), "probe"), x));
}

} // namespace

TEST_CASE("backward of sum(2x) is all twos") {
    auto x = make_leaf(Tensor({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6}));
    auto root = sum(mul_scalar(x, 2.0));
    backward(root);
    for (int64_t i = 0; i < 6; ++i) CHECK(x->grad()[i] == 2.0f);
}

TEST_CASE("backward of sum(x*x) doubles the values") {
    auto x = make_leaf(Tensor({2}, std::vector<float>{1, 2}));
    auto root = sum(mul(x, x));
    backward(root);
    CHECK(x->grad()[0] == 2.0f);
    CHECK(x->grad()[1] == 4.0f);
}

TEST_CASE("backward requires a scalar root") {
    auto x = make_leaf(Tensor({2}, std::vector<float>{1, 2}));
    auto y = mul_scalar(x, 3.0);
    CHECK_THROWS_AS(backward(y), contract_error);
}

TEST_CASE("leaves not reachable from the root keep zero gradients") {
    auto x = make_leaf(Tensor({2}, std::vector<float>{1, 2}));
    auto orphan = make_leaf(Tensor({3}, std::vector<float>{5, 5, 5}));
    backward(sum(x));
    CHECK(orphan->grad()[0] == 0.0f);
    CHECK(orphan->grad()[2] == 0.0f);
}

TEST_CASE("backward is deterministic: identical graphs give bit-identical gradients") {
    Rng rng(42);
    Tensor input = random_tensor<float>({1, 2, 6, 6}, rng, 0.0, 1.0);
    Tensor weight = random_tensor<float>({3, 2, 3, 3}, rng);
    Tensor bias = random_tensor<float>({3}, rng);

    auto run = [&] {
        auto in = make_leaf(input);
        auto w = make_leaf(weight);
        auto b = make_leaf(bias);
        backward(weighted_sum(sigmoid(conv2d(in, w, b, 1))));
        return std::tuple{in->grad(), w->grad(), b->grad()};
    };
    auto [g1_in, g1_w, g1_b] = run();
    auto [g2_in, g2_w, g2_b] = run();
    CHECK(g1_in == g2_in);
    CHECK(g1_w == g2_w);
    CHECK(g1_b == g2_b);
}

TEST_CASE("conv2d with a 1x1 identity kernel is the identity map") {
    auto in = make_const(Tensor({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}));
    auto w = make_const(Tensor({1, 1, 1, 1}, std::vector<float>{1}));
    auto b = make_const(Tensor({1}));
    auto out = conv2d(in, w, b, 0);
    CHECK(out->value == in->value);
}

TEST_CASE("conv2d all-ones 3x3 on all-ones 3x3 input counts window overlap") {
    auto in = make_const(Tensor::ones({1, 1, 3, 3}));
    auto w = make_const(Tensor::ones({1, 1, 3, 3}));
    auto b = make_const(Tensor({1}));
    auto out = conv2d(in, w, b, 1);
    // corners see 4 in-bounds taps, edges 6, center 9
    const std::vector<float> expected = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (int64_t i = 0; i < 9; ++i) CHECK(out->value[i] == expected[static_cast<size_t>(i)]);
}

TEST_CASE("conv2d with zero weights yields the bias everywhere") {
    Rng rng(1);
    auto in = make_const(random_tensor<float>({1, 3, 4, 4}, rng));
    auto w = make_const(Tensor({2, 3, 3, 3}));
    auto b = make_const(Tensor({2}, std::vector<float>{0.25f, -1.5f}));
    auto out = conv2d(in, w, b, 1);
    for (int64_t i = 0; i < 16; ++i) {
        CHECK(out->value[i] == 0.25f);
        CHECK(out->value[16 + i] == -1.5f);
    }
}

TEST_CASE("conv2d validates channel counts and padding") {
    auto in = make_const(Tensor({1, 2, 4, 4}));
    auto w = make_const(Tensor({1, 3, 3, 3}));
    auto b = make_const(Tensor({1}));
    CHECK_THROWS_AS(conv2d(in, w, b, 1), shape_error);

    auto w_ok = make_const(Tensor({1, 2, 3, 3}));
    CHECK_THROWS_AS(conv2d(in, w_ok, b, 0), shape_error); // padding must be (k-1)/2
}

TEST_CASE("activations: values and ranges") {
    auto x = make_const(Tensor({5}, std::vector<float>{-3.2f, -0.5f, 0.0f, 0.5f, 40.0f}));
    auto r = relu(x);
    CHECK(r->value[0] == 0.0f);
    CHECK(r->value[2] == 0.0f);
    CHECK(r->value[3] == 0.5f);

    auto s = sigmoid(x);
    CHECK(s->value[2] == doctest::Approx(0.5).epsilon(1e-12));
    for (int64_t i = 0; i < 5; ++i) {
        CHECK(s->value[i] > 0.0f);
        CHECK(s->value[i] < 1.0f); // strict even at saturation
    }

    // sigmoid(x) + sigmoid(-x) == 1
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const float v = static_cast<float>(rng.uniform(-10, 10));
        auto pos = sigmoid(make_const(Tensor::scalar(v)))->value[0];
        auto neg = sigmoid(make_const(Tensor::scalar(-v)))->value[0];
        CHECK(static_cast<double>(pos) + static_cast<double>(neg) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("activation dispatcher routes by kind") {
    auto x = make_const(Tensor({3}, std::vector<float>{-1.0f, 0.0f, 2.0f}));
    auto r = activation(x, Activation::relu);
    CHECK(r->value[0] == 0.0f);
    CHECK(r->value[2] == 2.0f);
    auto s = activation(x, Activation::sigmoid);
    CHECK(s->value[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("conv2d gradients match central finite differences (32-bit)") {
    Rng rng(2024);
    std::vector<Tensor> values = {
        random_tensor<float>({1, 1, 4, 4}, rng, 0.1, 1.0), // input
        random_tensor<float>({2, 1, 3, 3}, rng),           // weight
        random_tensor<float>({2}, rng),                    // bias
    };
    gradcheck::GraphBuilder<float> build = [](const std::vector<VarT<float>>& leaves) {
        return weighted_sum(conv2d(leaves[0], leaves[1], leaves[2], 1));
    };
    auto report = gradcheck::check<float>(build, values, {.step = 1e-2});
    CAPTURE(report.max_rel_err);
    CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("conv2d gradients match central finite differences (64-bit)") {
    Rng rng(2024);
    std::vector<TensorT<double>> values = {
        random_tensor<double>({1, 1, 4, 4}, rng, 0.1, 1.0),
        random_tensor<double>({2, 1, 3, 3}, rng),
        random_tensor<double>({2}, rng),
    };
    gradcheck::GraphBuilder<double> build = [](const std::vector<VarT<double>>& leaves) {
        return weighted_sum(conv2d(leaves[0], leaves[1], leaves[2], 1));
    };
    auto report = gradcheck::check<double>(build, values, {.step = 1e-5});
    CAPTURE(report.max_rel_err);
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("elementwise, reduce, concat, blend and activation gradients (64-bit)") {
    Rng rng(5150);
    auto values_pair = [&](double lo, double hi) {
        return std::vector<TensorT<double>>{random_tensor<double>({2, 3, 3}, rng, lo, hi),
                                            random_tensor<double>({2, 3, 3}, rng, lo, hi)};
    };

    struct Case {
        const char* name;
        gradcheck::GraphBuilder<double> build;
        std::vector<TensorT<double>> values;
    };
    std::vector<Case> cases;

    cases.push_back({"add", [](const auto& v) { return weighted_sum(add(v[0], v[1])); },
                     values_pair(-1, 1)});
    cases.push_back({"sub", [](const auto& v) { return weighted_sum(sub(v[0], v[1])); },
                     values_pair(-1, 1)});
    cases.push_back({"mul", [](const auto& v) { return weighted_sum(mul(v[0], v[1])); },
                     values_pair(-1, 1)});
    cases.push_back({"mean", [](const auto& v) { return mean(mul(v[0], v[1])); },
                     values_pair(-1, 1)});
    cases.push_back({"concat", [](const auto& v) { return weighted_sum(concat_channels(v[0], v[1])); },
                     values_pair(-1, 1)});
    // relu: keep inputs away from the kink at zero
    {
        auto vals = std::vector<TensorT<double>>{random_tensor<double>({2, 3, 3}, rng, 0.2, 1.0)};
        for (int64_t i = 0; i < vals[0].numel(); ++i)
            if (i % 2 == 0) vals[0][i] = -vals[0][i];
        cases.push_back({"relu", [](const auto& v) { return weighted_sum(relu(v[0])); },
                         std::move(vals)});
    }
    cases.push_back({"sigmoid", [](const auto& v) { return weighted_sum(sigmoid(mul(v[0], v[1]))); },
                     values_pair(-2, 2)});
    cases.push_back({"square", [](const auto& v) { return weighted_sum(square(sub(v[0], v[1]))); },
                     values_pair(-1, 1)});
    cases.push_back({"sqrt", [](const auto& v) { return weighted_sum(sqrt_elem(mul(v[0], v[1]))); },
                     values_pair(0.5, 2.0)});
    // max_elem: keep the two sides separated to avoid tie subgradients
    {
        auto vals = values_pair(0.0, 0.4);
        for (int64_t i = 0; i < vals[1].numel(); ++i) vals[1][i] += 0.6;
        for (int64_t i = 0; i < vals[1].numel(); i += 3) {
            std::swap(vals[0][i], vals[1][i]); // mix which side wins
        }
        cases.push_back({"max_elem", [](const auto& v) { return weighted_sum(max_elem(v[0], v[1])); },
                         std::move(vals)});
    }
    {
        auto vals = values_pair(0.0, 1.0);
        vals.push_back(random_tensor<double>({2, 3, 3}, rng, 0.05, 0.95)); // blend weight
        cases.push_back({"convex_blend",
                         [](const auto& v) { return weighted_sum(convex_blend(v[2], v[0], v[1])); },
                         std::move(vals)});
    }

    for (auto& c : cases) {
        CAPTURE(c.name);
        auto report = gradcheck::check<double>(c.build, c.values, {.step = 1e-5});
        CAPTURE(report.max_rel_err);
        CHECK(report.max_rel_err < 1e-6);
    }
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
    Tensor param({3}, std::vector<float>{1.0f, -2.0f, 0.5f});
    const Tensor before = param;
    auto state = AdamState::for_param(param);
    adam_step(param, Tensor({3}), state, 1e-2);
    CHECK(param == before);
    CHECK(state.step == 1);
}

TEST_CASE("adam first step is sign descent for g much larger than epsilon") {
    Tensor param({1}, std::vector<float>{0.7f});
    auto state = AdamState::for_param(param);
    adam_step(param, Tensor({1}, std::vector<float>{0.3f}), state, 1e-3);
    CHECK(param[0] == doctest::Approx(0.7f - 1e-3f).epsilon(1e-4));

    Tensor param2({1}, std::vector<float>{0.7f});
    auto state2 = AdamState::for_param(param2);
    adam_step(param2, Tensor({1}, std::vector<float>{-2.0f}), state2, 1e-3);
    CHECK(param2[0] == doctest::Approx(0.7f + 1e-3f).epsilon(1e-4));
}

TEST_CASE("adam two-step trace matches a hand-rolled scalar reference") {
    // independent scalar reference
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double ref_p = 0.5, ref_m = 0.0, ref_v = 0.0;
    std::vector<double> ref_trace;
    for (int t = 1; t <= 2; ++t) {
        const double g = 1.0;
        ref_m = b1 * ref_m + (1 - b1) * g;
        ref_v = b2 * ref_v + (1 - b2) * g * g;
        const double mh = ref_m / (1 - std::pow(b1, t));
        const double vh = ref_v / (1 - std::pow(b2, t));
        ref_p -= lr * mh / (std::sqrt(vh) + eps);
        ref_trace.push_back(ref_p);
    }

    Tensor param({1}, std::vector<float>{0.5f});
    auto state = AdamState::for_param(param);
    adam_step(param, Tensor({1}, std::vector<float>{1.0f}), state, lr);
    CHECK(param[0] == doctest::Approx(ref_trace[0]).epsilon(1e-6));
    adam_step(param, Tensor({1}, std::vector<float>{1.0f}), state, lr);
    CHECK(param[0] == doctest::Approx(ref_trace[1]).epsilon(1e-6));
    CHECK(state.step == 2);
}

TEST_CASE("numeric_error surfaces when a graph produces non-finite values") {
    auto x = make_leaf(Tensor({1}, std::vector<float>{0.0f}));
    CHECK_THROWS_AS(sqrt_elem(add_scalar(x, -1.0)), numeric_error); // sqrt(-1) = NaN
}
