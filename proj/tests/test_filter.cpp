#include "oracles.hpp"

#include <espf/filter.hpp>

#include <doctest.h>

#include <cmath>

using namespace espf;
using oracle::Mat;
using oracle::Vec;

namespace {

using Config = EspfConfig<double>;
using State = EspfState<double>;

auto identity = [](const Vec &x) { return x; };

/// Fully plausible, all-live state over explicit points.
State state_from_points(const Mat &points, const Config &config) {
    State s;
    s.mode = points.rowwise().mean();
    s.ensemble.points = points;
    s.ensemble.plausibility = Vec::Ones(points.cols());
    detail::reset_ensemble_scores(s.ensemble, config.epsilon, config.necessity_floor);
    s.box = Hyperrectangle<double>::bounding(points);
    s.spread = estimate_spread<double>(points, s.mode);
    s.prev_dispersion = s.spread.log_det();
    s.sigma = config.sigma0;
    s.radius = plausibility_radius(config.eta);
    return s;
}

SpreadMatrix<double> scalar_spread(double variance) {
    return SpreadMatrix<double>(Mat::Constant(1, 1, variance));
}

} // namespace

TEST_CASE("config validation") {
    Config c;
    CHECK_NOTHROW(c.validate());
    c.sigma_min = 2.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = Config{};
    c.eta = 1.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = Config{};
    c.lambda_s = -0.1;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = Config{};
    c.min_survivors = -1;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    CHECK(Config{}.survivor_floor(6) == 7);
}

TEST_CASE("initialize") {
    Config axis;
    axis.generation = Generation::axis;
    const Hyperrectangle<double> box(Vec::Zero(6), Vec::Constant(6, 2.0));
    const State s = initialize(box, axis);
    CHECK(s.ensemble.size() == 13);
    CHECK(s.ensemble.live_count() == 13);
    CHECK(s.ensemble.plausibility == Vec::Ones(13));
    CHECK(s.mode == box.center());
    CHECK(s.ensemble.points.col(0) == box.center());
    CHECK(s.tau == 0);
    CHECK(s.sigma == axis.sigma0);

    Config sparse;
    const Hyperrectangle<double> b2(Vec{{-1.0, 3.0}}, Vec{{1.0, 7.0}});
    const State g = initialize(b2, sparse);
    CHECK(g.ensemble.size() == static_cast<Eigen::Index>(oracle::smolyak_brute_force(2, 2).size()));
    for (Eigen::Index j = 0; j < g.ensemble.size(); ++j) CHECK(b2.contains(g.ensemble.points.col(j)));

    CHECK_THROWS_AS(initialize(Hyperrectangle<double>(Vec::Ones(2), Vec::Ones(2)), axis), ArgumentError);
    // One flat axis is fine.
    CHECK_NOTHROW(initialize(Hyperrectangle<double>(Vec{{0.0, 1.0}}, Vec{{1.0, 1.0}}), axis));
}

TEST_CASE("predict") {
    Config c;
    c.generation = Generation::axis;
    const Hyperrectangle<double> box(Vec{{1.0}}, Vec{{2.0}});
    const State s = initialize(box, c);

    const State same = predict(s, identity, ProcessNoise<double>::none(1), c);
    CHECK(same.ensemble.points == s.ensemble.points);
    CHECK(same.box.lower() == s.box.lower());
    CHECK(same.box.upper() == s.box.upper());
    CHECK(same.mode == s.mode);

    const auto noise = ProcessNoise<double>::from_box(Hyperrectangle<double>::centered(Vec::Zero(1), Vec{{0.25}}));
    const State inflated = predict(s, identity, noise, c);
    CHECK(inflated.box.lower()[0] == doctest::Approx(0.75));
    CHECK(inflated.box.upper()[0] == doctest::Approx(2.25));
    CHECK(inflated.ensemble.plausibility == s.ensemble.plausibility);

    const State doubled = predict(s, [](const Vec &x) { Vec y = 2.0 * x; return y; }, noise, c);
    CHECK(doubled.box.lower()[0] == doctest::Approx(2.0 - 0.25));
    CHECK(doubled.box.upper()[0] == doctest::Approx(4.0 + 0.25));
    CHECK(doubled.mode[0] == doctest::Approx(3.0));

    auto failing = [](const Vec &x) -> Vec {
        if (x[0] > 1.9) throw std::runtime_error("diverged");
        return x;
    };
    try {
        predict(s, failing, ProcessNoise<double>::none(1), c);
        FAIL("expected a propagation error");
    } catch (const PropagationError &e) {
        CHECK(e.point() == 1);
    }
    auto nan_model = [](const Vec &x) -> Vec { return x * std::nan(""); };
    CHECK_THROWS_AS(predict(s, nan_model, ProcessNoise<double>::none(1), c), PropagationError);
}

TEST_CASE("update with every residual admissible") {
    Config c;
    c.generation = Generation::axis;
    State s = initialize(Hyperrectangle<double>(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)), c);
    s.ensemble.plausibility << 1.0, 0.5, 0.5, 0.25, 0.25;
    const auto r = update(s, Vec(Vec::Zero(2)), identity, SpreadMatrix<double>(100.0 * Mat::Identity(2, 2)), c);
    CHECK(r.diagnostics.pruned == 0);
    CHECK(r.diagnostics.compatibility == Vec::Ones(5));
    CHECK(r.diagnostics.posterior_plausibility == s.ensemble.plausibility);
    CHECK(r.diagnostics.necessity_retention == 1.0);
    // Necessities: center 0.5, the rest floored.
    CHECK(r.diagnostics.necessity[0] == doctest::Approx(0.5));
    for (int i = 1; i < 5; ++i) CHECK(r.diagnostics.necessity[i] == c.necessity_floor);
    CHECK(r.diagnostics.weights.sum() == doctest::Approx(1.0));

    // With uniform plausibility every necessity sits at the floor and the weights are pi-proportional.
    s.ensemble.plausibility.setOnes();
    const auto u = update(s, Vec(Vec::Zero(2)), identity, SpreadMatrix<double>(100.0 * Mat::Identity(2, 2)), c);
    for (int i = 0; i < 5; ++i) CHECK(u.diagnostics.weights[i] == doctest::Approx(0.2));
    CHECK(u.state.mode.isZero(1e-15));
}

TEST_CASE("five point hand case") {
    Config c;
    c.eta = 0.5;
    Mat pts(1, 5);
    pts << 0.0, 1.0, 2.0, 3.0, 4.0;
    const State s = state_from_points(pts, c);
    // Points 2 and 4 map far from the measurement.
    auto h = [](const Vec &x) {
        Vec y(1);
        y[0] = (x[0] == 2.0 || x[0] == 4.0) ? 10.0 : x[0];
        return y;
    };
    const Vec y = Vec::Constant(1, 1.3);
    const auto r = update(s, y, h, scalar_spread(1.0), c);

    // Hand computation: gamma = {0,1,10,3,10}, mean 4.8, spread 18.96; outer bound with R = 1.
    const double p = 18.96 + 1e-6 * 1.0, beta = std::sqrt(1.0 / p);
    const double shape = (1 + beta) * p + (1 + 1 / beta) * 1.0;
    const double r2 = -2.0 * std::log(0.5);
    const double residuals[] = {1.3, 0.3, -8.7, -1.7, -8.7};
    for (int i = 0; i < 5; ++i) {
        CHECK(r.diagnostics.compatibility[i] == (residuals[i] * residuals[i] / shape <= r2 ? 1.0 : 0.0));
    }
    CHECK(r.diagnostics.compatibility == Vec{{1.0, 1.0, 0.0, 1.0, 0.0}});
    CHECK(r.diagnostics.pruned == 2);
    CHECK(r.diagnostics.pruned_mask[2]);
    CHECK(r.diagnostics.pruned_mask[4]);
    const Vec expected_w{{1.0 / 3, 1.0 / 3, 0.0, 1.0 / 3, 0.0}};
    CHECK((r.diagnostics.weights - expected_w).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(r.state.mode[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(r.diagnostics.mean_surprisal == doctest::Approx(2.0 * surprisal(0.0) / 5.0));
    CHECK(r.diagnostics.necessity_retention == doctest::Approx(0.6));
}

TEST_CASE("single compatible point becomes the mode") {
    Config c;
    c.eta = 0.1;
    c.min_survivors = 1;
    Mat pts(1, 7);
    pts << -3, -2, -1, 0, 1, 2, 3;
    const State s = state_from_points(pts, c);
    const auto r = update(s, Vec(Vec::Constant(1, 2.0)), identity, scalar_spread(1e-4), c);
    CHECK(r.diagnostics.compatibility.sum() == 1.0);
    CHECK(r.state.mode[0] == 2.0);
    CHECK(r.state.ensemble.live_count() == 1);
}

TEST_CASE("survivor floor keeps the least surprising points") {
    Config c;
    c.eta = 0.1;
    Mat pts(1, 7);
    pts << -3, -2, -1, 0, 1, 2, 3;
    const State s = state_from_points(pts, c);
    const auto r = update(s, Vec(Vec::Constant(1, 2.0)), identity, scalar_spread(1e-4), c);
    // Floor n+1 = 2: the compatible point plus the nearest incompatible one.
    CHECK(r.state.ensemble.live_count() == 2);
    CHECK(r.state.ensemble.alive[5]);
    CHECK((r.state.ensemble.alive[4] || r.state.ensemble.alive[6]));
    CHECK(r.state.mode[0] == 2.0);
}

TEST_CASE("total incompatibility") {
    Config c;
    c.eta = 0.1;
    Mat pts(1, 3);
    pts << -1, 0, 1;
    const State s = state_from_points(pts, c);
    CHECK_THROWS_AS(update(s, Vec(Vec::Constant(1, -100.0)), identity, scalar_spread(1e-6), c),
                    TotalIncompatibilityError);

    State dead = s;
    dead.ensemble.alive.setConstant(false);
    CHECK_THROWS_AS(update(dead, Vec(Vec::Zero(1)), identity, scalar_spread(1.0), c), StructuralError);
}

TEST_CASE("regenerate") {
    Config c;
    const int n = 3;
    // Survivors symmetric about the mode with unit spread.
    const double a = std::sqrt((2.0 * n + 1.0) / 2.0);
    Mat pts = Mat::Zero(n, 2 * n + 1);
    for (int i = 0; i < n; ++i) {
        pts(i, 1 + i) = a;
        pts(i, 1 + n + i) = -a;
    }
    State s = state_from_points(pts, c);
    s.mode.setZero();
    const State g = regenerate(s, c);
    CHECK(g.sigma == c.sigma0);
    for (int i = 0; i < n; ++i) {
        CHECK((g.ensemble.points.col(1 + i) - c.sigma0 * Vec::Unit(n, i)).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((g.ensemble.points.col(1 + n + i) + c.sigma0 * Vec::Unit(n, i)).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(g.ensemble.points.col(0) == s.mode);
    CHECK(g.ensemble.plausibility[0] == 1.0);
    CHECK(g.ensemble.live_count() == 2 * n + 1);
    CHECK(g.box.lower().isApprox(-c.sigma0 * Vec::Ones(n), 1e-5));

    // Zero dispersion change leaves the radius at its base value.
    Config adapt = c;
    adapt.lambda_plus = 0.7;
    adapt.lambda_minus = 0.7;
    State s2 = s;
    s2.prev_dispersion = estimate_spread<double>(pts, s.mode).log_det();
    CHECK(regenerate(s2, adapt).radius == doctest::Approx(plausibility_radius(adapt.eta)));
    s2.prev_dispersion -= 1.0;
    CHECK(regenerate(s2, adapt).radius == doctest::Approx(1.7 * plausibility_radius(adapt.eta)));
    s2.prev_dispersion += 11.0;
    CHECK(regenerate(s2, adapt).radius == doctest::Approx(0.1 * plausibility_radius(adapt.eta)));

    Config decay = c;
    decay.lambda_t = 0.05;
    State s3 = s;
    s3.tau = 10;
    CHECK(regenerate(s3, decay).sigma == doctest::Approx(c.sigma0 * std::exp(-0.5)));
    CHECK(std::exp(-0.5) == doctest::Approx(0.6065).epsilon(1e-4));

    State none = s;
    none.ensemble.alive.setConstant(false);
    CHECK_THROWS_AS(regenerate(none, c), StructuralError);
}

TEST_CASE("sigma adaptation follows dispersion and surprisal") {
    Config c;
    c.sigma0 = 1.0;
    c.sigma_min = 0.01;
    c.sigma_max = 100.0;
    c.lambda_d = 0.2;
    c.lambda_s = 0.1;
    c.s_ref = 1.0;
    c.s0 = 2.0;
    Mat pts(2, 5);
    pts << 0, 1, 0, -1, 0, 0, 0, 2, 0, -2;
    State s = state_from_points(pts, c);
    s.ensemble.surprisal << 0.0, 1.0, 2.0, 3.0, 4.0;
    const double d = estimate_spread<double>(pts, s.mode).log_det();
    const double s_k = c.s0 * (1 + c.lambda_s * (2.0 - c.s_ref));
    const double expected = c.sigma0 * std::exp(-c.lambda_d * d + c.lambda_s * (s_k - c.s_ref));
    CHECK(regenerate(s, c).sigma == doctest::Approx(expected).epsilon(1e-14));

    c.sigma_max = 1.0;
    c.lambda_d = 0.0;
    CHECK(regenerate(s, c).sigma == 1.0);
}

TEST_CASE("step without a measurement is a pure prediction") {
    Config c;
    c.generation = Generation::axis;
    const State s = initialize(Hyperrectangle<double>(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)), c);
    const auto noise = ProcessNoise<double>::from_box(Hyperrectangle<double>::centered(Vec::Zero(2), Vec::Constant(2, 0.1)));
    const auto r = step(s, identity, noise, std::optional<Vec>{}, identity, SpreadMatrix<double>(Mat::Identity(2, 2)), c);
    CHECK_FALSE(r.diagnostics.has_value());
    CHECK(r.state.tau == 0);
    CHECK((r.state.box.lower().array() <= s.box.lower().array()).all());
    CHECK((r.state.box.upper().array() >= s.box.upper().array()).all());
}

TEST_CASE("perfect measurement of the mode is a fixed point") {
    Config c;
    c.generation = Generation::axis;
    State s = initialize(Hyperrectangle<double>(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)), c);
    const SpreadMatrix<double> r(0.01 * Mat::Identity(2, 2));
    for (int k = 0; k < 10; ++k) {
        const Vec y = s.mode;
        s = step(s, identity, ProcessNoise<double>::none(2), std::optional<Vec>(y), identity, r, c).state;
        CHECK(s.mode.isZero(1e-14));
    }
    CHECK(s.tau == 10);
}

TEST_CASE("straight-line motion is tracked within the gate") {
    Config c;
    c.generation = Generation::axis;
    c.sigma0 = 1.5;
    const double dt = 1.0;
    Mat f(2, 2);
    f << 1, dt, 0, 1;
    auto process = [&](const Vec &x) { Vec y = f * x; return y; };
    auto h = [](const Vec &x) { Vec y(1); y[0] = x[0]; return y; };
    const Vec truth0{{0.0, 0.5}};
    State s = initialize(Hyperrectangle<double>::centered(truth0, Vec{{1.0, 0.3}}), c);
    const SpreadMatrix<double> r(Mat::Constant(1, 1, 0.01));
    const auto noise = ProcessNoise<double>::none(2);
    for (int k = 1; k <= 20; ++k) {
        const Vec truth{{truth0[0] + truth0[1] * k * dt, truth0[1]}};
        const auto out = step(s, process, noise, std::optional<Vec>(h(truth)), h, r, c);
        s = out.state;
        // The mode stays within the gate radius of the measurement, scaled by the residual shape.
        const double gate = out.diagnostics->gate_radius * std::sqrt(out.diagnostics->residual_shape(0, 0));
        CHECK(std::abs(s.mode[0] - truth[0]) <= gate);
    }
}

TEST_CASE("spread contracts under repeated informative measurements") {
    Config c;
    c.generation = Generation::axis;
    c.eta = 0.6;
    c.sigma0 = 1.2;
    State s = initialize(Hyperrectangle<double>(Vec::Constant(1, -5.0), Vec::Constant(1, 5.0)), c);
    const SpreadMatrix<double> r(Mat::Constant(1, 1, 0.04));
    std::vector<double> dispersion;
    for (int k = 0; k < 15; ++k) {
        s = step(s, identity, ProcessNoise<double>::none(1), std::optional<Vec>(Vec::Constant(1, 1.0)), identity, r, c).state;
        dispersion.push_back(s.spread.log_det());
    }
    for (std::size_t k = 3; k < dispersion.size(); ++k) CHECK(dispersion[k] <= dispersion[k - 1] + 1e-12);
}

TEST_CASE("randomized cycle invariants") {
    oracle::Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.integer(1, 4);
        Config c;
        c.generation = rng.integer(0, 1) ? Generation::axis : Generation::smolyak;
        c.eta = rng.uniform(0.2, 0.99);
        c.sigma_min = 0.3;
        c.sigma0 = rng.uniform(0.5, 2.0);
        c.sigma_max = 2.5;
        c.lambda_d = rng.uniform(0.0, 0.3);
        c.lambda_s = rng.uniform(0.0, 0.3);
        c.lambda_t = rng.uniform(0.0, 0.1);
        c.compatibility = rng.integer(0, 1) ? CompatibilityRule::binary : CompatibilityRule::graded;
        const Mat a = Mat::Identity(n, n) + 0.1 * rng.matrix(n, n);
        auto process = [&](const Vec &x) { Vec y = a * x + 0.05 * x.array().sin().matrix(); return y; };
        auto h = [](const Vec &x) { Vec y = x.head(1); y[0] += 0.1 * x.squaredNorm(); return y; };
        State s = initialize(Hyperrectangle<double>::centered(rng.gaussian(n), rng.vector(n, 0.5, 2.0)), c);
        const SpreadMatrix<double> r(Mat::Constant(1, 1, rng.uniform(0.01, 1.0)));
        for (int k = 0; k < 5; ++k) {
            const State predicted = predict(s, process, ProcessNoise<double>::none(n), c);
            UpdateResult<double> u;
            try {
                u = update(predicted, Vec(h(rng.gaussian(n))), h, r, c);
            } catch (const TotalIncompatibilityError &) {
                break;
            }
            const auto &d = u.diagnostics;
            for (Eigen::Index i = 0; i < d.posterior_plausibility.size(); ++i) {
                CHECK(d.posterior_plausibility[i] <= d.prior_plausibility[i]);
                if (d.compatibility[i] == 1.0) CHECK_FALSE(d.pruned_mask[i]);
            }
            CHECK(d.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK((d.weights.array() >= 0.0).all());
            CHECK((d.weights.array() <= 1.0).all());
            s = regenerate(u.state, c);
            s.tau = predicted.tau + 1;
            CHECK(s.sigma <= c.sigma_max);
            CHECK(s.sigma >= c.sigma_min * std::exp(-c.lambda_t * static_cast<double>(predicted.tau)) * (1 - 1e-15));
        }
    }
}
