#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "qtlab/errors.hpp"
#include "qtlab/metrics.hpp"

using namespace qtlab;

namespace {

// O(n^2) oracle straight from the definition.
double brute_force_mdd(const std::vector<double>& curve) {
    double worst = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i)
        for (std::size_t j = i + 1; j < curve.size(); ++j)
            worst = std::max(worst, (curve[i] - curve[j]) / curve[i]);
    return std::max(worst, 0.0);
}

// Two-pass mean/std oracle.
double two_pass_vol(const std::vector<double>& returns) {
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double acc = 0.0;
    for (double r : returns) acc += (r - mean) * (r - mean);
    return std::sqrt(acc / static_cast<double>(returns.size()));
}

std::vector<double> random_walk_curve(std::mt19937_64& rng, std::size_t n) {
    std::vector<double> curve{1000.0};
    std::normal_distribution<double> step(0.0, 5.0);
    while (curve.size() < n) curve.push_back(std::max(curve.back() + step(rng), 10.0));
    return curve;
}

}  // namespace

TEST_CASE("total_return basics") {
    const double up[] = {1'000'000.0, 1'200'000.0};
    CHECK(total_return(up) == doctest::Approx(0.20));
    const double flat[] = {100.0, 100.0, 100.0};
    CHECK(total_return(flat) == 0.0);
    const double down[] = {100.0, 50.0};
    CHECK(total_return(down) == doctest::Approx(-0.5));
    const double single[] = {100.0};
    CHECK_THROWS_AS(total_return(single), validation_error);
}

TEST_CASE("sharpe hand cases") {
    const double zero_mean[] = {0.01, -0.01};
    CHECK(sharpe(zero_mean) == doctest::Approx(0.0));
    const double constant[] = {0.01, 0.01};
    CHECK_THROWS_WITH_AS(sharpe(constant), doctest::Contains("undefined Sharpe"),
                         validation_error);
    // mean 0.01, population std sqrt(2/3)*0.01
    const double three[] = {0.02, 0.00, 0.01};
    CHECK(sharpe(three) == doctest::Approx(1.0 / std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(sharpe(three) == doctest::Approx(1.224744871391589).epsilon(1e-12));
}

TEST_CASE("volatility basics and two-pass oracle") {
    const double constant[] = {0.01, 0.01, 0.01};
    CHECK(volatility(constant) == 0.0);
    const double sym[] = {0.01, -0.01};
    CHECK(volatility(sym) == doctest::Approx(0.01));

    std::mt19937_64 rng(17);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> returns(100);
        for (auto& r : returns) r = dist(rng);
        CHECK(volatility(returns) == doctest::Approx(two_pass_vol(returns)).epsilon(1e-12));
    }
}

TEST_CASE("max_drawdown hand case and edge cases") {
    const double curve[] = {100.0, 120.0, 90.0, 110.0};
    CHECK(max_drawdown(curve) == doctest::Approx(0.25));
    const double rising[] = {1.0, 2.0, 3.0};
    CHECK(max_drawdown(rising) == 0.0);
    const double one[] = {42.0};
    CHECK(max_drawdown(one) == 0.0);
}

TEST_CASE("max_drawdown equals brute force on random walks") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto curve = random_walk_curve(rng, 500);
        CHECK(max_drawdown(curve) == brute_force_mdd(curve));
    }
    // one longer case near the spec's n <= 2000 bound
    const auto curve = random_walk_curve(rng, 2000);
    CHECK(max_drawdown(curve) == brute_force_mdd(curve));
}

TEST_CASE("scaling invariance of tr, sharpe and mdd") {
    std::mt19937_64 rng(29);
    const auto curve = random_walk_curve(rng, 300);
    std::vector<double> scaled;
    for (double v : curve) scaled.push_back(v * 4.0);  // power of two, exact

    CHECK(total_return(scaled) == total_return(curve));
    CHECK(max_drawdown(scaled) == max_drawdown(curve));
    const auto r1 = period_returns(curve);
    const auto r2 = period_returns(scaled);
    CHECK(sharpe(r1) == doctest::Approx(sharpe(r2)).epsilon(1e-12));
    CHECK(max_drawdown(curve) >= 0.0);
    CHECK(max_drawdown(curve) < 1.0);
}

TEST_CASE("compute_metrics reports per-day headline and per-bar detail") {
    std::vector<double> equity;
    for (int i = 0; i <= 40; ++i) equity.push_back(1000.0 + i + ((i % 3) - 1) * 0.25);
    const auto report = compute_metrics(equity, 10);
    CHECK(report.tr == doctest::Approx(total_return(equity)));
    CHECK(report.mdd == doctest::Approx(max_drawdown(equity)));
    REQUIRE(report.sr.has_value());
    REQUIRE(report.sr_per_bar.has_value());
    // day sampling: pre-trading point plus day closes 10, 20, 30, 40
    std::vector<double> daily{equity[0], equity[10], equity[20], equity[30], equity[40]};
    CHECK(report.vol == doctest::Approx(volatility(period_returns(daily))));
}

TEST_CASE("metrics_to_json encodes undefined sharpe as null") {
    std::vector<double> flat(25, 1000.0);
    const auto report = compute_metrics(flat, 5);
    CHECK_FALSE(report.sr.has_value());
    const auto text = metrics_to_json(report, "flat");
    CHECK(text.find("\"sr\": null") != std::string::npos);
    CHECK(text.find("\"method\": \"flat\"") != std::string::npos);
}
