#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qtlab/errors.hpp"

namespace qtlab {

// One minute of OHLC prices. Timestamps are integer minutes since epoch.
struct Bar {
    std::int64_t timestamp = 0;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
};

// Throws validation_error if prices are non-positive or not ordered low<=o,c<=high.
void validate_bar(const Bar& bar, const std::string& context = {});

struct PriceSeries {
    std::vector<Bar> bars;
    std::string instrument_id;

    std::size_t size() const { return bars.size(); }
};

// Validates every bar plus strictly-increasing timestamps and non-emptiness.
void validate_series(const PriceSeries& series);

struct LoadOptions {
    // Reject non-consecutive minute timestamps. Default keeps gaps (data may
    // legitimately skip session breaks).
    bool strict_gaps = false;
};

// CSV with header `timestamp,open,high,low,close`. Rows are sorted by
// timestamp after load; duplicates and invariant violations are errors.
PriceSeries load_csv(const std::string& path, const LoadOptions& opts = {});

// Emits the same header and one row per bar. load_csv(write_csv(s)) == s.
void write_csv(const PriceSeries& series, const std::string& path);

enum class SynthKind { trend_up, trend_down, sine, random_walk };

SynthKind synth_kind_from_string(const std::string& name);
std::string to_string(SynthKind kind);

struct SynthParams {
    double base = 100.0;      // starting/centre price level
    double amplitude = 1.0;   // sine amplitude, index points
    double period = 60.0;     // sine period, bars
    double drift = 1.0;       // per-bar close increment for trend kinds
    double noise = 0.0;       // high/low margin (sine/trend), per-bar log-vol (random walk)
};

// Deterministic synthetic series. Same (kind, length, seed, params) always
// produces the identical series; every bar satisfies the Bar invariants.
PriceSeries synth_series(SynthKind kind, int length, std::uint64_t seed,
                         const SynthParams& params = {});

// Bars at indices [t-n, t). Requires n >= 1, t >= n and t < series.size()
// (bar t itself must exist; the window is the history strictly before it).
std::span<const Bar> window(const PriceSeries& series, std::size_t t, std::size_t n);

}  // namespace qtlab
