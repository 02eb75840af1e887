#include "qtlab/market_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace qtlab {

void validate_bar(const Bar& bar, const std::string& context) {
    auto fail = [&](const std::string& what) {
        std::ostringstream oss;
        oss << "bad bar";
        if (!context.empty()) oss << " (" << context << ")";
        oss << " at timestamp " << bar.timestamp << ": " << what << " [o=" << bar.open
            << " h=" << bar.high << " l=" << bar.low << " c=" << bar.close << "]";
        throw validation_error(oss.str());
    };
    if (!(bar.open > 0.0 && bar.high > 0.0 && bar.low > 0.0 && bar.close > 0.0))
        fail("prices must be strictly positive");
    if (!(bar.low <= bar.high)) fail("low > high");
    if (!(bar.low <= bar.open && bar.open <= bar.high)) fail("open outside [low, high]");
    if (!(bar.low <= bar.close && bar.close <= bar.high)) fail("close outside [low, high]");
}

void validate_series(const PriceSeries& series) {
    if (series.bars.empty()) throw validation_error("empty series");
    for (std::size_t i = 0; i < series.bars.size(); ++i) {
        validate_bar(series.bars[i], series.instrument_id);
        if (i > 0 && series.bars[i].timestamp <= series.bars[i - 1].timestamp) {
            std::ostringstream oss;
            oss << "timestamps not strictly increasing at row " << i << " (ts "
                << series.bars[i].timestamp << ")";
            throw validation_error(oss.str());
        }
    }
}

namespace {

double parse_price_field(std::string_view field, std::size_t line_no, const char* name) {
    double value = 0.0;
    auto* begin = field.data();
    auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        std::ostringstream oss;
        oss << "line " << line_no << ": cannot parse " << name << " from '" << std::string(field)
            << "'";
        throw parse_error(oss.str());
    }
    return value;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace

PriceSeries load_csv(const std::string& path, const LoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw validation_error("empty series (no header): " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "timestamp,open,high,low,close")
        throw parse_error("bad header in " + path + ": '" + line + "'");

    PriceSeries series;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != 5) {
            std::ostringstream oss;
            oss << "line " << line_no << ": expected 5 fields, got " << fields.size();
            throw parse_error(oss.str());
        }
        Bar bar;
        {
            auto f = fields[0];
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), bar.timestamp);
            if (ec != std::errc{} || ptr != f.data() + f.size()) {
                std::ostringstream oss;
                oss << "line " << line_no << ": cannot parse timestamp from '" << std::string(f)
                    << "'";
                throw parse_error(oss.str());
            }
        }
        bar.open = parse_price_field(fields[1], line_no, "open");
        bar.high = parse_price_field(fields[2], line_no, "high");
        bar.low = parse_price_field(fields[3], line_no, "low");
        bar.close = parse_price_field(fields[4], line_no, "close");
        series.bars.push_back(bar);
    }
    if (series.bars.empty()) throw validation_error("empty series: " + path);

    std::stable_sort(series.bars.begin(), series.bars.end(),
                     [](const Bar& a, const Bar& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < series.bars.size(); ++i) {
        if (series.bars[i].timestamp == series.bars[i - 1].timestamp) {
            std::ostringstream oss;
            oss << "duplicate timestamp " << series.bars[i].timestamp << " in " << path;
            throw validation_error(oss.str());
        }
        if (opts.strict_gaps && series.bars[i].timestamp != series.bars[i - 1].timestamp + 1) {
            std::ostringstream oss;
            oss << "gap between timestamps " << series.bars[i - 1].timestamp << " and "
                << series.bars[i].timestamp << " in " << path;
            throw validation_error(oss.str());
        }
    }
    validate_series(series);
    return series;
}

namespace {

std::string format_price(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_csv(const PriceSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "timestamp,open,high,low,close\n";
    for (const auto& bar : series.bars) {
        out << bar.timestamp << ',' << format_price(bar.open) << ',' << format_price(bar.high)
            << ',' << format_price(bar.low) << ',' << format_price(bar.close) << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

SynthKind synth_kind_from_string(const std::string& name) {
    if (name == "trend-up") return SynthKind::trend_up;
    if (name == "trend-down") return SynthKind::trend_down;
    if (name == "sine") return SynthKind::sine;
    if (name == "random-walk") return SynthKind::random_walk;
    throw config_error("unknown synth kind '" + name + "'");
}

std::string to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::trend_up: return "trend-up";
        case SynthKind::trend_down: return "trend-down";
        case SynthKind::sine: return "sine";
        case SynthKind::random_walk: return "random-walk";
    }
    return "?";
}

PriceSeries synth_series(SynthKind kind, int length, std::uint64_t seed,
                         const SynthParams& params) {
    if (length < 1) throw validation_error("synth_series: length must be >= 1");
    if (params.base <= 0.0) throw validation_error("synth_series: base price must be positive");
    if (params.period <= 0.0) throw validation_error("synth_series: period must be positive");

    const double margin = std::fabs(params.noise);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    PriceSeries series;
    series.instrument_id = "SYN-" + to_string(kind);
    series.bars.reserve(static_cast<std::size_t>(length));

    double prev_close = params.base;
    for (int t = 0; t < length; ++t) {
        Bar bar;
        bar.timestamp = t;
        bar.open = prev_close;
        switch (kind) {
            case SynthKind::sine:
                bar.close = params.base +
                            params.amplitude * std::sin(2.0 * M_PI * static_cast<double>(t) /
                                                        params.period);
                break;
            case SynthKind::trend_up:
                bar.close = params.base + std::fabs(params.drift) * static_cast<double>(t + 1);
                break;
            case SynthKind::trend_down:
                bar.close = params.base - std::fabs(params.drift) * static_cast<double>(t + 1);
                break;
            case SynthKind::random_walk:
                // geometric step keeps prices positive for every seed
                bar.close = prev_close * std::exp(margin * normal(rng));
                break;
        }
        if (kind == SynthKind::random_walk) {
            const double hi_wiggle = 1.0 + margin * std::fabs(normal(rng));
            const double lo_wiggle = 1.0 + margin * std::fabs(normal(rng));
            bar.high = std::max(bar.open, bar.close) * hi_wiggle;
            bar.low = std::min(bar.open, bar.close) / lo_wiggle;
        } else {
            bar.high = std::max(bar.open, bar.close) + margin;
            bar.low = std::min(bar.open, bar.close) - margin;
        }
        validate_bar(bar, "synth " + to_string(kind));
        series.bars.push_back(bar);
        prev_close = bar.close;
    }
    return series;
}

std::span<const Bar> window(const PriceSeries& series, std::size_t t, std::size_t n) {
    if (n < 1) throw contract_error("window: n must be >= 1");
    if (t < n || t >= series.bars.size()) {
        std::ostringstream oss;
        oss << "window: t=" << t << " n=" << n << " out of range for series of "
            << series.bars.size() << " bars";
        throw contract_error(oss.str());
    }
    return std::span<const Bar>(series.bars.data() + (t - n), n);
}

}  // namespace qtlab
