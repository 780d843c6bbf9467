#pragma once

// Black-box victim side: pin table, query ledger and the built-in
// multi-purpose digital chip simulator.
//
// The chip has 18 pins. Power is applied between Vcc (p0) and GND (p3),
// p1/p2 are input/output enables, p4..p8 select one of five operating
// modes by priority, p9..p12 are analog inputs, p14..p17 binary inputs.
// Unless powered and both enables read true, the output sits at 0 V.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dnt/core.hpp"

namespace dnt {

enum class PinKind { power, ground, binary, analog, unused };

inline const char* to_string(PinKind k) {
    switch (k) {
        case PinKind::power: return "power";
        case PinKind::ground: return "ground";
        case PinKind::binary: return "binary";
        case PinKind::analog: return "analog";
        case PinKind::unused: return "unused";
    }
    return "?";
}

inline PinKind pin_kind_from_string(const std::string& s) {
    if (s == "power") return PinKind::power;
    if (s == "ground") return PinKind::ground;
    if (s == "binary") return PinKind::binary;
    if (s == "analog") return PinKind::analog;
    if (s == "unused") return PinKind::unused;
    throw std::runtime_error("unknown pin kind: " + s);
}

struct PinSpec {
    int index = 0;
    std::string name;
    PinKind kind = PinKind::unused;
    Interval safe_range;
    std::string description;
};

/// Datasheet-level description of the victim chip.
struct ChipSpec {
    std::vector<PinSpec> pins;
    double binary_threshold = 2.5;
    Interval binary_domain{-1.0, 6.0};
    double power_threshold = 4.0;
    Interval power_domain{-1.0, 6.0};
    // Lookup table 1: polynomial, coefficients in ascending powers.
    std::vector<double> lut1_coefficients{7.0, 0.0, 4.0, 0.1, 0.1};
    // Lookup table 2: damped sine amplitude * sin(in) * exp(-decay * in).
    double lut2_amplitude = 14.0;
    double lut2_decay = 2.0;
    Interval analog_domain{0.0, 10.0};

    static constexpr int kPinCount = 18;

    int power_pin() const { return find_kind(PinKind::power); }
    int ground_pin() const { return find_kind(PinKind::ground); }

    void validate() const {
        if (static_cast<int>(pins.size()) != kPinCount) {
            throw std::runtime_error("chip spec needs exactly 18 pins");
        }
        int power = 0, ground = 0;
        for (int i = 0; i < kPinCount; ++i) {
            if (pins[i].index != i) throw std::runtime_error("pin indices must be 0..17 in order");
            if (!(pins[i].safe_range.lo < pins[i].safe_range.hi)) {
                throw std::runtime_error("pin " + std::to_string(i) + ": empty safe range");
            }
            if (pins[i].kind == PinKind::power) ++power;
            if (pins[i].kind == PinKind::ground) ++ground;
        }
        if (power != 1 || ground != 1) {
            throw std::runtime_error("chip spec needs exactly one power and one ground pin");
        }
    }

    /// The built-in victim: the 18-pin multi-purpose chip.
    static ChipSpec builtin() {
        ChipSpec s;
        auto pin = [&s](int idx, std::string name, PinKind kind, double lo, double hi, std::string desc) {
            s.pins.push_back(PinSpec{idx, std::move(name), kind, Interval{lo, hi}, std::move(desc)});
        };
        pin(0, "Vcc", PinKind::power, 0.0, 5.0, "From GND");
        pin(1, "Enable Input", PinKind::binary, 0.0, 5.0, "enb 1,2");
        pin(2, "Enable Output", PinKind::binary, 0.0, 5.0, "");
        pin(3, "GND", PinKind::ground, 0.0, 5.0, "From Vcc");
        pin(4, "Set Mode 1", PinKind::binary, 0.0, 5.0, "Amplify input 9 by input 10 p[9]*p[10]");
        pin(5, "Set Mode 2", PinKind::binary, 0.0, 5.0, "Read from LUT1 position of input 11");
        pin(6, "Set Mode 3", PinKind::binary, 0.0, 5.0, "Read from LUT2 position of input 12");
        pin(7, "Set Mode 4", PinKind::binary, 0.0, 5.0, "Average(LUT1(input 11),LUT2(input 12))");
        pin(8, "Set Mode 5", PinKind::binary, 0.0, 5.0, "Binary from inputs 14, 15, 16, 17");
        for (int i = 9; i <= 12; ++i) {
            pin(i, "Input " + std::to_string(i), PinKind::analog, 0.0, 10.0, "");
        }
        pin(13, "Unused Pin", PinKind::unused, 0.0, 5.0, "Doing nothing");
        for (int i = 14; i <= 17; ++i) {
            pin(i, "Input " + std::to_string(i), PinKind::binary, 0.0, 5.0, "Inputs");
        }
        s.validate();
        return s;
    }

  private:
    int find_kind(PinKind k) const {
        for (const auto& p : pins) {
            if (p.kind == k) return p.index;
        }
        return -1;
    }
};

// ---------------------------------------------------------------------------
// Chip spec <-> JSON
// ---------------------------------------------------------------------------

inline nlohmann::json chip_spec_to_json(const ChipSpec& s) {
    nlohmann::json j;
    j["binary_threshold"] = s.binary_threshold;
    j["binary_domain"] = {s.binary_domain.lo, s.binary_domain.hi};
    j["power_threshold"] = s.power_threshold;
    j["power_domain"] = {s.power_domain.lo, s.power_domain.hi};
    j["lut1_coefficients"] = s.lut1_coefficients;
    j["lut2"] = {{"amplitude", s.lut2_amplitude}, {"decay", s.lut2_decay}};
    j["analog_domain"] = {s.analog_domain.lo, s.analog_domain.hi};
    auto& pins = j["pins"] = nlohmann::json::array();
    for (const auto& p : s.pins) {
        pins.push_back({{"index", p.index},
                        {"name", p.name},
                        {"kind", to_string(p.kind)},
                        {"range", {p.safe_range.lo, p.safe_range.hi}},
                        {"description", p.description}});
    }
    return j;
}

inline ChipSpec chip_spec_from_json(const nlohmann::json& j) {
    ChipSpec s;
    s.binary_threshold = j.at("binary_threshold").get<double>();
    s.binary_domain = {j.at("binary_domain")[0].get<double>(), j.at("binary_domain")[1].get<double>()};
    s.power_threshold = j.at("power_threshold").get<double>();
    s.power_domain = {j.at("power_domain")[0].get<double>(), j.at("power_domain")[1].get<double>()};
    s.lut1_coefficients = j.at("lut1_coefficients").get<std::vector<double>>();
    s.lut2_amplitude = j.at("lut2").at("amplitude").get<double>();
    s.lut2_decay = j.at("lut2").at("decay").get<double>();
    if (j.contains("analog_domain")) {
        s.analog_domain = {j.at("analog_domain")[0].get<double>(), j.at("analog_domain")[1].get<double>()};
    }
    s.pins.clear();
    for (const auto& pj : j.at("pins")) {
        PinSpec p;
        p.index = pj.at("index").get<int>();
        p.name = pj.at("name").get<std::string>();
        p.kind = pin_kind_from_string(pj.at("kind").get<std::string>());
        p.safe_range = {pj.at("range")[0].get<double>(), pj.at("range")[1].get<double>()};
        p.description = pj.value("description", "");
        s.pins.push_back(std::move(p));
    }
    s.validate();
    return s;
}

inline ChipSpec load_chip_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open chip spec: " + path);
    nlohmann::json j;
    in >> j;
    return chip_spec_from_json(j);
}

// ---------------------------------------------------------------------------
// Query ledger
// ---------------------------------------------------------------------------

/// Tracks query usage against the adversary budget. Counters are atomic so
/// the pure chip function can be shared across threads.
class QueryLedger {
  public:
    QueryLedger() = default;
    explicit QueryLedger(std::optional<std::int64_t> budget) : budget_(budget) {}

    QueryLedger(const QueryLedger& other)
        : queries_used_(other.queries_used_.load()),
          fault_count_(other.fault_count_.load()),
          budget_(other.budget_) {}
    QueryLedger& operator=(const QueryLedger& other) {
        queries_used_ = other.queries_used_.load();
        fault_count_ = other.fault_count_.load();
        budget_ = other.budget_;
        return *this;
    }

    std::int64_t queries_used() const { return queries_used_.load(); }
    std::int64_t fault_count() const { return fault_count_.load(); }
    std::optional<std::int64_t> budget() const { return budget_; }
    void set_budget(std::optional<std::int64_t> b) { budget_ = b; }

    /// budget - queries_used, or nullopt when unlimited.
    std::optional<std::int64_t> remaining() const {
        if (!budget_) return std::nullopt;
        return *budget_ - queries_used_.load();
    }

    /// Reserves one query or throws; never lets queries_used exceed budget.
    void charge() {
        std::int64_t used = queries_used_.load();
        do {
            if (budget_ && used >= *budget_) {
                throw BudgetExhaustedError("query budget of " + std::to_string(*budget_) + " exhausted");
            }
        } while (!queries_used_.compare_exchange_weak(used, used + 1));
    }

    void record_fault() { fault_count_.fetch_add(1); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["queries_used"] = queries_used();
        j["fault_count"] = fault_count();
        j["budget"] = budget_ ? nlohmann::json(*budget_) : nlohmann::json(nullptr);
        return j;
    }

  private:
    std::atomic<std::int64_t> queries_used_{0};
    std::atomic<std::int64_t> fault_count_{0};
    std::optional<std::int64_t> budget_;
};

// ---------------------------------------------------------------------------
// Black box interface
// ---------------------------------------------------------------------------

/// A memoryless device under attack: m voltages in, one real out.
/// Equal inputs always yield equal outputs.
class BlackBox {
  public:
    virtual ~BlackBox() = default;

    virtual std::size_t input_dim() const = 0;
    virtual const std::vector<Interval>& safe_ranges() const = 0;

    /// Issues one query. Throws MalfunctionError for out-of-range inputs
    /// and BudgetExhaustedError once the ledger budget is spent.
    virtual double query(std::span<const double> x) = 0;

    virtual const QueryLedger& ledger() const = 0;
    virtual QueryLedger& ledger() = 0;
};

/// Simulator for the built-in (or a config-loaded) multi-purpose chip.
class Chip final : public BlackBox {
  public:
    explicit Chip(ChipSpec spec = ChipSpec::builtin(),
                  std::optional<std::int64_t> budget = std::nullopt)
        : spec_(std::move(spec)), ledger_(budget) {
        spec_.validate();
        for (const auto& p : spec_.pins) safe_ranges_.push_back(p.safe_range);
    }

    const ChipSpec& spec() const { return spec_; }
    std::size_t input_dim() const override { return spec_.pins.size(); }
    const std::vector<Interval>& safe_ranges() const override { return safe_ranges_; }
    const QueryLedger& ledger() const override { return ledger_; }
    QueryLedger& ledger() override { return ledger_; }

    /// Reads a voltage as a logic level. The threshold itself reads true.
    bool binary_read(double v) const {
        if (!spec_.binary_domain.contains(v)) {
            throw MalfunctionError("binary input " + format_double(v) + " V outside " +
                                   format_double(spec_.binary_domain.lo) + ".." +
                                   format_double(spec_.binary_domain.hi) + " V");
        }
        return v >= spec_.binary_threshold;
    }

    /// True iff the supply differential Vcc-GND reaches the power threshold.
    bool powered(double vcc, double gnd) const {
        const double diff = vcc - gnd;
        if (!spec_.power_domain.contains(diff)) {
            throw MalfunctionError("supply differential " + format_double(diff) + " V outside " +
                                   format_double(spec_.power_domain.lo) + ".." +
                                   format_double(spec_.power_domain.hi) + " V");
        }
        return diff >= spec_.power_threshold;
    }

    double lut1(double in) const {
        check_analog(in);
        double acc = spec_.lut1_coefficients.empty() ? 0.0 : spec_.lut1_coefficients[0];
        double p = 1.0;
        for (std::size_t k = 1; k < spec_.lut1_coefficients.size(); ++k) {
            p *= in;
            acc += spec_.lut1_coefficients[k] * p;
        }
        return acc;
    }

    double lut2(double in) const {
        check_analog(in);
        return spec_.lut2_amplitude * std::sin(in) * std::exp(-spec_.lut2_decay * in);
    }

    /// Priority encoder over the five select pins: first flag scanning
    /// p4 -> p8 wins; 0 means no mode selected.
    int select_mode(bool m1, bool m2, bool m3, bool m4, bool m5) const {
        if (m1) return 1;
        if (m2) return 2;
        if (m3) return 3;
        if (m4) return 4;
        if (m5) return 5;
        return 0;
    }

    /// The chip function with no ledger bookkeeping. Pure and thread-safe.
    double eval(std::span<const double> x) const {
        check_pin_ranges(x);
        if (!powered(x[0], x[3]) || !binary_read(x[1]) || !binary_read(x[2])) {
            return 0.0;  // idle output
        }
        const int mode = select_mode(binary_read(x[4]), binary_read(x[5]), binary_read(x[6]),
                                     binary_read(x[7]), binary_read(x[8]));
        switch (mode) {
            case 1: return x[9] * x[10];
            case 2: return lut1(x[11]);
            case 3: return lut2(x[12]);
            case 4: return (lut1(x[11]) + lut2(x[12])) / 2.0;
            case 5: {
                // p14 is the most significant bit.
                int v = 0;
                for (int i = 14; i <= 17; ++i) v = (v << 1) | (binary_read(x[i]) ? 1 : 0);
                return static_cast<double>(v);
            }
            default: return 0.0;
        }
    }

    double query(std::span<const double> x) override {
        try {
            const double y = eval(x);
            ledger_.charge();
            return y;
        } catch (const MalfunctionError&) {
            ledger_.record_fault();
            throw;
        }
    }

  private:
    void check_analog(double in) const {
        if (!spec_.analog_domain.contains(in)) {
            throw MalfunctionError("analog input " + format_double(in) + " V outside " +
                                   format_double(spec_.analog_domain.lo) + ".." +
                                   format_double(spec_.analog_domain.hi) + " V");
        }
    }

    void check_pin_ranges(std::span<const double> x) const {
        if (x.size() != spec_.pins.size()) {
            throw std::invalid_argument("query expects " + std::to_string(spec_.pins.size()) +
                                        " voltages, got " + std::to_string(x.size()));
        }
        for (const auto& p : spec_.pins) {
            if (!p.safe_range.contains(x[p.index])) {
                throw MalfunctionError("pin " + std::to_string(p.index) + " (" + p.name + ") at " +
                                       format_double(x[p.index]) + " V outside safe range");
            }
        }
    }

    ChipSpec spec_;
    std::vector<Interval> safe_ranges_;
    QueryLedger ledger_;
};

}  // namespace dnt
