#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <random>

#include "dnt/chip.hpp"

using Catch::Approx;
using namespace dnt;

namespace {

// 18-pin input with power and both enables on, everything else low.
std::array<double, 18> enabled_input() {
    std::array<double, 18> x{};
    x[0] = 5.0;  // Vcc
    x[1] = 5.0;  // enable input
    x[2] = 5.0;  // enable output
    x[3] = 0.0;  // GND
    return x;
}

}  // namespace

TEST_CASE("binary threshold") {
    Chip chip;
    CHECK_FALSE(chip.binary_read(0.0));
    CHECK(chip.binary_read(5.0));
    CHECK(chip.binary_read(2.5));  // boundary reads true
    CHECK_FALSE(chip.binary_read(2.4999));
    CHECK_THROWS_AS(chip.binary_read(6.5), MalfunctionError);
    CHECK_THROWS_AS(chip.binary_read(-1.5), MalfunctionError);
}

TEST_CASE("power threshold on the supply differential") {
    Chip chip;
    CHECK(chip.powered(5.0, 0.0));
    CHECK_FALSE(chip.powered(3.0, 0.0));
    CHECK_FALSE(chip.powered(5.0, 2.0));
    CHECK(chip.powered(4.0, 0.0));  // boundary reads powered
    CHECK_THROWS_AS(chip.powered(0.0, 5.0), MalfunctionError);
}

TEST_CASE("lookup table 1 polynomial") {
    Chip chip;
    CHECK(chip.lut1(0.0) == 7.0);
    CHECK(chip.lut1(1.0) == Approx(11.2).epsilon(1e-12));
    CHECK(chip.lut1(10.0) == Approx(1507.0).epsilon(1e-12));
    CHECK_THROWS_AS(chip.lut1(-0.5), MalfunctionError);
    CHECK_THROWS_AS(chip.lut1(10.5), MalfunctionError);
}

TEST_CASE("lookup table 2 damped sine") {
    Chip chip;
    CHECK(chip.lut2(0.0) == 0.0);
    CHECK(chip.lut2(M_PI / 2) == Approx(14.0 * std::exp(-M_PI)).epsilon(1e-12));
    CHECK(chip.lut2(1.0) == Approx(14.0 * std::sin(1.0) * std::exp(-2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(chip.lut2(10.0001), MalfunctionError);
}

TEST_CASE("mode priority encoding") {
    Chip chip;
    CHECK(chip.select_mode(true, true, false, false, false) == 1);
    CHECK(chip.select_mode(false, false, true, false, false) == 3);
    CHECK(chip.select_mode(false, false, false, false, false) == 0);
    CHECK(chip.select_mode(false, true, true, true, true) == 2);
}

TEST_CASE("query dispatches on the selected mode") {
    Chip chip;

    SECTION("mode 1 multiplies the two analog inputs") {
        auto x = enabled_input();
        x[4] = 5.0;
        x[9] = 2.0;
        x[10] = 3.0;
        CHECK(chip.query(x) == 6.0);
    }
    SECTION("mode 2 reads lookup table 1") {
        auto x = enabled_input();
        x[5] = 5.0;
        x[11] = 0.0;
        CHECK(chip.query(x) == 7.0);
    }
    SECTION("disabled input forces the idle output") {
        auto x = enabled_input();
        x[4] = 5.0;
        x[9] = 2.0;
        x[10] = 3.0;
        x[1] = 1.0;
        CHECK(chip.query(x) == 0.0);
    }
    SECTION("unpowered chip is idle") {
        auto x = enabled_input();
        x[0] = 3.0;
        x[5] = 5.0;
        x[11] = 4.0;
        CHECK(chip.query(x) == 0.0);
    }
    SECTION("mode 5 encodes pins 14..17 with pin 14 as MSB") {
        auto x = enabled_input();
        x[8] = 5.0;
        x[14] = 5.0;
        x[15] = 0.0;
        x[16] = 0.0;
        x[17] = 5.0;
        CHECK(chip.query(x) == 9.0);
    }
    SECTION("no mode selected is idle") {
        auto x = enabled_input();
        x[9] = 3.0;
        CHECK(chip.query(x) == 0.0);
    }
    SECTION("mode 4 averages the two lookup tables") {
        auto x = enabled_input();
        x[7] = 5.0;
        x[11] = 1.0;
        x[12] = 1.0;
        const double expected = (chip.lut1(1.0) + chip.lut2(1.0)) / 2.0;
        CHECK(chip.query(x) == expected);
    }
}

TEST_CASE("query is deterministic") {
    Chip chip;
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::array<double, 18> x{};
        for (int i = 0; i < 18; ++i) {
            const auto& r = chip.safe_ranges()[i];
            x[i] = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
        }
        x[3] = 0.0;  // keep the supply differential in its defined domain
        const double a = chip.query(x);
        const double b = chip.query(x);
        CHECK(a == b);  // bit-identical
    }
}

TEST_CASE("malfunction faults are counted and do not consume budget") {
    Chip chip;
    auto x = enabled_input();
    x[9] = 42.0;  // outside the analog safe range
    CHECK_THROWS_AS(chip.query(x), MalfunctionError);
    CHECK(chip.ledger().fault_count() == 1);
    CHECK(chip.ledger().queries_used() == 0);
}

TEST_CASE("budget accounting") {
    Chip chip(ChipSpec::builtin(), 2);
    auto x = enabled_input();
    CHECK(chip.ledger().remaining() == 2);
    chip.query(x);
    chip.query(x);
    CHECK(chip.ledger().remaining() == 0);
    CHECK_THROWS_AS(chip.query(x), BudgetExhaustedError);
    CHECK(chip.ledger().queries_used() == 2);

    Chip unlimited;
    CHECK_FALSE(unlimited.ledger().remaining().has_value());
}

TEST_CASE("mode 5 output is always an integer in [0, 15]") {
    Chip chip;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        auto x = enabled_input();
        x[8] = 5.0;
        for (int i = 14; i <= 17; ++i) x[i] = u(rng);
        const double y = chip.query(x);
        CHECK(y == std::floor(y));
        CHECK(y >= 0.0);
        CHECK(y <= 15.0);
    }
}

TEST_CASE("uniform sampling is heavily skewed towards the idle state") {
    // With GND pinned at 0 the gates pass independently with probability
    // 0.5 (enable in), 0.5 (enable out) and 0.2 (Vcc >= 4), so only 5% of
    // uniform random queries exercise a function; conditional on being
    // enabled the modes split geometrically 1/2, 1/4, ...
    Chip chip;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    const int n = 10000;
    int enabled = 0;
    std::array<int, 6> mode_counts{};  // [0] = enabled but no mode
    for (int trial = 0; trial < n; ++trial) {
        std::array<double, 18> x{};
        for (int i = 0; i < 18; ++i) {
            const auto& r = chip.safe_ranges()[i];
            x[i] = r.hi - (r.hi - r.lo) * u01(rng);
        }
        x[3] = 0.0;
        const bool on = (x[0] >= 4.0) && (x[1] >= 2.5) && (x[2] >= 2.5);
        if (!on) continue;
        ++enabled;
        int mode = 0;
        for (int p = 4; p <= 8; ++p) {
            if (x[p] >= 2.5) {
                mode = p - 3;
                break;
            }
        }
        ++mode_counts[mode];
    }

    CHECK(std::abs(enabled / double(n) - 0.05) < 0.03);
    const double share1 = mode_counts[1] / double(enabled);
    const double share2 = mode_counts[2] / double(enabled);
    const double share3 = mode_counts[3] / double(enabled);
    CHECK(std::abs(share1 - 0.5) < 0.03);
    CHECK(std::abs(share2 - 0.25) < 0.03);
    CHECK(std::abs(share3 - 0.125) < 0.03);
}

TEST_CASE("chip spec serialization round-trips") {
    const ChipSpec spec = ChipSpec::builtin();
    const auto j = chip_spec_to_json(spec);
    const ChipSpec back = chip_spec_from_json(j);
    CHECK(chip_spec_to_json(back) == j);
    CHECK(back.pins[1].name == "Enable Input");
    CHECK(back.pins[9].kind == PinKind::analog);
    CHECK(back.pins[9].safe_range.hi == 10.0);
}

TEST_CASE("chip spec validation rejects malformed pin tables") {
    ChipSpec spec = ChipSpec::builtin();
    spec.pins.pop_back();
    CHECK_THROWS(spec.validate());

    ChipSpec two_power = ChipSpec::builtin();
    two_power.pins[5].kind = PinKind::power;
    CHECK_THROWS(two_power.validate());

    ChipSpec bad_range = ChipSpec::builtin();
    bad_range.pins[7].safe_range = {3.0, 3.0};
    CHECK_THROWS(bad_range.validate());
}

TEST_CASE("ledger exports as JSON") {
    Chip chip(ChipSpec::builtin(), 1000);
    auto x = enabled_input();
    chip.query(x);
    const auto j = chip.ledger().to_json();
    CHECK(j.at("queries_used") == 1);
    CHECK(j.at("budget") == 1000);
    CHECK(j.at("fault_count") == 0);
}
