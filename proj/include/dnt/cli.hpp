#pragma once

// CLI entry point. Subcommands: simulate, train, bench, evaluate,
// simplify, explain. Exit codes: 0 success, 1 usage error, 2 victim
// fault, 3 budget exhausted.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dnt/chip.hpp"

namespace dnt {

inline int cli_main(int argc, char** argv) {
    CLI::App app{"Black-box functionality cloning with a regression tree over NALU networks"};
    app.require_subcommand(1);

    auto* simulate = app.add_subcommand("simulate", "Query the victim chip directly");
    (void)simulate;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    return 0;
}

}  // namespace dnt
