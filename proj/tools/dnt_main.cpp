// Command-line front end; subcommands are wired up in cli.hpp.

#include "dnt/cli.hpp"

int main(int argc, char** argv) { return dnt::cli_main(argc, argv); }
