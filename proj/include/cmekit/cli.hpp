#pragma once
// Command-line entry point; filled out with subcommands as modules land.

#include <cstdio>

namespace cmekit {

inline int cli_main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::fprintf(stderr, "cmekit: not yet wired up\n");
    return 1;
}

}  // namespace cmekit
