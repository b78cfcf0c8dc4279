#include "cmekit/cli.hpp"

int main(int argc, char** argv) { return cmekit::cli_main(argc, argv); }
