#include "crossloc/cli.hpp"

int main(int argc, char** argv) { return crossloc::run_cli(argc, argv); }
