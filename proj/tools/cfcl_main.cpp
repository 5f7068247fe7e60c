#include "cfcl/cli.hpp"

int main(int argc, char** argv) { return cfcl::cli::cli_main(argc, argv); }
