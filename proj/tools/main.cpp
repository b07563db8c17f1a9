#include "rlscale/cli.hpp"

int main(int argc, char** argv) { return rlscale::cli::run(argc, argv); }
