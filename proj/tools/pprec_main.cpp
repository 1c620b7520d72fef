#include "pprec/cli/cli.hpp"

int main(int argc, char** argv) { return pprec::cli::run(argc, argv); }
