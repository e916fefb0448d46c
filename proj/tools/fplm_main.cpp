#include "fplm/cli.hpp"

int main(int argc, char** argv) { return fplm::cli::main(argc, argv); }
