#include "sgjmap/cli.hpp"

int main(int argc, char** argv) { return sgjmap::cli::run(argc, argv); }
