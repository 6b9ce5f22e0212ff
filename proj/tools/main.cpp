#include "polydes/cli.hpp"

int main(int argc, char** argv) { return polydes::cli::run_cli(argc, argv); }
