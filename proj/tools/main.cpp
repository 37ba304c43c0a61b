#include "cli.hpp"

int main(int argc, char** argv) { return xai::cli::run_cli(argc, argv); }
