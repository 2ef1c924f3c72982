#include "agelab_cli/cli.hpp"

int main(int argc, char** argv) { return agelab::cli::run(argc, argv); }
