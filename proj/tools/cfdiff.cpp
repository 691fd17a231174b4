#include <iostream>

#include "cfdiff/cli/commands.hpp"

int main(int argc, char** argv) { return cfdiff::cli::run_cli(argc, argv, std::cout, std::cerr); }
