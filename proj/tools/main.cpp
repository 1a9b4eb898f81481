#include <iostream>

#include "ssa/cli.hpp"

int main(int argc, char** argv) { return ssa::run_cli(argc, argv, std::cout, std::cerr); }
