#include <iostream>

#include "saf/cli.hpp"

int main(int argc, char** argv) { return saf::run_cli(argc, argv, std::cout, std::cerr); }
