#include "otbb/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return otbb::run_cli(argc, argv, std::cout, std::cerr); }
