#include <iostream>

#include "pt2i/cli.hpp"

int main(int argc, char** argv) { return pt2i::run_cli(argc, argv, std::cin, std::cout, std::cerr); }
