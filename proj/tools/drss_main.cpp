#include <iostream>

#include "drss/cli.hpp"

int main(int argc, char** argv) { return drss::cli_main(argc, argv, std::cout, std::cerr); }
