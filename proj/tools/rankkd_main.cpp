#include <iostream>

#include "rankkd/cli.hpp"

int main(int argc, char** argv) { return rankkd::run_cli(argc, argv, std::cout, std::cerr); }
