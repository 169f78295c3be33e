#include <iostream>

#include "slicebf/cli.hpp"

int main(int argc, char** argv) { return slicebf::run_cli(argc, argv, std::cout, std::cerr); }
