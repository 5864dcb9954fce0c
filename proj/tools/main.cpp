#include <iostream>

#include "sacv/cli.hpp"

int main(int argc, char** argv) { return sacv::run_cli(argc, argv, std::cout, std::cerr); }
