#include <iostream>

#include "transmod/cli.hpp"

int main(int argc, char** argv) { return transmod::run_cli(argc, argv, std::cout, std::cerr); }
