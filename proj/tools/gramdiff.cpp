#include <iostream>

#include "gramdiff/cli.hpp"

int main(int argc, char** argv) { return gramdiff::run_cli(argc, argv, std::cout, std::cerr); }
