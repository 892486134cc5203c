#include <iostream>

#include "permkron/cli.hpp"

int main(int argc, char** argv) { return permkron::cli::run(argc, argv, std::cout, std::cerr); }
