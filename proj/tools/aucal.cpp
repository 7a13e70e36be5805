#include <iostream>

#include "aucal/cli.hpp"

int main(int argc, char** argv) { return aucal::cli::run(argc, argv, std::cout, std::cerr); }
