#include <iostream>

#include "hkrect/cli.hpp"

int main(int argc, char** argv) { return hkrect::cli::run(argc, argv, std::cout, std::cerr); }
