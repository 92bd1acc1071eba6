#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return viewfield::cli::run(argc, argv, std::cout, std::cerr); }
