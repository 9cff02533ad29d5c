#include <iostream>

#include "raeid/cli.hpp"

int main(int argc, char** argv) { return raeid::cli::run(argc, argv, std::cout, std::cerr); }
