#include <iostream>

#include "spectragen/cli/app.hpp"

int main(int argc, char** argv) { return spectragen::cli::run(argc, argv, std::cout, std::cerr); }
