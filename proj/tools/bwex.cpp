#include <iostream>

#include "bwex/cli/app.hpp"

int main(int argc, char** argv) { return bwex::run_cli(argc, argv, std::cout, std::cerr); }
