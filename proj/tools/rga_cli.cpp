#include <iostream>

#include "rga/commands.hpp"

int main(int argc, char** argv) { return rga::cli::run(argc, argv, std::cout, std::cerr); }
