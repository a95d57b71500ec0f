#include <iostream>

#include "iclv/cli.hpp"

int main(int argc, char** argv) { return iclv::cli::run(argc, argv, std::cout, std::cerr); }
