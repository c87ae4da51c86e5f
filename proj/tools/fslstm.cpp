#include <iostream>

#include "fslstm/cli/cli.hpp"

int main(int argc, char** argv) { return fslstm::cli::run(argc, argv, std::cout, std::cerr); }
