#include "cli_commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return vslam::cli::cli_main(argc, argv, std::cout, std::cerr); }
