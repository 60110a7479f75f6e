#include <iostream>

#include "helix/cli/commands.hpp"

int main(int argc, char** argv) { return helix::cli::run_command(argc, argv, std::cout, std::cerr); }
