#include <iostream>

#include "mgmpc/cli.hpp"

int main(int argc, char** argv) { return mgmpc::run_cli(argc, argv, std::cout, std::cerr); }
