#include "mvldp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mvldp::cli::run(argc, argv, std::cout, std::cerr); }
