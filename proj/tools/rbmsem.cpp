#include <iostream>

#include "rbmsem/cli.hpp"

int main(int argc, char** argv) { return rbmsem::run_cli(argc, argv, std::cout, std::cerr); }
