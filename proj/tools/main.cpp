#include "kode/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return kode::cli::run_cli(argc, argv, std::cout, std::cerr); }
