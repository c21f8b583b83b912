#include <iostream>

#include "koopctl/cli.hpp"

int main(int argc, char** argv) {
  return koopctl::cli::run_cli(argc, argv, std::cout, std::cerr);
}
