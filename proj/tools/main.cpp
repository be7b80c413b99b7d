#include <iostream>
#include <string>
#include <vector>

#include "slab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return slab::cli::run(args, std::cout, std::cerr);
}
