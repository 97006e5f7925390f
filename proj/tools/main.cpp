#include <iostream>
#include <string>
#include <vector>

#include "freegauss/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return freegauss::cli::run(args, std::cout, std::cerr);
}
