#include <iostream>
#include <string>
#include <vector>

#include "bfq/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bfq::run_cli(args, std::cout, std::cerr);
}
