#include <iostream>
#include <string>
#include <vector>

#include "acort/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return acort::run_cli(args, std::cout, std::cerr);
}
