#include <iostream>
#include <string>
#include <vector>

#include "taskforest/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return taskforest::run_cli(args, std::cout, std::cerr);
}
