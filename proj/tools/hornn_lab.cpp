#include <iostream>
#include <string>
#include <vector>

#include "hornn/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hornn::run_cli(args, std::cout, std::cerr);
}
