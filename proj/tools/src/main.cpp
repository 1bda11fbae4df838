#include <iostream>
#include <string>
#include <vector>

#include "catgcn_cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return catgcn::cli::run(args, std::cout, std::cerr);
}
