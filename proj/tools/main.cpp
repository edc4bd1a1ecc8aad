#include <iostream>
#include <string>
#include <vector>

#include "spermflow/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return spermflow::cli::run(args, std::cout, std::cerr);
}
