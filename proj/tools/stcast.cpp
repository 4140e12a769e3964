#include <string>
#include <vector>

#include "stcast/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stcast::cli::run(args);
}
