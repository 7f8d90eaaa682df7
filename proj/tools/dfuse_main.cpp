#include <span>
#include <string>
#include <vector>

#include "dfuse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dfuse::cli_dispatch(args);
}
