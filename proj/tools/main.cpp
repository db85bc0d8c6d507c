#include <string>
#include <vector>

#include "reffakd/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return reffakd::dispatch(args);
}
