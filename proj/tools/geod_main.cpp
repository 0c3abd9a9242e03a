#include <vector>

#include "geod/cli.hpp"

int main(int argc, char** argv) {
  return geod::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
