// CLI entry point; all logic lives in run_cli so tests can drive it directly.
#include <string>
#include <vector>

#include "ractd/harness.hpp"

int main(int argc, char** argv) {
  return ractd::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
