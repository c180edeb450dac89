#include "dvgnn/cli.hpp"

int main(int argc, char** argv) {
  return dvgnn::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
