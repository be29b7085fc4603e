#include "smsat/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return smsat::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
