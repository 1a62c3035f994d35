#include <iostream>

#include "sgan/cli.hpp"

int main(int argc, char** argv) {
  return sgan::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
