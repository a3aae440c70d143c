#include <iostream>

#include "moldkit/cli.hpp"

int main(int argc, char** argv) {
  return moldkit::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
