#include <iostream>

#include "varscale/commands.hpp"

int main(int argc, char** argv) {
  return varscale::cli::run(argc, argv, std::cout, std::cerr);
}
