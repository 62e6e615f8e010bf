#include "mphase/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return mphase::cli::run(argc, argv, std::cout, std::cerr);
}
