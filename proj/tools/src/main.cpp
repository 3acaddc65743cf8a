#include <iostream>

#include "emo/training.hpp"
#include "emo_cli/cli.hpp"

int main(int argc, char** argv) {
  emo::retain_large_allocations();
  return emo::cli::dispatch(argc, argv, std::cout, std::cerr);
}
