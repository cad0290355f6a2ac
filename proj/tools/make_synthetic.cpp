// Writes the two-class CIFAR-format stand-in dataset used when real CIFAR-10
// batches are not available.
#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "smcdo/smcdo.h"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic two-class dataset in CIFAR-10 binary format"};
  std::string path;
  std::size_t count = 2000;
  std::uint64_t seed = 1;
  app.add_option("path", path, "Output file")->required();
  app.add_option("--count", count, "Number of images")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);
  if (smcdo_write_synthetic_cifar(path.c_str(), count, seed) != SMCDO_OK) {
    std::fprintf(stderr, "error: %s\n", smcdo_last_error());
    return 3;
  }
  return 0;
}
