// Writes the synthetic glyph corpus as IDX image/label pairs so every
// pipeline stage can run without external downloads:
//   ./build/tools/make_synth_idx OUT_DIR [train_per_class] [test_per_class] [seed]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "reffakd/synth.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr,
                 "usage: make_synth_idx OUT_DIR [train_per_class] [test_per_class] [seed]\n");
    return 1;
  }
  const std::string dir = argv[1];
  const int train_per_class = argc > 2 ? std::atoi(argv[2]) : 1000;
  const int test_per_class = argc > 3 ? std::atoi(argv[3]) : 200;
  const uint64_t seed = argc > 4 ? std::strtoull(argv[4], nullptr, 10) : 1234;

  try {
    reffakd::write_synth_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte",
                             train_per_class, seed);
    reffakd::write_synth_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte",
                             test_per_class, seed + 1);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  std::printf("wrote %d train and %d test images per class under %s\n", train_per_class,
              test_per_class, dir.c_str());
  return 0;
}
