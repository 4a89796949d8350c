// Writes the three-class synthetic pattern dataset (disk / bars / checker) as PNGs
// in the root/{train,test}/<class>/ layout.

#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "cxr/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic pattern dataset"};
  std::string root;
  std::vector<std::size_t> train{200, 200, 200}, test{50, 50, 50};
  cxr::SyntheticOptions options;
  app.add_option("root", root, "output directory")->required();
  app.add_option("--train", train, "training images per class (disk bars checker)")->expected(3);
  app.add_option("--test", test, "test images per class")->expected(3);
  app.add_option("--size", options.image_size, "edge length in pixels")->capture_default_str();
  app.add_option("--noise", options.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  app.add_option("--seed", options.seed, "generator seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    cxr::write_synthetic_dataset(root, train, test, options);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
