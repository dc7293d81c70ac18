#pragma once

// Hand-rolled random generators for property tests.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <Eigen/Dense>

#include "varscale/encoder.hpp"
#include "varscale/episodic_data.hpp"
#include "varscale/rng.hpp"
#include "varscale/trainer.hpp"

namespace varscale::testing {

struct Gen {
  Rng rng;
  explicit Gen(std::uint64_t seed) : rng(seed, 0x7e57) {}

  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
  }
  double real(double lo, double hi) { return rng.uniform(lo, hi); }
  bool coin(double p = 0.5) { return rng.uniform(0.0, 1.0) < p; }
  Eigen::VectorXd vec(Eigen::Index n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
  }
  Eigen::MatrixXd mat(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
    return m;
  }
  // Random labels with every class in [0, way) present at least once.
  std::vector<int> labels(int n, int way) {
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) l[i] = i < way ? i : integer(0, way - 1);
    return l;
  }
  EncoderParams encoder(int input_dim, int embed_dim, bool normalize) {
    std::vector<Eigen::Index> hidden;
    if (coin(0.7)) hidden.push_back(integer(3, 8));
    EncoderParams p = make_encoder(input_dim, hidden, embed_dim, normalize, rng);
    for (auto& layer : p.layers) layer.bias = vec(layer.bias.size(), 0.3);
    return p;
  }
};

inline std::string temp_dir(const std::string& name) {
  const char* base = std::getenv("VARSCALE_TEST_TMP");
  std::filesystem::path p = base ? base : std::filesystem::temp_directory_path() / "varscale_tests";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace varscale::testing

#include "varscale/config.hpp"
#include "varscale/model.hpp"

namespace varscale::testing {

inline TrainConfig small_config(Method method, std::uint64_t seed, int episodes = 300) {
  nlohmann::json doc = {{"method", std::string(to_string(method))},
                        {"seed", seed},
                        {"budget", {{"episodes", episodes}}},
                        {"eval", {{"val_every", 100}, {"val_episodes", 20}, {"test_episodes", 100}}}};
  return config_from_json(doc);
}

// Every trainable value of the model in view order.
inline std::vector<double> flatten(ModelState model) {
  std::vector<double> out;
  for (const auto& v : model_views(model)) out.insert(out.end(), v.data.begin(), v.data.end());
  return out;
}

}  // namespace varscale::testing
