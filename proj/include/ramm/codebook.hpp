#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ramm/document.hpp"

namespace ramm {

// Vector-quantized image tokenizer: k-means codebook over square pixel
// patches, L2 in byte space scaled to [0,1]. Centroids are snapped to the
// byte grid after fitting so detokenize/tokenize is an exact fixed point.
class Codebook {
 public:
  Codebook() = default;

  struct FitStats {
    std::vector<double> objective_per_iter;  // mean squared patch distance
  };

  static Codebook fit(const std::vector<Image>& images, int k, int patch_size,
                      int iters, uint64_t seed, FitStats* stats = nullptr);

  // Patch tokens in row-major patch order, values in [0, k).
  std::vector<int> tokenize(const Image& img) const;
  // Paints each patch with its centroid, rounded to bytes.
  Image detokenize(const std::vector<int>& codes, int image_size) const;

  int k() const { return static_cast<int>(centroids_.rows()); }
  int patch_size() const { return patch_size_; }
  int tokens_per_image(int image_size) const;
  uint64_t fit_seed() const { return fit_seed_; }
  const Eigen::MatrixXd& centroids() const { return centroids_; }

  // Test hook: build a codebook from explicit centroids (rows = codes,
  // values in [0,1] on the byte grid).
  static Codebook from_centroids(Eigen::MatrixXd centroids, int patch_size,
                                 uint64_t seed = 0);

  void save(const std::string& path) const;
  static Codebook load(const std::string& path);
  std::string dump_json() const;

 private:
  Eigen::MatrixXd centroids_;  // k x (patch_size^2 * 3), values in [0,1]
  int patch_size_ = 0;
  uint64_t fit_seed_ = 0;
};

// Flattens the row-major patch grid of an image into rows of
// (patch_size^2*3) values scaled to [0,1]. Throws if the patch grid does
// not tile the image exactly.
Eigen::MatrixXd image_patches(const Image& img, int patch_size);

}  // namespace ramm
