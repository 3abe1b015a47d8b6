#include "ramm/codebook.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ramm/binary_io.hpp"
#include "ramm/rng.hpp"

namespace ramm {

namespace {

int nearest_centroid(const Eigen::MatrixXd& centroids,
                     const Eigen::RowVectorXd& p, double* dist_out = nullptr) {
  int best = 0;
  double best_d = (p - centroids.row(0)).squaredNorm();
  for (int c = 1; c < centroids.rows(); ++c) {
    double d = (p - centroids.row(c)).squaredNorm();
    if (d < best_d) {  // strict: ties keep the lowest id
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

}  // namespace

Eigen::MatrixXd image_patches(const Image& img, int patch_size) {
  if (patch_size <= 0 || img.width % patch_size != 0 ||
      img.height % patch_size != 0)
    throw std::invalid_argument(
        "image_patches: patch grid does not tile the image");
  const int gx = img.width / patch_size;
  const int gy = img.height / patch_size;
  const int dim = patch_size * patch_size * 3;
  Eigen::MatrixXd out(gx * gy, dim);
  for (int py = 0; py < gy; ++py) {
    for (int px = 0; px < gx; ++px) {
      int col = 0;
      for (int y = 0; y < patch_size; ++y) {
        const uint8_t* row = img.at(px * patch_size, py * patch_size + y);
        for (int i = 0; i < patch_size * 3; ++i)
          out(py * gx + px, col++) = row[i] / 255.0;
      }
    }
  }
  return out;
}

Codebook Codebook::fit(const std::vector<Image>& images, int k, int patch_size,
                       int iters, uint64_t seed, FitStats* stats) {
  if (k < 2) throw std::invalid_argument("Codebook::fit: k must be >= 2");
  if (iters < 1) throw std::invalid_argument("Codebook::fit: iters must be >= 1");
  if (images.empty()) throw std::invalid_argument("Codebook::fit: no images");

  // Deduplicate patches; k-means over weighted distinct patches is exact
  // and far cheaper on this corpus (backgrounds repeat heavily).
  std::map<std::vector<uint8_t>, int64_t> counts;
  const int dim = patch_size * patch_size * 3;
  for (const Image& img : images) {
    Eigen::MatrixXd patches = image_patches(img, patch_size);
    for (int r = 0; r < patches.rows(); ++r) {
      std::vector<uint8_t> key(dim);
      for (int c = 0; c < dim; ++c)
        key[c] = static_cast<uint8_t>(std::lround(patches(r, c) * 255.0));
      counts[key] += 1;
    }
  }
  const int m = static_cast<int>(counts.size());
  if (m < k)
    throw std::invalid_argument("Codebook::fit: only " + std::to_string(m) +
                                " distinct patches for k=" + std::to_string(k));

  Eigen::MatrixXd pts(m, dim);
  Eigen::VectorXd wts(m);
  double total_w = 0;
  {
    int r = 0;
    for (const auto& [key, count] : counts) {
      for (int c = 0; c < dim; ++c) pts(r, c) = key[c] / 255.0;
      wts(r) = static_cast<double>(count);
      total_w += wts(r);
      ++r;
    }
  }

  Rng rng(rng_mix(seed, 0xc0deb00c));
  Eigen::MatrixXd centroids(k, dim);

  // k-means++ style seeding with weights.
  auto weighted_pick = [&](const Eigen::VectorXd& mass) {
    double total = mass.sum();
    double u = rng.uniform_real() * total;
    double acc = 0;
    for (int i = 0; i < m; ++i) {
      acc += mass(i);
      if (u < acc) return i;
    }
    return m - 1;
  };
  centroids.row(0) = pts.row(weighted_pick(wts));
  Eigen::VectorXd d2(m);
  for (int i = 0; i < m; ++i)
    d2(i) = (pts.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::VectorXd mass = wts.cwiseProduct(d2);
    if (mass.sum() <= 0) {
      // All remaining mass is at existing centroids; pick any unused point.
      centroids.row(c) = pts.row(static_cast<int>(rng.below(m)));
    } else {
      centroids.row(c) = pts.row(weighted_pick(mass));
    }
    for (int i = 0; i < m; ++i)
      d2(i) = std::min(d2(i), (pts.row(i) - centroids.row(c)).squaredNorm());
  }

  // Lloyd iterations, fixed count, empty clusters re-seeded from the
  // farthest patch.
  std::vector<int> assign(m);
  for (int iter = 0; iter < iters; ++iter) {
    double objective = 0;
    for (int i = 0; i < m; ++i) {
      double d;
      assign[i] = nearest_centroid(centroids, pts.row(i), &d);
      objective += wts(i) * d;
      d2(i) = d;
    }
    if (stats) stats->objective_per_iter.push_back(objective / total_w);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < m; ++i) {
      sums.row(assign[i]) += wts(i) * pts.row(i);
      mass(assign[i]) += wts(i);
    }
    for (int c = 0; c < k; ++c) {
      if (mass(c) > 0) {
        centroids.row(c) = sums.row(c) / mass(c);
      } else {
        int farthest = 0;
        d2.maxCoeff(&farthest);
        centroids.row(c) = pts.row(farthest);
        d2(farthest) = 0;  // don't reuse the same patch for the next empty slot
      }
    }
  }

  // Snap to the byte grid: detokenize then tokenize becomes a fixed point
  // whenever the snapped centroids are distinct.
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < dim; ++j)
      centroids(c, j) = std::lround(centroids(c, j) * 255.0) / 255.0;

  Codebook cb;
  cb.centroids_ = std::move(centroids);
  cb.patch_size_ = patch_size;
  cb.fit_seed_ = seed;
  return cb;
}

Codebook Codebook::from_centroids(Eigen::MatrixXd centroids, int patch_size,
                                  uint64_t seed) {
  if (centroids.rows() < 2)
    throw std::invalid_argument("Codebook::from_centroids: k must be >= 2");
  if (centroids.cols() != patch_size * patch_size * 3)
    throw std::invalid_argument("Codebook::from_centroids: bad dimension");
  Codebook cb;
  cb.centroids_ = std::move(centroids);
  cb.patch_size_ = patch_size;
  cb.fit_seed_ = seed;
  return cb;
}

int Codebook::tokens_per_image(int image_size) const {
  if (patch_size_ <= 0 || image_size % patch_size_ != 0)
    throw std::invalid_argument("tokens_per_image: patch grid mismatch");
  int g = image_size / patch_size_;
  return g * g;
}

std::vector<int> Codebook::tokenize(const Image& img) const {
  Eigen::MatrixXd patches = image_patches(img, patch_size_);
  std::vector<int> codes(patches.rows());
  for (int r = 0; r < patches.rows(); ++r)
    codes[r] = nearest_centroid(centroids_, patches.row(r));
  return codes;
}

Image Codebook::detokenize(const std::vector<int>& codes,
                           int image_size) const {
  if (static_cast<int>(codes.size()) != tokens_per_image(image_size))
    throw std::invalid_argument("detokenize: wrong number of codes");
  const int g = image_size / patch_size_;
  Image img;
  img.width = img.height = image_size;
  img.rgb.resize(static_cast<size_t>(image_size) * image_size * 3);
  for (int pi = 0; pi < static_cast<int>(codes.size()); ++pi) {
    int code = codes[pi];
    if (code < 0 || code >= k())
      throw std::invalid_argument("detokenize: code " + std::to_string(code) +
                                  " out of range for k=" + std::to_string(k()));
    const int px = pi % g, py = pi / g;
    int col = 0;
    for (int y = 0; y < patch_size_; ++y) {
      uint8_t* row = img.at(px * patch_size_, py * patch_size_ + y);
      for (int i = 0; i < patch_size_ * 3; ++i) {
        double v = centroids_(code, col++) * 255.0;
        row[i] = static_cast<uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
      }
    }
  }
  return img;
}

namespace {
constexpr char kCodebookMagic[4] = {'R', 'M', 'C', 'B'};
}

void Codebook::save(const std::string& path) const {
  BinWriter w(path);
  write_magic(w, kCodebookMagic, 1);
  w.u64(static_cast<uint64_t>(k()));
  w.u64(static_cast<uint64_t>(patch_size_));
  w.u64(fit_seed_);
  w.mat(centroids_);
  w.close();
}

Codebook Codebook::load(const std::string& path) {
  BinReader r(path);
  expect_magic(r, kCodebookMagic, 1, "codebook");
  Codebook cb;
  uint64_t k = r.u64();
  cb.patch_size_ = static_cast<int>(r.u64());
  cb.fit_seed_ = r.u64();
  cb.centroids_ = r.mat();
  if (cb.centroids_.rows() != static_cast<Eigen::Index>(k))
    throw std::runtime_error("codebook: header/matrix row mismatch");
  return cb;
}

std::string Codebook::dump_json() const {
  nlohmann::json j;
  j["k"] = k();
  j["patch_size"] = patch_size_;
  j["fit_seed"] = fit_seed_;
  std::vector<std::vector<double>> rows;
  for (int c = 0; c < k(); ++c) {
    std::vector<double> row(centroids_.cols());
    for (int i = 0; i < centroids_.cols(); ++i) row[i] = centroids_(c, i);
    rows.push_back(std::move(row));
  }
  j["centroids"] = rows;
  return j.dump();
}

}  // namespace ramm
