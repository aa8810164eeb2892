#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace pcr {

/// N x 3 coordinates, one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr int kMinPoints = 8;

struct PointCloud {
  Points points;
  int label = 0;

  int size() const { return static_cast<int>(points.rows()); }
};

bool operator==(const PointCloud& a, const PointCloud& b);

struct SyntheticDatasetSpec {
  std::vector<std::string> classes{"sphere", "cube", "cylinder"};
  int points_per_cloud = 256;
  int clouds_per_class = 100;
  double noise_sigma = 0.01;
  std::uint64_t seed = 7;
};

/// Shape families understood by generate_dataset.
const std::vector<std::string>& known_shape_families();

/// Centroid to origin, max norm to 1. Throws kDegenerate when every point
/// coincides.
PointCloud normalize(const PointCloud& cloud);

std::vector<PointCloud> generate_dataset(const SyntheticDatasetSpec& spec);

/// Checks the PointCloud invariants (size, finiteness, optionally
/// normalization) and throws kConfig naming the offending property.
void validate_cloud(const PointCloud& cloud, bool require_normalized);

// Dataset files. The text form is
//   pcset v1 <num_clouds> <N> <C>
//   <label>
//   <x> <y> <z>      (N lines)
//   ...
// Coordinates are written with 17 significant digits so load(save(D)) == D.
// The binary form starts with the magic "pcsetb1\n" followed by
// little-endian u64 num_clouds, N, C and per cloud an i32 label and N*3 f64.
void save_dataset(const std::string& path, const std::vector<PointCloud>& clouds,
                  int num_classes);
void save_dataset_binary(const std::string& path,
                         const std::vector<PointCloud>& clouds, int num_classes);

struct LoadedDataset {
  std::vector<PointCloud> clouds;
  int num_classes = 0;
};

/// Accepts either form; errors carry the byte offset of the failure.
LoadedDataset load_dataset(const std::string& path);

std::string format_dataset(const std::vector<PointCloud>& clouds, int num_classes);
LoadedDataset parse_dataset(const std::string& bytes);

}  // namespace pcr
