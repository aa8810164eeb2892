#include "pcrobust/core_data.hpp"

#include "pcrobust/error.hpp"
#include "pcrobust/rng.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace pcr {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kSchema: return "schema";
  }
  return "unknown";
}

bool operator==(const PointCloud& a, const PointCloud& b) {
  return a.label == b.label && a.points.rows() == b.points.rows() &&
         a.points == b.points;
}

namespace {

using Vec3 = Eigen::RowVector3d;

constexpr double kPi = std::numbers::pi;

Vec3 sample_sphere(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

Vec3 sample_cube(Rng& rng) {
  const auto face = rng.index(6);
  const double a = rng.uniform(-1.0, 1.0);
  const double b = rng.uniform(-1.0, 1.0);
  const double s = (face % 2 == 0) ? 1.0 : -1.0;
  switch (face / 2) {
    case 0: return {s, a, b};
    case 1: return {a, s, b};
    default: return {a, b, s};
  }
}

// Radius 1, z in [-1, 1]; lateral area 4*pi vs caps 2*pi.
Vec3 sample_cylinder(Rng& rng) {
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  if (rng.uniform() < 2.0 / 3.0) {
    return {std::cos(phi), std::sin(phi), rng.uniform(-1.0, 1.0)};
  }
  const double r = std::sqrt(rng.uniform());
  const double z = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Apex at z = 1, unit base at z = -1; lateral area pi*sqrt(5) vs base pi.
Vec3 sample_cone(Rng& rng) {
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double lateral = std::sqrt(5.0);
  if (rng.uniform() < lateral / (lateral + 1.0)) {
    const double r = std::sqrt(rng.uniform());
    return {r * std::cos(phi), r * std::sin(phi), 1.0 - 2.0 * r};
  }
  const double r = std::sqrt(rng.uniform());
  return {r * std::cos(phi), r * std::sin(phi), -1.0};
}

Vec3 sample_torus(Rng& rng) {
  constexpr double kMajor = 1.0;
  constexpr double kMinor = 0.35;
  double theta = 0.0;
  do {
    theta = rng.uniform(0.0, 2.0 * kPi);
  } while (rng.uniform() * (kMajor + kMinor) > kMajor + kMinor * std::cos(theta));
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double ring = kMajor + kMinor * std::cos(theta);
  return {ring * std::cos(phi), ring * std::sin(phi), kMinor * std::sin(theta)};
}

using Sampler = Vec3 (*)(Rng&);

struct Family {
  const char* name;
  Sampler sampler;
};

constexpr std::array<Family, 5> kFamilies{{
    {"sphere", sample_sphere},
    {"cube", sample_cube},
    {"cylinder", sample_cylinder},
    {"cone", sample_cone},
    {"torus", sample_torus},
}};

Sampler find_family(const std::string& name) {
  for (const auto& f : kFamilies) {
    if (name == f.name) return f.sampler;
  }
  throw Error(ErrorCode::kConfig, "unknown shape family '" + name + "'");
}

}  // namespace

const std::vector<std::string>& known_shape_families() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : kFamilies) out.emplace_back(f.name);
    return out;
  }();
  return names;
}

PointCloud normalize(const PointCloud& cloud) {
  if (cloud.points.rows() == 0) {
    throw Error(ErrorCode::kDegenerate, "cannot normalize an empty cloud");
  }
  if (!cloud.points.allFinite()) {
    throw Error(ErrorCode::kDegenerate, "cloud has non-finite coordinates");
  }
  PointCloud out{cloud.points, cloud.label};
  const Vec3 centroid = out.points.colwise().mean();
  out.points.rowwise() -= centroid;
  const double radius = out.points.rowwise().norm().maxCoeff();
  if (!(radius > 1e-12)) {
    throw Error(ErrorCode::kDegenerate, "all points coincide; cannot normalize");
  }
  out.points /= radius;
  return out;
}

void validate_cloud(const PointCloud& cloud, bool require_normalized) {
  if (cloud.size() < kMinPoints) {
    throw Error(ErrorCode::kConfig, "cloud has " + std::to_string(cloud.size()) +
                                        " points, need at least " +
                                        std::to_string(kMinPoints));
  }
  if (!cloud.points.allFinite()) {
    throw Error(ErrorCode::kConfig, "cloud has non-finite coordinates");
  }
  if (require_normalized) {
    const double c = cloud.points.colwise().mean().norm();
    const double r = cloud.points.rowwise().norm().maxCoeff();
    if (c > 1e-6 || std::abs(r - 1.0) > 1e-6) {
      throw Error(ErrorCode::kConfig, "cloud is not normalized");
    }
  }
}

std::vector<PointCloud> generate_dataset(const SyntheticDatasetSpec& spec) {
  if (spec.classes.empty()) throw Error(ErrorCode::kConfig, "classes is empty");
  if (spec.points_per_cloud < kMinPoints) {
    throw Error(ErrorCode::kConfig, "points_per_cloud must be >= " +
                                        std::to_string(kMinPoints));
  }
  if (spec.clouds_per_class <= 0) {
    throw Error(ErrorCode::kConfig, "clouds_per_class must be positive");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw Error(ErrorCode::kConfig, "noise_sigma must be finite and >= 0");
  }
  std::vector<Sampler> samplers;
  for (const auto& name : spec.classes) samplers.push_back(find_family(name));

  std::vector<PointCloud> out;
  out.reserve(spec.classes.size() * static_cast<std::size_t>(spec.clouds_per_class));
  for (std::size_t c = 0; c < samplers.size(); ++c) {
    for (int k = 0; k < spec.clouds_per_class; ++k) {
      Rng rng(mix_seed(mix_seed(spec.seed, c), static_cast<std::uint64_t>(k)));
      PointCloud cloud;
      cloud.label = static_cast<int>(c);
      cloud.points.resize(spec.points_per_cloud, 3);
      for (int i = 0; i < spec.points_per_cloud; ++i) {
        Vec3 p = samplers[c](rng);
        if (spec.noise_sigma > 0.0) {
          p += spec.noise_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
        }
        cloud.points.row(i) = p;
      }
      out.push_back(normalize(cloud));
    }
  }
  return out;
}

// --- serialization ----------------------------------------------------------

namespace {

void append_double(std::string& s, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  s.append(buf, end);
}

std::size_t common_size(const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) return 0;
  const auto n = static_cast<std::size_t>(clouds.front().points.rows());
  for (const auto& c : clouds) {
    if (static_cast<std::size_t>(c.points.rows()) != n) {
      throw Error(ErrorCode::kConfig,
                  "dataset files require every cloud to have the same size");
    }
  }
  return n;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::kIo, "write to '" + path + "' failed");
}

constexpr char kBinaryMagic[] = "pcsetb1\n";

class TextCursor {
 public:
  explicit TextCursor(const std::string& s) : s_(s) {}

  std::size_t pos() const { return pos_; }

  void skip_spaces() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  void expect_newline() {
    skip_spaces();
    if (pos_ < s_.size() && s_[pos_] == '\r') ++pos_;
    if (pos_ >= s_.size()) throw ParseError(pos_, "unexpected end of file");
    if (s_[pos_] != '\n') throw ParseError(pos_, "expected end of line");
    ++pos_;
  }

  void expect_word(std::string_view w) {
    skip_spaces();
    if (s_.compare(pos_, w.size(), w) != 0) {
      throw ParseError(pos_, "expected '" + std::string(w) + "'");
    }
    pos_ += w.size();
  }

  template <class T>
  T number(const char* what) {
    skip_spaces();
    if (pos_ >= s_.size()) {
      throw ParseError(pos_, std::string("unexpected end of file reading ") + what);
    }
    T v{};
    const char* begin = s_.data() + pos_;
    const char* end = s_.data() + s_.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr == begin) {
      throw ParseError(pos_, std::string("malformed ") + what);
    }
    pos_ += static_cast<std::size_t>(ptr - begin);
    return v;
  }

  void expect_end() {
    while (pos_ < s_.size() &&
           (s_[pos_] == ' ' || s_[pos_] == '\n' || s_[pos_] == '\r' || s_[pos_] == '\t')) {
      ++pos_;
    }
    if (pos_ != s_.size()) throw ParseError(pos_, "trailing data after last cloud");
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

LoadedDataset parse_text(const std::string& bytes) {
  TextCursor cur(bytes);
  cur.expect_word("pcset");
  cur.expect_word("v1");
  const auto count = cur.number<long long>("cloud count");
  const auto n = cur.number<long long>("point count");
  const auto c = cur.number<long long>("class count");
  if (count < 0 || n < 0 || c < 0) throw ParseError(0, "negative header field");
  if (count > 0 && n < kMinPoints) throw ParseError(0, "point count below minimum");
  cur.expect_newline();
  LoadedDataset out;
  out.num_classes = static_cast<int>(c);
  out.clouds.reserve(static_cast<std::size_t>(count));
  for (long long k = 0; k < count; ++k) {
    PointCloud cloud;
    const auto label_pos = cur.pos();
    cloud.label = cur.number<int>("label");
    if (cloud.label < 0 || cloud.label >= out.num_classes) {
      throw ParseError(label_pos, "label out of range");
    }
    cur.expect_newline();
    cloud.points.resize(n, 3);
    for (long long i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) cloud.points(i, d) = cur.number<double>("coordinate");
      cur.expect_newline();
    }
    out.clouds.push_back(std::move(cloud));
  }
  cur.expect_end();
  return out;
}

template <class T>
T read_le(const std::string& bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw ParseError(pos, "truncated binary dataset");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

LoadedDataset parse_binary(const std::string& bytes) {
  std::size_t pos = sizeof(kBinaryMagic) - 1;
  const auto count = read_le<std::uint64_t>(bytes, pos);
  const auto n = read_le<std::uint64_t>(bytes, pos);
  const auto c = read_le<std::uint64_t>(bytes, pos);
  LoadedDataset out;
  out.num_classes = static_cast<int>(c);
  if (count > 0 && n < static_cast<std::uint64_t>(kMinPoints)) {
    throw ParseError(8, "point count below minimum");
  }
  const std::uint64_t per_cloud = 4 + n * 3 * 8;
  if (count > 0 && (bytes.size() - pos) / per_cloud < count) {
    throw ParseError(bytes.size(), "truncated binary dataset");
  }
  for (std::uint64_t k = 0; k < count; ++k) {
    PointCloud cloud;
    const auto label_pos = pos;
    cloud.label = read_le<std::int32_t>(bytes, pos);
    if (cloud.label < 0 || cloud.label >= out.num_classes) {
      throw ParseError(label_pos, "label out of range");
    }
    cloud.points.resize(static_cast<Eigen::Index>(n), 3);
    for (std::uint64_t i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) cloud.points(i, d) = read_le<double>(bytes, pos);
    }
    out.clouds.push_back(std::move(cloud));
  }
  if (pos != bytes.size()) throw ParseError(pos, "trailing data after last cloud");
  return out;
}

}  // namespace

std::string format_dataset(const std::vector<PointCloud>& clouds, int num_classes) {
  const auto n = common_size(clouds);
  std::string s = "pcset v1 " + std::to_string(clouds.size()) + " " +
                  std::to_string(n) + " " + std::to_string(num_classes) + "\n";
  for (const auto& cloud : clouds) {
    s += std::to_string(cloud.label);
    s += '\n';
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
      for (int d = 0; d < 3; ++d) {
        if (d) s += ' ';
        append_double(s, cloud.points(i, d));
      }
      s += '\n';
    }
  }
  return s;
}

void save_dataset(const std::string& path, const std::vector<PointCloud>& clouds,
                  int num_classes) {
  write_file(path, format_dataset(clouds, num_classes));
}

void save_dataset_binary(const std::string& path,
                         const std::vector<PointCloud>& clouds, int num_classes) {
  const std::uint64_t n = common_size(clouds);
  std::string s(kBinaryMagic, sizeof(kBinaryMagic) - 1);
  auto put = [&s](const auto& v) {
    s.append(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put(static_cast<std::uint64_t>(clouds.size()));
  put(n);
  put(static_cast<std::uint64_t>(num_classes));
  for (const auto& cloud : clouds) {
    put(static_cast<std::int32_t>(cloud.label));
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
      for (int d = 0; d < 3; ++d) put(cloud.points(i, d));
    }
  }
  write_file(path, s);
}

LoadedDataset parse_dataset(const std::string& bytes) {
  if (bytes.compare(0, sizeof(kBinaryMagic) - 1, kBinaryMagic) == 0) {
    return parse_binary(bytes);
  }
  return parse_text(bytes);
}

LoadedDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_dataset(ss.str());
}

}  // namespace pcr
