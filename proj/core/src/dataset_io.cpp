#include "egunet/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "egunet/errors.hpp"

namespace egu {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian; big-endian hosts are unsupported");

namespace io_detail {

std::string read_header_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": missing header line");
  return line;
}

void write_doubles(std::ostream& out, const double* data, std::int64_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * static_cast<std::int64_t>(sizeof(double))));
}

void read_doubles(std::istream& in, double* data, std::int64_t count, const std::string& path) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * static_cast<std::int64_t>(sizeof(double))));
  if (in.gcount() != static_cast<std::streamsize>(count * static_cast<std::int64_t>(sizeof(double)))) {
    throw IoError(path + ": payload truncated (wanted " + std::to_string(count) + " float64)");
  }
}

void expect_eof(std::istream& in, const std::string& path) {
  char extra;
  if (in.read(&extra, 1), in.gcount() != 0) {
    throw IoError(path + ": trailing bytes after the declared payload");
  }
}

}  // namespace io_detail

namespace {

json base_header(const char* kind, const DatasetMeta& meta) {
  json j;
  j["magic"] = "HSUX";
  j["version"] = 1;
  j["kind"] = kind;
  j["dtype"] = "f64le";
  if (meta.seed) j["seed"] = *meta.seed;
  if (!meta.provenance.empty()) j["provenance"] = meta.provenance;
  return j;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  return in;
}

json parse_header(const std::string& line, const std::string& path, const char* kind) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(path + ": header is not valid JSON (" + e.what() + ")");
  }
  if (j.value("magic", "") != "HSUX") throw IoError(path + ": bad magic, not a dataset file");
  if (j.value("version", 0) != 1) {
    throw IoError(path + ": unsupported version " + std::to_string(j.value("version", 0)));
  }
  if (j.value("kind", "") != kind) {
    throw IoError(path + ": kind is '" + j.value("kind", "") + "', expected '" + kind + "'");
  }
  if (j.value("dtype", "") != "f64le") throw IoError(path + ": unsupported dtype");
  return j;
}

int header_dim(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw IoError(path + ": header misses integer field '" + key + "'");
  }
  int v = j[key].get<int>();
  if (v < 1) throw IoError(path + ": field '" + key + "' must be positive");
  return v;
}

void fill_meta_out(const json& j, DatasetInfo& info) {
  if (j.contains("seed")) info.seed = j["seed"].get<std::uint64_t>();
  info.provenance = j.value("provenance", "");
}

}  // namespace

void write_cube(const std::string& path, const HsiCube& cube, const DatasetMeta& meta) {
  cube.validate();
  json j = base_header("cube", meta);
  j["height"] = cube.height;
  j["width"] = cube.width;
  j["bands"] = cube.bands;
  if (!cube.wavelengths.empty()) j["wavelengths"] = cube.wavelengths;
  auto out = open_out(path);
  out << j.dump() << "\n";
  io_detail::write_doubles(out, cube.data.data(), cube.data.size());
  if (!out) throw IoError(path + ": write failed");
}

HsiCube read_cube(const std::string& path) {
  auto in = open_in(path);
  json j = parse_header(io_detail::read_header_line(in, path), path, "cube");
  HsiCube cube(header_dim(j, "height", path), header_dim(j, "width", path),
               header_dim(j, "bands", path));
  if (j.contains("wavelengths")) cube.wavelengths = j["wavelengths"].get<std::vector<double>>();
  io_detail::read_doubles(in, cube.data.data(), cube.data.size(), path);
  io_detail::expect_eof(in, path);
  cube.validate();
  return cube;
}

void write_abundance(const std::string& path, const AbundanceMap& map, const DatasetMeta& meta) {
  if (map.height < 1 || map.width < 1 || map.classes < 1) {
    throw DimError("write_abundance: extents must be positive");
  }
  map.data.check_finite("write_abundance");
  json j = base_header("abundance", meta);
  j["height"] = map.height;
  j["width"] = map.width;
  j["classes"] = map.classes;
  auto out = open_out(path);
  out << j.dump() << "\n";
  io_detail::write_doubles(out, map.data.data(), map.data.size());
  if (!out) throw IoError(path + ": write failed");
}

AbundanceMap read_abundance(const std::string& path) {
  auto in = open_in(path);
  json j = parse_header(io_detail::read_header_line(in, path), path, "abundance");
  AbundanceMap map(header_dim(j, "height", path), header_dim(j, "width", path),
                   header_dim(j, "classes", path));
  io_detail::read_doubles(in, map.data.data(), map.data.size(), path);
  io_detail::expect_eof(in, path);
  map.data.check_finite(path.c_str());
  return map;
}

void write_endmembers(const std::string& path, const EndmemberMatrix& endmembers,
                      const DatasetMeta& meta) {
  endmembers.validate();
  json j = base_header("endmembers", meta);
  j["bands"] = endmembers.bands;
  j["classes"] = endmembers.classes;
  auto out = open_out(path);
  out << j.dump() << "\n";
  // Row-major: band rows, class columns.
  std::vector<double> buf(static_cast<std::size_t>(endmembers.bands) *
                          static_cast<std::size_t>(endmembers.classes));
  for (int b = 0; b < endmembers.bands; ++b) {
    for (int c = 0; c < endmembers.classes; ++c) {
      buf[static_cast<std::size_t>(b) * endmembers.classes + c] = endmembers.m(b, c);
    }
  }
  io_detail::write_doubles(out, buf.data(), static_cast<std::int64_t>(buf.size()));
  if (!out) throw IoError(path + ": write failed");
}

EndmemberMatrix read_endmembers(const std::string& path) {
  auto in = open_in(path);
  json j = parse_header(io_detail::read_header_line(in, path), path, "endmembers");
  int bands = header_dim(j, "bands", path), classes = header_dim(j, "classes", path);
  std::vector<double> buf(static_cast<std::size_t>(bands) * classes);
  io_detail::read_doubles(in, buf.data(), static_cast<std::int64_t>(buf.size()), path);
  io_detail::expect_eof(in, path);
  EndmemberMatrix e(bands, classes);
  for (int b = 0; b < bands; ++b) {
    for (int c = 0; c < classes; ++c) {
      e.m(b, c) = buf[static_cast<std::size_t>(b) * classes + c];
    }
  }
  e.validate();
  return e;
}

void write_bundle(const std::string& path, const EndmemberBundle& bundle, const DatasetMeta& meta) {
  bundle.validate();
  const int ne = bundle.count(), c = bundle.classes(), k = bundle.clusters();
  const int b = static_cast<int>(bundle.signatures.cols());
  json j = base_header("bundle", meta);
  j["count"] = ne;
  j["bands"] = b;
  j["classes"] = c;
  j["clusters"] = k;
  auto out = open_out(path);
  out << j.dump() << "\n";

  auto write_mat = [&](const Eigen::MatrixXd& m) {
    std::vector<double> buf(static_cast<std::size_t>(m.rows()) * static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index cc = 0; cc < m.cols(); ++cc) {
        buf[static_cast<std::size_t>(r) * static_cast<std::size_t>(m.cols()) +
            static_cast<std::size_t>(cc)] = m(r, cc);
      }
    }
    io_detail::write_doubles(out, buf.data(), static_cast<std::int64_t>(buf.size()));
  };
  auto write_ints = [&](const std::vector<int>& v) {
    std::vector<double> buf(v.begin(), v.end());
    io_detail::write_doubles(out, buf.data(), static_cast<std::int64_t>(buf.size()));
  };

  write_mat(bundle.signatures);
  write_mat(bundle.labels);
  write_ints(bundle.source_pixel);
  write_ints(bundle.cluster_of);
  write_mat(bundle.cluster_means);
  write_ints(bundle.cluster_class);
  write_mat(bundle.references);
  if (!out) throw IoError(path + ": write failed");
}

EndmemberBundle read_bundle(const std::string& path) {
  auto in = open_in(path);
  json j = parse_header(io_detail::read_header_line(in, path), path, "bundle");
  const int ne = header_dim(j, "count", path);
  const int b = header_dim(j, "bands", path);
  const int c = header_dim(j, "classes", path);
  const int k = header_dim(j, "clusters", path);

  auto read_mat = [&](Eigen::Index rows, Eigen::Index cols) {
    std::vector<double> buf(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    io_detail::read_doubles(in, buf.data(), static_cast<std::int64_t>(buf.size()), path);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index cc = 0; cc < cols; ++cc) {
        m(r, cc) = buf[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                       static_cast<std::size_t>(cc)];
      }
    }
    return m;
  };
  auto read_ints = [&](int n) {
    std::vector<double> buf(static_cast<std::size_t>(n));
    io_detail::read_doubles(in, buf.data(), n, path);
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double d = buf[static_cast<std::size_t>(i)];
      if (d != std::floor(d)) throw IoError(path + ": non-integer index in payload");
      v[static_cast<std::size_t>(i)] = static_cast<int>(d);
    }
    return v;
  };

  EndmemberBundle bundle;
  bundle.signatures = read_mat(ne, b);
  bundle.labels = read_mat(ne, c);
  bundle.source_pixel = read_ints(ne);
  bundle.cluster_of = read_ints(ne);
  bundle.cluster_means = read_mat(k, b);
  bundle.cluster_class = read_ints(k);
  bundle.references = read_mat(c, b);
  io_detail::expect_eof(in, path);
  bundle.validate();
  return bundle;
}

DatasetInfo peek_dataset(const std::string& path) {
  auto in = open_in(path);
  std::string line = io_detail::read_header_line(in, path);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(path + ": header is not valid JSON (" + e.what() + ")");
  }
  if (j.value("magic", "") != "HSUX") throw IoError(path + ": bad magic, not a dataset file");
  DatasetInfo info;
  info.kind = j.value("kind", "");
  info.height = j.value("height", 0);
  info.width = j.value("width", 0);
  info.bands = j.value("bands", 0);
  info.classes = j.value("classes", 0);
  info.count = j.value("count", 0);
  info.clusters = j.value("clusters", 0);
  fill_meta_out(j, info);
  return info;
}

void export_abundance_images(const AbundanceMap& map, const std::string& directory) {
  if (map.height < 1 || map.width < 1 || map.classes < 1) {
    throw DimError("export: empty abundance map");
  }
  std::filesystem::create_directories(directory);

  for (int c = 0; c < map.classes; ++c) {
    std::string path = directory + "/abundance_class" + std::to_string(c) + ".pgm";
    auto out = open_out(path);
    out << "P5\n" << map.width << " " << map.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(map.width));
    for (int y = 0; y < map.height; ++y) {
      for (int x = 0; x < map.width; ++x) {
        double v = std::clamp(map.data.at(y, x, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(std::lround(255.0 * v));
      }
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError(path + ": write failed");
  }

  std::string csv_path = directory + "/abundance.csv";
  auto out = open_out(csv_path);
  out << "row,col";
  for (int c = 0; c < map.classes; ++c) out << ",class_" << c;
  out << "\n";
  char buf[64];
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      out << y << "," << x;
      for (int c = 0; c < map.classes; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", map.data.at(y, x, c));
        out << "," << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw IoError(csv_path + ": write failed");
}

}  // namespace egu
