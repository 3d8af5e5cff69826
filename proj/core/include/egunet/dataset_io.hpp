#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "egunet/bundles.hpp"
#include "egunet/types.hpp"

namespace egu {

// Dataset files share one framing: a single-line JSON header (magic "HSUX",
// version, kind, dimensions, dtype "f64le", optional seed / wavelengths /
// provenance) followed by the raw little-endian float64 payload in row-major
// order with the innermost axis fastest.  The header states the exact payload
// length; trailing bytes are an error.

struct DatasetMeta {
  std::optional<std::uint64_t> seed;
  std::string provenance;
};

void write_cube(const std::string& path, const HsiCube& cube, const DatasetMeta& meta = {});
HsiCube read_cube(const std::string& path);

void write_abundance(const std::string& path, const AbundanceMap& map,
                     const DatasetMeta& meta = {});
// Shape and finiteness are checked on read; simplex membership is not, since
// partially constrained estimates legitimately carry free row sums.
AbundanceMap read_abundance(const std::string& path);

void write_endmembers(const std::string& path, const EndmemberMatrix& endmembers,
                      const DatasetMeta& meta = {});
EndmemberMatrix read_endmembers(const std::string& path);

void write_bundle(const std::string& path, const EndmemberBundle& bundle,
                  const DatasetMeta& meta = {});
EndmemberBundle read_bundle(const std::string& path);

struct DatasetInfo {
  std::string kind;
  int height = 0, width = 0, bands = 0, classes = 0;
  int count = 0, clusters = 0;  // bundle only
  std::optional<std::uint64_t> seed;
  std::string provenance;
};

// Reads the header only.
DatasetInfo peek_dataset(const std::string& path);

// One 8-bit PGM (P5) per class, values clamped into [0, 1] and scaled to
// 0..255, plus abundance.csv holding the raw values at full precision.
void export_abundance_images(const AbundanceMap& map, const std::string& directory);

namespace io_detail {
std::string read_header_line(std::istream& in, const std::string& path);
void write_doubles(std::ostream& out, const double* data, std::int64_t count);
void read_doubles(std::istream& in, double* data, std::int64_t count, const std::string& path);
void expect_eof(std::istream& in, const std::string& path);
}  // namespace io_detail

}  // namespace egu
