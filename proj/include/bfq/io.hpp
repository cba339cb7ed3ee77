#pragma once

// Persistence: the versioned transform text format, the binary calibration
// container and the dense-matrix export.

#include <filesystem>
#include <map>
#include <string>

#include "bfq/calibrate.hpp"
#include "bfq/linalg.hpp"
#include "bfq/transform.hpp"

namespace bfq {

inline constexpr const char* kTransformVersion = "1";

/// A learnable transform plus free-form string metadata (seed, archetype, loss).
struct TransformFile {
  Transform transform;
  std::map<std::string, std::string> metadata;
};

// JSON with sorted keys; doubles are written as shortest round-trip decimals,
// so load_transform(save_transform(t)) reproduces every bit. Dense transforms
// have no file form and raise Error("config").
std::string save_transform(const TransformFile& file);
// Error("format") for malformed text or inconsistent lengths (with the byte
// offset or key), Error("version") for any version other than "1".
TransformFile load_transform(const std::string& text);

void write_transform(const std::filesystem::path& path, const TransformFile& file);
TransformFile read_transform(const std::filesystem::path& path);

// Calibration container, all integers and doubles little-endian:
//   "BFQCAL1\0" | u32 rows(W) | u32 cols(W) | u32 samples | u32 tag length | tag
//   | W row-major f64 | samples x cols f64
std::string encode_calibration(const CalibrationSet& cal);
CalibrationSet decode_calibration(const std::string& bytes);
void write_calibration(const std::filesystem::path& path, const CalibrationSet& cal);
CalibrationSet read_calibration(const std::filesystem::path& path);

// "BFQMAT1\0" | u32 rows | u32 cols | row-major f64 little-endian.
std::string encode_matrix(const DenseMatrix& m);
DenseMatrix decode_matrix(const std::string& bytes);

// Whole-file helpers; failures raise Error("io").
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace bfq
