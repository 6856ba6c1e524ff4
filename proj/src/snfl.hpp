#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"

namespace moco::snfl {

// Binary array container:
//   magic "SNFL" | version u16 | dtype u8 (0 = f64, 1 = c128) | rank u8 |
//   dims u64[rank] | row-major payload.
// All integers little-endian. load(save(x)) is bit-exact.

enum class Status {
  ok,
  bad_magic,
  bad_version,
  dtype_mismatch,
  truncated,
  io_failure,
};

class Error : public std::runtime_error {
 public:
  Error(Status s, const std::string& what) : std::runtime_error(what), status(s) {}
  Status status;
};

struct RealTensor {
  std::vector<uint64_t> dims;
  std::vector<double> v;
};

struct ComplexTensor {
  std::vector<uint64_t> dims;
  std::vector<Complex> v;
};

void save(const std::filesystem::path& path, const RealTensor& t);
void save(const std::filesystem::path& path, const ComplexTensor& t);
void save(const std::filesystem::path& path, const Image& im);
void save(const std::filesystem::path& path, const ComplexField& f);

/// Reads the dtype code without loading the payload.
uint8_t peek_dtype(const std::filesystem::path& path);

RealTensor load_real(const std::filesystem::path& path);
ComplexTensor load_complex(const std::filesystem::path& path);
Image load_image(const std::filesystem::path& path);
ComplexField load_field(const std::filesystem::path& path);

}  // namespace moco::snfl
