#include "snfl.hpp"

#include <cstdio>
#include <cstring>

namespace moco::snfl {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'F', 'L'};
constexpr uint16_t kVersion = 1;

struct File {
  std::FILE* f = nullptr;
  ~File() {
    if (f) std::fclose(f);
  }
};

void put_u16(std::FILE* f, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  std::fwrite(b, 1, 2, f);
}

void put_u64(std::FILE* f, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  std::fwrite(b, 1, 8, f);
}

void write_header(std::FILE* f, uint8_t dtype, const std::vector<uint64_t>& dims) {
  std::fwrite(kMagic, 1, 4, f);
  put_u16(f, kVersion);
  std::fputc(dtype, f);
  std::fputc(static_cast<int>(dims.size()), f);
  for (uint64_t d : dims) put_u64(f, d);
}

void write_payload(std::FILE* f, const void* data, size_t bytes,
                   const std::filesystem::path& path) {
  if (bytes > 0 && std::fwrite(data, 1, bytes, f) != bytes) {
    throw Error(Status::io_failure, "short write: " + path.string());
  }
}

template <class SaveBody>
void save_file(const std::filesystem::path& path, SaveBody body) {
  File file;
  file.f = std::fopen(path.string().c_str(), "wb");
  if (!file.f) throw Error(Status::io_failure, "cannot open for writing: " + path.string());
  body(file.f);
  if (std::fflush(file.f) != 0) {
    throw Error(Status::io_failure, "flush failed: " + path.string());
  }
}

struct Header {
  uint8_t dtype = 0;
  std::vector<uint64_t> dims;
  uint64_t count = 1;
};

Header read_header(std::FILE* f, const std::filesystem::path& path) {
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4) {
    throw Error(Status::truncated, "truncated header: " + path.string());
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(Status::bad_magic, "not a SNFL file: " + path.string());
  }
  unsigned char rest[4];
  if (std::fread(rest, 1, 4, f) != 4) {
    throw Error(Status::truncated, "truncated header: " + path.string());
  }
  const uint16_t version = static_cast<uint16_t>(rest[0]) | (static_cast<uint16_t>(rest[1]) << 8);
  if (version != kVersion) {
    throw Error(Status::bad_version, "unsupported SNFL version: " + path.string());
  }
  Header h;
  h.dtype = rest[2];
  const int rank = rest[3];
  h.dims.resize(rank);
  for (int i = 0; i < rank; ++i) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8) {
      throw Error(Status::truncated, "truncated dims: " + path.string());
    }
    uint64_t d = 0;
    for (int j = 0; j < 8; ++j) d |= static_cast<uint64_t>(b[j]) << (8 * j);
    h.dims[i] = d;
    h.count *= d;
  }
  return h;
}

void read_payload(std::FILE* f, void* out, size_t bytes, const std::filesystem::path& path) {
  if (bytes > 0 && std::fread(out, 1, bytes, f) != bytes) {
    throw Error(Status::truncated, "truncated payload: " + path.string());
  }
}

File open_read(const std::filesystem::path& path) {
  File file;
  file.f = std::fopen(path.string().c_str(), "rb");
  if (!file.f) throw Error(Status::io_failure, "cannot open: " + path.string());
  return file;
}

}  // namespace

void save(const std::filesystem::path& path, const RealTensor& t) {
  save_file(path, [&](std::FILE* f) {
    write_header(f, 0, t.dims);
    write_payload(f, t.v.data(), t.v.size() * sizeof(double), path);
  });
}

void save(const std::filesystem::path& path, const ComplexTensor& t) {
  save_file(path, [&](std::FILE* f) {
    write_header(f, 1, t.dims);
    write_payload(f, t.v.data(), t.v.size() * sizeof(Complex), path);
  });
}

void save(const std::filesystem::path& path, const Image& im) {
  save_file(path, [&](std::FILE* f) {
    const uint64_t n = static_cast<uint64_t>(im.grid.n);
    write_header(f, 0, {n, n});
    write_payload(f, im.v.data(), im.v.size() * sizeof(double), path);
  });
}

void save(const std::filesystem::path& path, const ComplexField& fld) {
  save_file(path, [&](std::FILE* f) {
    const uint64_t n = static_cast<uint64_t>(fld.grid.n);
    write_header(f, 1, {n, n});
    write_payload(f, fld.v.data(), fld.v.size() * sizeof(Complex), path);
  });
}

uint8_t peek_dtype(const std::filesystem::path& path) {
  File file = open_read(path);
  return read_header(file.f, path).dtype;
}

RealTensor load_real(const std::filesystem::path& path) {
  File file = open_read(path);
  const Header h = read_header(file.f, path);
  if (h.dtype != 0) throw Error(Status::dtype_mismatch, "expected f64 data: " + path.string());
  RealTensor t;
  t.dims = h.dims;
  t.v.resize(h.count);
  read_payload(file.f, t.v.data(), h.count * sizeof(double), path);
  return t;
}

ComplexTensor load_complex(const std::filesystem::path& path) {
  File file = open_read(path);
  const Header h = read_header(file.f, path);
  if (h.dtype != 1) throw Error(Status::dtype_mismatch, "expected c128 data: " + path.string());
  ComplexTensor t;
  t.dims = h.dims;
  t.v.resize(h.count);
  read_payload(file.f, t.v.data(), h.count * sizeof(Complex), path);
  return t;
}

Image load_image(const std::filesystem::path& path) {
  RealTensor t = load_real(path);
  if (t.dims.size() != 2 || t.dims[0] != t.dims[1]) {
    throw Error(Status::dtype_mismatch, "expected square rank-2 image: " + path.string());
  }
  Image im(make_grid(static_cast<int>(t.dims[0])));
  im.v = std::move(t.v);
  return im;
}

ComplexField load_field(const std::filesystem::path& path) {
  ComplexTensor t = load_complex(path);
  if (t.dims.size() != 2 || t.dims[0] != t.dims[1]) {
    throw Error(Status::dtype_mismatch, "expected square rank-2 field: " + path.string());
  }
  ComplexField fld(make_grid(static_cast<int>(t.dims[0])));
  fld.v = std::move(t.v);
  return fld;
}

}  // namespace moco::snfl
