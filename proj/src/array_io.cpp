#include "plume/array_io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "plume/errors.hpp"

namespace plume {

namespace {

constexpr const char* kMagic = "plume-array v1";
constexpr const char* kCreator = "plume 1.0.0";

void encode_le(double value, unsigned char out[8]) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  for (int b = 0; b < 8; ++b) out[b] = static_cast<unsigned char>(bits >> (8 * b));
}

double decode_le(const unsigned char in[8]) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(in[b]) << (8 * b);
  double value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void save_array(const std::string& path, const ArrayContainer& array) {
  const std::size_t n = array.element_count();
  if (array.data.size() != n) {
    throw DimensionMismatch("save_array: payload size does not match shape");
  }
  std::vector<unsigned char> payload(8 * n);
  for (std::size_t i = 0; i < n; ++i) encode_le(array.data[i], &payload[8 * i]);
  const std::uint64_t hash = fnv1a64(payload.data(), payload.size());

  std::ostringstream header;
  header << kMagic << "\n";
  header << "name: " << array.name << "\n";
  header << "dtype: float64-le\n";
  header << "shape:";
  for (auto d : array.shape) header << " " << d;
  header << "\n";
  header << "order: row-major\n";
  header << "creator: " << kCreator << "\n";
  header << "hash: fnv1a64:" << to_hex(hash) << "\n";
  header << "payload-bytes: " << payload.size() << "\n";
  header << "---\n";

  // write-temp-then-rename keeps partially written files invisible
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_array: cannot open " + tmp);
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("save_array: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ArrayContainer load_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_array: cannot open " + path);

  ArrayContainer array;
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw std::runtime_error("load_array: bad magic in " + path);
  }
  std::string hash_field;
  std::size_t payload_bytes = 0;
  bool have_shape = false;
  while (std::getline(in, line)) {
    if (line == "---") break;
    const auto colon = line.find(": ");
    std::string key = line.substr(0, line.find(':'));
    std::string value = colon == std::string::npos ? "" : line.substr(colon + 2);
    if (key == "name") {
      array.name = value;
    } else if (key == "shape") {
      std::istringstream ss(value);
      std::size_t d;
      while (ss >> d) array.shape.push_back(d);
      have_shape = true;
    } else if (key == "hash") {
      hash_field = value;
    } else if (key == "payload-bytes") {
      payload_bytes = std::stoull(value);
    } else if (key == "dtype") {
      if (value != "float64-le") {
        throw std::runtime_error("load_array: unsupported dtype " + value);
      }
    }
    // order/creator are informational
  }
  if (!have_shape || line != "---") {
    throw TruncatedFile("load_array: incomplete header in " + path);
  }
  const std::size_t n = array.element_count();
  if (payload_bytes != 8 * n) {
    throw TruncatedFile("load_array: payload-bytes inconsistent with shape");
  }
  std::vector<unsigned char> payload(payload_bytes);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload_bytes) {
    throw TruncatedFile("load_array: truncated payload in " + path);
  }
  const std::uint64_t hash = fnv1a64(payload.data(), payload.size());
  if (hash_field != "fnv1a64:" + to_hex(hash)) {
    throw HashMismatch("load_array: hash mismatch in " + path);
  }
  array.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) array.data[i] = decode_le(&payload[8 * i]);
  return array;
}

ArrayContainer to_container(const std::string& name, const Mat& m) {
  ArrayContainer c;
  c.name = name;
  c.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  c.data.resize(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index col = 0; col < m.cols(); ++col) c.data[k++] = m(r, col);
  }
  return c;
}

ArrayContainer to_container(const std::string& name, const Vec& v) {
  ArrayContainer c;
  c.name = name;
  c.shape = {static_cast<std::size_t>(v.size())};
  c.data.assign(v.data(), v.data() + v.size());
  return c;
}

Mat matrix_from(const ArrayContainer& c) {
  if (c.shape.size() != 2) {
    throw DimensionMismatch("matrix_from: container rank != 2");
  }
  Mat m(c.shape[0], c.shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = c.data[k++];
  }
  return m;
}

Vec vector_from(const ArrayContainer& c) {
  if (c.shape.size() != 1) {
    throw DimensionMismatch("vector_from: container rank != 1");
  }
  return Eigen::Map<const Vec>(c.data.data(), static_cast<Eigen::Index>(c.data.size()));
}

void save_matrix(const std::string& path, const std::string& name, const Mat& m) {
  save_array(path, to_container(name, m));
}

void save_vector(const std::string& path, const std::string& name, const Vec& v) {
  save_array(path, to_container(name, v));
}

Mat load_matrix(const std::string& path) { return matrix_from(load_array(path)); }

Vec load_vector(const std::string& path) { return vector_from(load_array(path)); }

}  // namespace plume
