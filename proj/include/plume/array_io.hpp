#pragma once

#include <string>
#include <vector>

#include "plume/common.hpp"

namespace plume {

/// Portable array file: structured text header, then raw 64-bit little-endian
/// IEEE floats in row-major order. The header carries an FNV-1a hash of the
/// payload which is verified on load.
struct ArrayContainer {
  std::string name;
  std::vector<std::size_t> shape;  // empty = scalar
  std::vector<double> data;        // row-major

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

void save_array(const std::string& path, const ArrayContainer& array);
ArrayContainer load_array(const std::string& path);

// Eigen bridges (containers are row-major on disk).
ArrayContainer to_container(const std::string& name, const Mat& m);
ArrayContainer to_container(const std::string& name, const Vec& v);
Mat matrix_from(const ArrayContainer& c);
Vec vector_from(const ArrayContainer& c);

void save_matrix(const std::string& path, const std::string& name, const Mat& m);
void save_vector(const std::string& path, const std::string& name, const Vec& v);
Mat load_matrix(const std::string& path);
Vec load_vector(const std::string& path);

}  // namespace plume
