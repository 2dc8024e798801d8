#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "leo/nn.hpp"

namespace leo::ckpt {

inline void write_u64(std::ostream& os, uint64_t v) { os.write((const char*)&v, sizeof(v)); }
inline void write_i32(std::ostream& os, int32_t v) { os.write((const char*)&v, sizeof(v)); }
inline void write_f64(std::ostream& os, double v) { os.write((const char*)&v, sizeof(v)); }

inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read((char*)&v, sizeof(v));
  return v;
}
inline int32_t read_i32(std::istream& is) {
  int32_t v = 0;
  is.read((char*)&v, sizeof(v));
  return v;
}
inline double read_f64(std::istream& is) {
  double v = 0;
  is.read((char*)&v, sizeof(v));
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_i32(os, (int32_t)s.size());
  os.write(s.data(), (std::streamsize)s.size());
}
inline std::string read_str(std::istream& is) {
  int32_t n = read_i32(is);
  if (n < 0 || n > (1 << 20)) throw std::runtime_error("checkpoint: corrupt string length");
  std::string s((size_t)n, '\0');
  is.read(s.data(), n);
  return s;
}

template <typename Vec>
void write_vec(std::ostream& os, const Vec& v) {
  write_u64(os, v.size());
  for (auto x : v) write_f64(os, (double)x);
}
template <typename Vec>
void read_vec(std::istream& is, Vec& v) {
  uint64_t n = read_u64(is);
  v.resize(n);
  for (auto& x : v) x = (typename Vec::value_type)read_f64(is);
}

inline void write_magic(std::ostream& os, const std::string& kind) {
  os.write("LEOCKPT1", 8);
  write_str(os, kind);
}
inline void expect_magic(std::istream& is, const std::string& kind) {
  char magic[8];
  is.read(magic, 8);
  if (std::string(magic, 8) != "LEOCKPT1")
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
  std::string k = read_str(is);
  if (k != kind)
    throw std::runtime_error("checkpoint: wrong kind '" + k + "', expected '" + kind + "'");
}

template <typename T>
void write_params(std::ostream& os, std::vector<nn::ParamRef<T>> params) {
  write_i32(os, (int32_t)params.size());
  for (auto& p : params) {
    write_str(os, p.name);
    write_vec(os, *p.value);
  }
}

template <typename T>
void read_params(std::istream& is, std::vector<nn::ParamRef<T>> params) {
  int32_t n = read_i32(is);
  if ((size_t)n != params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (auto& p : params) {
    std::string name = read_str(is);
    if (name != p.name) throw std::runtime_error("checkpoint: parameter name mismatch: " + name);
    nn::avec<T> v;
    read_vec(is, v);
    if (v.size() != p.value->size())
      throw std::runtime_error("checkpoint: parameter size mismatch: " + name);
    *p.value = v;
  }
}

}  // namespace leo::ckpt
