#pragma once

#include <map>
#include <string>
#include <vector>

#include "htd/types.hpp"

namespace htd {

// Binary float matrix: "HTDM" magic, uint32 version, uint64 rows, uint64
// cols, then rows*cols little-endian float64 in row-major order.
void write_matrix_binary(const std::string& path, const SampleMatrix& m);
SampleMatrix read_matrix_binary(const std::string& path);

// CSV with an optional header line (skipped if non-numeric).
void write_matrix_csv(const std::string& path, const SampleMatrix& m,
                      const std::vector<std::string>& header = {});
SampleMatrix read_matrix_csv(const std::string& path);

// Chooses the format by extension: ".bin" binary, anything else CSV.
void write_matrix(const std::string& path, const SampleMatrix& m,
                  const std::vector<std::string>& header = {});
SampleMatrix read_matrix(const std::string& path);

// Flat key=value file; '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::string& path);

// Little-endian helpers shared by the binary formats.
void put_u32(std::string& buf, std::uint32_t v);
void put_u64(std::string& buf, std::uint64_t v);
void put_f64(std::string& buf, double v);

class ByteReader {
 public:
  ByteReader(std::string data, std::string what);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string bytes(std::size_t n);
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n);
  std::string data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

}  // namespace htd
