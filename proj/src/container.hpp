#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace nrib {

// Self-describing named-array binary container: an 8-byte magic, a JSON
// manifest (array names, shapes, element types, offsets) and a raw
// little-endian payload. Matrices are stored column-major, exactly as Eigen
// holds them, so save/load round-trips are bit-exact.

class ArrayWriter {
 public:
  void add_f64(const std::string& name, const Eigen::MatrixXd& m);
  void add_i64(const std::string& name, const std::vector<int64_t>& v);
  void add_u8(const std::string& name, const std::vector<uint8_t>& v);
  void set_meta(nlohmann::json meta) { meta_ = std::move(meta); }
  void write(const std::string& path) const;

 private:
  struct Entry {
    std::string name;
    std::string dtype;
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes;
  };
  std::vector<Entry> entries_;
  nlohmann::json meta_;
};

class ArrayReader {
 public:
  explicit ArrayReader(const std::string& path);

  const nlohmann::json& meta() const { return meta_; }
  bool has(const std::string& name) const;
  std::vector<int64_t> shape(const std::string& name) const;

  Eigen::MatrixXd f64(const std::string& name) const;
  std::vector<int64_t> i64(const std::string& name) const;
  std::vector<uint8_t> u8(const std::string& name) const;

 private:
  struct Entry {
    std::string dtype;
    std::vector<int64_t> shape;
    size_t offset = 0;
    size_t nbytes = 0;
  };
  const Entry& find(const std::string& name, const std::string& dtype) const;

  std::vector<uint8_t> payload_;
  std::map<std::string, Entry> entries_;
  nlohmann::json meta_;
};

}  // namespace nrib
