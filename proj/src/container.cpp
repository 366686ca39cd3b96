#include "container.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace nrib {

namespace {
constexpr char kMagic[8] = {'N', 'R', 'I', 'B', 'B', 'I', 'N', '1'};
}

void ArrayWriter::add_f64(const std::string& name, const Eigen::MatrixXd& m) {
  Entry e;
  e.name = name;
  e.dtype = "f64";
  e.shape = {m.rows(), m.cols()};
  e.bytes.resize(static_cast<size_t>(m.size()) * sizeof(double));
  std::memcpy(e.bytes.data(), m.data(), e.bytes.size());
  entries_.push_back(std::move(e));
}

void ArrayWriter::add_i64(const std::string& name, const std::vector<int64_t>& v) {
  Entry e;
  e.name = name;
  e.dtype = "i64";
  e.shape = {static_cast<int64_t>(v.size())};
  e.bytes.resize(v.size() * sizeof(int64_t));
  std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
  entries_.push_back(std::move(e));
}

void ArrayWriter::add_u8(const std::string& name, const std::vector<uint8_t>& v) {
  Entry e;
  e.name = name;
  e.dtype = "u8";
  e.shape = {static_cast<int64_t>(v.size())};
  e.bytes = v;
  entries_.push_back(std::move(e));
}

void ArrayWriter::write(const std::string& path) const {
  nlohmann::json manifest;
  manifest["meta"] = meta_.is_null() ? nlohmann::json::object() : meta_;
  nlohmann::json arrays = nlohmann::json::array();
  size_t offset = 0;
  for (const auto& e : entries_) {
    arrays.push_back({{"name", e.name},
                      {"dtype", e.dtype},
                      {"shape", e.shape},
                      {"order", "F"},
                      {"offset", offset},
                      {"nbytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  manifest["arrays"] = std::move(arrays);
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  uint64_t msize = mtext.size();
  out.write(reinterpret_cast<const char*>(&msize), sizeof(msize));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& e : entries_) {
    out.write(reinterpret_cast<const char*>(e.bytes.data()),
              static_cast<std::streamsize>(e.bytes.size()));
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

ArrayReader::ArrayReader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("'" + path + "' is not a named-array container (bad magic)");
  }
  uint64_t msize = 0;
  in.read(reinterpret_cast<char*>(&msize), sizeof(msize));
  if (!in) throw std::runtime_error("'" + path + "': truncated manifest header");
  std::string mtext(msize, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(msize));
  if (!in) throw std::runtime_error("'" + path + "': truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mtext);
  } catch (const nlohmann::json::exception& ex) {
    throw std::runtime_error("'" + path + "': corrupt manifest: " + ex.what());
  }
  meta_ = manifest.value("meta", nlohmann::json::object());

  payload_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());

  for (const auto& a : manifest.at("arrays")) {
    Entry e;
    e.dtype = a.at("dtype").get<std::string>();
    e.shape = a.at("shape").get<std::vector<int64_t>>();
    e.offset = a.at("offset").get<size_t>();
    e.nbytes = a.at("nbytes").get<size_t>();
    const std::string name = a.at("name").get<std::string>();
    if (e.offset + e.nbytes > payload_.size()) {
      throw std::runtime_error("'" + path + "': array '" + name + "' truncated (manifest wants " +
                               std::to_string(e.offset + e.nbytes) + " payload bytes, file has " +
                               std::to_string(payload_.size()) + ")");
    }
    entries_[name] = std::move(e);
  }
}

bool ArrayReader::has(const std::string& name) const { return entries_.count(name) > 0; }

std::vector<int64_t> ArrayReader::shape(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("array '" + name + "' not present");
  return it->second.shape;
}

const ArrayReader::Entry& ArrayReader::find(const std::string& name,
                                            const std::string& dtype) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("array '" + name + "' not present");
  if (it->second.dtype != dtype) {
    throw std::runtime_error("array '" + name + "' has dtype " + it->second.dtype + ", expected " +
                             dtype);
  }
  return it->second;
}

Eigen::MatrixXd ArrayReader::f64(const std::string& name) const {
  const Entry& e = find(name, "f64");
  if (e.shape.size() != 2) throw std::runtime_error("array '" + name + "' is not a matrix");
  Eigen::MatrixXd m(e.shape[0], e.shape[1]);
  if (e.nbytes != static_cast<size_t>(m.size()) * sizeof(double)) {
    throw std::runtime_error("array '" + name + "' size mismatch between shape and nbytes");
  }
  std::memcpy(m.data(), payload_.data() + e.offset, e.nbytes);
  return m;
}

std::vector<int64_t> ArrayReader::i64(const std::string& name) const {
  const Entry& e = find(name, "i64");
  std::vector<int64_t> v(e.nbytes / sizeof(int64_t));
  std::memcpy(v.data(), payload_.data() + e.offset, e.nbytes);
  return v;
}

std::vector<uint8_t> ArrayReader::u8(const std::string& name) const {
  const Entry& e = find(name, "u8");
  return std::vector<uint8_t>(payload_.begin() + static_cast<long>(e.offset),
                              payload_.begin() + static_cast<long>(e.offset + e.nbytes));
}

}  // namespace nrib
