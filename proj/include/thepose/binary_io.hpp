#pragma once

// Little-endian binary streams shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "thepose/error.hpp"

namespace thepose::io {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error("io", "cannot open " + path + " for writing");
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(T value) {
    bytes(&value, sizeof(T));
  }

  template <typename T>
  void put_array(const T* data, std::size_t count) {
    bytes(data, sizeof(T) * count);
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw Error("io", "write failed on " + path_);
  }

  void close() {
    out_.close();
    if (!out_) throw Error("io", "close failed on " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path);
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T value;
    bytes(&value, sizeof(T));
    return value;
  }

  template <typename T>
  void get_array(T* data, std::size_t count) {
    bytes(data, sizeof(T) * count);
  }

  void bytes(void* data, std::size_t n) {
    if (n > buf_.size() - pos_) {
      throw Error("truncated", path_ + " ends inside a record");
    }
    std::memcpy(data, buf_.data() + pos_, n);
    pos_ += n;
  }

  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void expect_magic(const std::string& magic) {
    if (buf_.size() - pos_ < magic.size() ||
        std::memcmp(buf_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw Error("bad-magic", path_ + " does not start with " + magic);
    }
    pos_ += magic.size();
  }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace thepose::io
