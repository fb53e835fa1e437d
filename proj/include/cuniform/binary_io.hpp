#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

// Little-endian binary file helpers. Assumes a little-endian host, which the
// build enforces via static_assert below on the usual platforms.

static_assert(sizeof(double) == 8, "f64 serialization requires 8-byte double");

namespace cuniform::detail {

class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    }

    void magic(const char (&m)[5]) { out_.write(m, 4); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void i32(std::int32_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }

private:
    void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw std::runtime_error("cannot open for reading: " + path);
    }

    void expect_magic(const char (&m)[5]) {
        char got[4];
        raw(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            throw std::runtime_error(path_ + ": bad magic, expected \"" + m + "\"");
    }

    std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
    std::int32_t i32() { std::int32_t v; raw(&v, sizeof v); return v; }
    double f64() { double v; raw(&v, sizeof v); return v; }

private:
    void raw(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            throw std::runtime_error(path_ + ": truncated file");
    }
    std::ifstream in_;
    std::string path_;
};

}  // namespace cuniform::detail
