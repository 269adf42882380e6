// Copyright 2026 The progre Authors
// Named-array archive: the on-disk container for parameters, features,
// labels, and embeddings.
//
// Licensed under the Apache License, Version 2.0
//
// Layout (all integers little-endian):
//   bytes 0..7   magic "PGNARCH1"
//   bytes 8..15  u64 header length H
//   bytes 16..   H bytes of UTF-8 JSON:
//                  {"arrays": {name: {"dtype": "f64"|"f32"|"i32",
//                                     "shape": [...], "offset": o,
//                                     "nbytes": n}, ...},
//                   "meta": {...},
//                   "payload_crc32": c,
//                   "version": 1}
//   then the payload; array offsets are relative to the payload start and
//   8-byte aligned. Array names are stored in sorted order and offsets are
//   assigned in that order, so identical content yields identical bytes.

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "progre/tensor.hpp"

namespace progre {

namespace detail {

inline const std::array<std::uint32_t, 256>& crc32_table() {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
            t[i] = c;
        }
        return t;
    }();
    return table;
}

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
    const auto& table = crc32_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

inline void append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

// Atomic write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::string& path, const std::vector<unsigned char>& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("persistence_cli: cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("persistence_cli: short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline constexpr char kArchiveMagic[8] = {'P', 'G', 'N', 'A', 'R', 'C', 'H', '1'};
inline constexpr int kArchiveVersion = 1;

class ArchiveWriter {
public:
    void add(const std::string& name, const Tensor& t) { add_f64(name, t); }

    void add_f64(const std::string& name, const Tensor& t) {
        Entry e;
        e.dtype = "f64";
        e.shape.assign(t.shape().begin(), t.shape().end());
        e.bytes.resize(t.size() * 8);
        std::memcpy(e.bytes.data(), t.data().data(), e.bytes.size());
        insert(name, std::move(e));
    }

    void add_f32(const std::string& name, const Tensor& t) {
        Entry e;
        e.dtype = "f32";
        e.shape.assign(t.shape().begin(), t.shape().end());
        e.bytes.resize(t.size() * 4);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const float f = static_cast<float>(t[i]);
            std::memcpy(e.bytes.data() + 4 * i, &f, 4);
        }
        insert(name, std::move(e));
    }

    void add_i32(const std::string& name, const std::vector<std::int32_t>& v) {
        Entry e;
        e.dtype = "i32";
        e.shape = {v.size()};
        e.bytes.resize(v.size() * 4);
        std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
        insert(name, std::move(e));
    }

    void set_meta(nlohmann::json meta) { meta_ = std::move(meta); }

    void write(const std::string& path) const {
        // Assign aligned offsets in sorted-name order.
        nlohmann::json arrays = nlohmann::json::object();
        std::uint64_t offset = 0;
        for (const auto& [name, e] : entries_) {
            offset = (offset + 7) & ~std::uint64_t{7};
            arrays[name] = {{"dtype", e.dtype},
                            {"shape", e.shape},
                            {"offset", offset},
                            {"nbytes", e.bytes.size()}};
            offset += e.bytes.size();
        }
        std::vector<unsigned char> payload(offset, 0);
        for (const auto& [name, e] : entries_) {
            const std::uint64_t off = arrays[name]["offset"].get<std::uint64_t>();
            std::memcpy(payload.data() + off, e.bytes.data(), e.bytes.size());
        }
        nlohmann::json header = {{"version", kArchiveVersion},
                                 {"arrays", arrays},
                                 {"meta", meta_},
                                 {"payload_crc32", detail::crc32(payload.data(), payload.size())}};
        const std::string header_str = header.dump();

        std::vector<unsigned char> out;
        out.reserve(16 + header_str.size() + payload.size());
        out.insert(out.end(), kArchiveMagic, kArchiveMagic + 8);
        detail::append_u64(out, header_str.size());
        out.insert(out.end(), header_str.begin(), header_str.end());
        out.insert(out.end(), payload.begin(), payload.end());
        detail::write_file_atomic(path, out);
    }

private:
    struct Entry {
        std::string dtype;
        std::vector<std::uint64_t> shape;
        std::vector<unsigned char> bytes;
    };

    std::map<std::string, Entry> entries_;
    nlohmann::json meta_ = nlohmann::json::object();

    void insert(const std::string& name, Entry e) {
        if (!entries_.emplace(name, std::move(e)).second)
            throw std::invalid_argument("persistence_cli: duplicate array name: " + name);
    }
};

class Archive {
public:
    static Archive load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("persistence_cli: cannot open archive: " + path);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
        if (bytes.size() < 16 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0)
            throw std::runtime_error("persistence_cli: not a named-array archive: " + path);
        std::uint64_t hlen = 0;
        for (int i = 7; i >= 0; --i) hlen = (hlen << 8) | bytes[8 + i];
        if (16 + hlen > bytes.size())
            throw std::runtime_error("persistence_cli: truncated archive header: " + path);
        Archive a;
        a.header_ = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + hlen);
        if (a.header_.value("version", 0) != kArchiveVersion)
            throw std::runtime_error("persistence_cli: unsupported archive version in " + path);
        a.payload_.assign(bytes.begin() + 16 + hlen, bytes.end());
        const std::uint32_t crc = detail::crc32(a.payload_.data(), a.payload_.size());
        if (crc != a.header_.at("payload_crc32").get<std::uint32_t>())
            throw std::runtime_error("persistence_cli: archive checksum mismatch in " + path);
        return a;
    }

    const nlohmann::json& meta() const { return header_.at("meta"); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : header_.at("arrays").items()) out.push_back(k);
        return out;  // nlohmann objects iterate in sorted key order
    }

    bool has(const std::string& name) const { return header_.at("arrays").contains(name); }

    std::vector<std::uint64_t> shape(const std::string& name) const {
        return entry(name).at("shape").get<std::vector<std::uint64_t>>();
    }

    std::string dtype(const std::string& name) const {
        return entry(name).at("dtype").get<std::string>();
    }

    Tensor tensor(const std::string& name) const {
        const auto& e = entry(name);
        const std::string dtype = e.at("dtype").get<std::string>();
        const auto shape64 = e.at("shape").get<std::vector<std::uint64_t>>();
        std::vector<std::size_t> shape(shape64.begin(), shape64.end());
        const unsigned char* p = payload(e);
        Tensor t(shape);
        if (dtype == "f64") {
            std::memcpy(t.data().data(), p, t.size() * 8);
        } else if (dtype == "f32") {
            for (std::size_t i = 0; i < t.size(); ++i) {
                float f;
                std::memcpy(&f, p + 4 * i, 4);
                t[i] = static_cast<double>(f);
            }
        } else {
            throw std::runtime_error("persistence_cli: array " + name + " is not floating point");
        }
        return t;
    }

    std::vector<std::int32_t> ints(const std::string& name) const {
        const auto& e = entry(name);
        if (e.at("dtype").get<std::string>() != "i32")
            throw std::runtime_error("persistence_cli: array " + name + " is not i32");
        const auto shape64 = e.at("shape").get<std::vector<std::uint64_t>>();
        std::size_t n = 1;
        for (auto s : shape64) n *= s;
        std::vector<std::int32_t> out(n);
        std::memcpy(out.data(), payload(e), n * 4);
        return out;
    }

private:
    nlohmann::json header_;
    std::vector<unsigned char> payload_;

    const nlohmann::json& entry(const std::string& name) const {
        const auto& arrays = header_.at("arrays");
        auto it = arrays.find(name);
        if (it == arrays.end())
            throw std::out_of_range("persistence_cli: no such array: " + name);
        return *it;
    }

    const unsigned char* payload(const nlohmann::json& e) const {
        const std::uint64_t off = e.at("offset").get<std::uint64_t>();
        const std::uint64_t nbytes = e.at("nbytes").get<std::uint64_t>();
        if (off + nbytes > payload_.size())
            throw std::runtime_error("persistence_cli: array extends past payload");
        return payload_.data() + off;
    }
};

}  // namespace progre
