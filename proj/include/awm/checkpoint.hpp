#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "awm/net.hpp"

namespace awm {

// Checkpoint file layout (all integers little-endian):
//   magic "AWM1"
//   u32 len, arch descriptor bytes
//   per parameter, fixed order: u32 len + name bytes, u32 count, count * f32
//   u8 mask flag; if 1: per parameter: u32 len + name, u32 count, count * u8
namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

    uint32_t u32() {
        need(4);
        uint32_t v = static_cast<uint32_t>(p_[at_]) | (static_cast<uint32_t>(p_[at_ + 1]) << 8) |
                     (static_cast<uint32_t>(p_[at_ + 2]) << 16) |
                     (static_cast<uint32_t>(p_[at_ + 3]) << 24);
        at_ += 4;
        return v;
    }

    uint8_t u8() {
        need(1);
        return p_[at_++];
    }

    std::string str() {
        uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(p_ + at_), len);
        at_ += len;
        return s;
    }

    void floats(float* dst, size_t count) {
        need(count * 4);
        std::memcpy(dst, p_ + at_, count * 4);
        at_ += count * 4;
    }

    void bytes(uint8_t* dst, size_t count) {
        need(count);
        std::memcpy(dst, p_ + at_, count);
        at_ += count;
    }

    size_t remaining() const { return n_ - at_; }

private:
    void need(size_t k) const {
        if (at_ + k > n_) throw DataError("truncated file");
    }
    const uint8_t* p_;
    size_t n_;
    size_t at_ = 0;
};

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::streamoff len = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> buf(static_cast<size_t>(len));
    if (len > 0) f.read(reinterpret_cast<char*>(buf.data()), len);
    if (!f) throw DataError("cannot read file: " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::string& payload) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    // Write to a temp name then rename so a crash never leaves a torn file.
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot open file for write: " + tmp);
        f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!f) throw DataError("cannot write file: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::string serialize_checkpoint(const ConvNet& model) {
    std::string out;
    out.append("AWM1");
    detail::put_str(out, model.arch());
    for (const auto& p : model.params()) {
        detail::put_str(out, p.name);
        detail::put_u32(out, static_cast<uint32_t>(p.size()));
        size_t at = out.size();
        out.resize(at + p.size() * 4);
        std::memcpy(out.data() + at, p.value.ptr(), p.size() * 4);
    }
    if (model.has_masks()) {
        out.push_back(1);
        for (const auto& p : model.params()) {
            detail::put_str(out, p.name);
            detail::put_u32(out, static_cast<uint32_t>(p.size()));
            size_t at = out.size();
            out.resize(at + p.size());
            if (p.has_mask())
                std::memcpy(out.data() + at, p.mask.data(), p.size());
            else
                std::memset(out.data() + at, 1, p.size());
        }
    } else {
        out.push_back(0);
    }
    return out;
}

inline void save_checkpoint(const ConvNet& model, const std::string& path) {
    detail::write_file(path, serialize_checkpoint(model));
}

inline ConvNet deserialize_checkpoint(const std::vector<uint8_t>& buf) {
    detail::Reader r(buf.data(), buf.size());
    char magic[4];
    r.bytes(reinterpret_cast<uint8_t*>(magic), 4);
    if (std::memcmp(magic, "AWM1", 4) != 0) {
        if (std::memcmp(magic, "AWM", 3) == 0)
            throw DataError(std::string("unsupported checkpoint version '") +
                            std::string(magic, 4) + "'");
        throw DataError("bad magic: not a checkpoint file");
    }
    std::string arch = r.str();
    // Build the expected parameter list from the arch, then fill it in order.
    ConvNet tmpl = ConvNet::make(arch, 0);
    std::vector<ParamTensor> params;
    params.reserve(tmpl.params().size());
    for (const auto& want : tmpl.params()) {
        std::string name = r.str();
        uint32_t count = r.u32();
        if (name != want.name || count != want.size())
            throw DataError("arch mismatch: parameter '" + name + "' (count " +
                            std::to_string(count) + ") does not fit architecture '" + arch + "'");
        ParamTensor p(name, want.value.shape);
        r.floats(p.value.ptr(), count);
        params.push_back(std::move(p));
    }
    uint8_t mask_flag = r.u8();
    if (mask_flag == 1) {
        for (auto& p : params) {
            std::string name = r.str();
            uint32_t count = r.u32();
            if (name != p.name || count != p.size())
                throw DataError("arch mismatch: mask for '" + name + "' does not fit parameters");
            p.mask.resize(count);
            r.bytes(p.mask.data(), count);
        }
    } else if (mask_flag != 0) {
        throw DataError("bad mask section marker");
    }
    if (r.remaining() != 0) throw DataError("trailing bytes after checkpoint payload");
    ConvNet net = ConvNet::from_params(arch, std::move(params));
    for (auto& p : net.params()) p.enforce_mask();
    return net;
}

inline ConvNet load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(detail::read_file(path));
}

}  // namespace awm
