#include "lacovl/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lacovl {

namespace {

void append_le(std::vector<unsigned char>& payload, const std::vector<double>& values) {
    static_assert(sizeof(double) == 8);
    const std::size_t start = payload.size();
    payload.resize(start + values.size() * 8);
    std::memcpy(payload.data() + start, values.data(), values.size() * 8);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = start; i < payload.size(); i += 8)
            std::reverse(payload.begin() + i, payload.begin() + i + 8);
    }
}

void read_le(const std::vector<unsigned char>& payload, std::size_t offset,
             std::vector<double>& out) {
    if (offset + out.size() * 8 > payload.size())
        throw CheckpointMismatch("payload overrun at offset " + std::to_string(offset));
    std::memcpy(out.data(), payload.data() + offset, out.size() * 8);
    if constexpr (std::endian::native == std::endian::big) {
        auto* bytes = reinterpret_cast<unsigned char*>(out.data());
        for (std::size_t i = 0; i < out.size() * 8; i += 8)
            std::reverse(bytes + i, bytes + i + 8);
    }
}

std::string shape_token(const Shape& s) {
    if (s.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out;
}

Shape parse_shape_token(const std::string& tok) {
    if (tok == "scalar") return {};
    Shape s;
    std::stringstream ss(tok);
    std::string part;
    while (std::getline(ss, part, 'x')) s.push_back(std::stoull(part));
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamRegistry& registry, const Adam* adam,
                     std::uint64_t seed, const KvConfig* config) {
    std::ostringstream manifest;
    std::vector<unsigned char> payload;
    manifest << "lacovl-checkpoint v1\n";
    manifest << "seed " << seed << "\n";
    if (config) {
        for (const auto& [k, v] : config->entries()) manifest << "cfg " << k << "=" << v << "\n";
    }
    for (const auto& [name, p] : registry.params()) {
        manifest << "param " << name << " f64 " << shape_token(p.tensor.shape()) << " @"
                 << payload.size() << (p.frozen ? " frozen" : "") << "\n";
        append_le(payload, p.tensor.values());
    }
    for (const auto& [name, buf] : registry.buffers()) {
        manifest << "buffer " << name << " f64 " << buf.size() << " @" << payload.size() << "\n";
        append_le(payload, buf);
    }
    if (adam) {
        for (const auto& [name, slot] : adam->slots()) {
            manifest << "opt " << name << " f64 " << slot.m.size() << " @" << payload.size()
                     << " step=" << slot.step << "\n";
            append_le(payload, slot.m);
            append_le(payload, slot.v);
        }
    }
    manifest << "end\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    const std::string header = manifest.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("short write on checkpoint " + path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(in, line) || line != "lacovl-checkpoint v1")
        throw CheckpointMismatch(path + ": bad header '" + line + "'");
    CheckpointInfo info;
    while (std::getline(in, line)) {
        if (line == "end") break;
        if (line.rfind("seed ", 0) == 0) info.seed = std::stoull(line.substr(5));
        if (line.rfind("cfg ", 0) == 0) info.config.apply_override(line.substr(4));
    }
    return info;
}

std::uint64_t load_checkpoint(const std::string& path, ParamRegistry& registry, Adam* adam) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);

    std::string line;
    if (!std::getline(in, line) || line != "lacovl-checkpoint v1")
        throw CheckpointMismatch(path + ": bad header '" + line + "'");

    struct Entry {
        std::string kind, name, shape;
        std::size_t offset;
        std::uint64_t step = 0;
    };
    std::vector<Entry> entries;
    std::uint64_t seed = 0;
    while (std::getline(in, line)) {
        if (line == "end") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "seed") {
            ls >> seed;
            continue;
        }
        if (kind == "cfg") continue;
        Entry e;
        e.kind = kind;
        std::string dtype, at;
        ls >> e.name >> dtype >> e.shape >> at;
        if ((kind != "param" && kind != "buffer" && kind != "opt") || dtype != "f64" ||
            at.empty() || at[0] != '@')
            throw CheckpointMismatch(path + ": bad manifest line '" + line + "'");
        e.offset = std::stoull(at.substr(1));
        std::string extra;
        while (ls >> extra) {
            if (extra.rfind("step=", 0) == 0) e.step = std::stoull(extra.substr(5));
        }
        entries.push_back(std::move(e));
    }

    std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());

    std::size_t params_seen = 0;
    for (const Entry& e : entries) {
        if (e.kind == "param") {
            auto it = registry.params().find(e.name);
            if (it == registry.params().end())
                throw CheckpointMismatch("checkpoint has unknown parameter '" + e.name + "'");
            Shape shape = parse_shape_token(e.shape);
            if (shape != it->second.tensor.shape())
                throw CheckpointMismatch("parameter '" + e.name + "' shape " + shape_str(shape) +
                                         " != model " + shape_str(it->second.tensor.shape()));
            read_le(payload, e.offset, it->second.tensor.values());
            ++params_seen;
        } else if (e.kind == "buffer") {
            auto it = registry.buffers().find(e.name);
            if (it == registry.buffers().end())
                throw CheckpointMismatch("checkpoint has unknown buffer '" + e.name + "'");
            if (std::stoull(e.shape) != it->second.size())
                throw CheckpointMismatch("buffer '" + e.name + "' length mismatch");
            read_le(payload, e.offset, it->second);
        } else if (e.kind == "opt" && adam) {
            const std::size_t len = std::stoull(e.shape);
            AdamSlot slot;
            slot.m.resize(len);
            slot.v.resize(len);
            slot.step = e.step;
            read_le(payload, e.offset, slot.m);
            read_le(payload, e.offset + len * 8, slot.v);
            adam->slots()[e.name] = std::move(slot);
        }
    }
    if (params_seen != registry.params().size())
        throw CheckpointMismatch("checkpoint covers " + std::to_string(params_seen) + " of " +
                                 std::to_string(registry.params().size()) + " model parameters");
    return seed;
}

}  // namespace lacovl
