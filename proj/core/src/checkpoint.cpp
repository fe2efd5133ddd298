#include "depthfuse/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "depthfuse/errors.hpp"

namespace depthfuse {

namespace {

constexpr char kMagic[] = {'S', 'C', 'A', 'D', 'C', '1'};
constexpr std::size_t kMagicLen = sizeof(kMagic);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

struct Cursor {
    const std::uint8_t* p;
    std::size_t left;

    bool done() const { return left == 0; }

    void need(std::size_t n, const char* what) {
        if (left < n) {
            throw FormatError(std::string("checkpoint truncated while reading ") + what);
        }
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        left -= 4;
        return v;
    }

    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return std::bit_cast<double>(bits);
    }

    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
};

}  // namespace

void Checkpoint::set(const std::string& name, std::vector<std::uint32_t> dims,
                     std::vector<double> data) {
    if (name.empty()) throw ArgumentError("checkpoint entry name is empty");
    std::uint64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    if (n != data.size()) {
        throw ArgumentError("checkpoint entry " + name + ": dims do not match data length");
    }
    auto [it, inserted] = entries_.insert_or_assign(name, CheckpointEntry{std::move(dims), std::move(data)});
    if (inserted) order_.push_back(name);
}

void Checkpoint::set_scalar(const std::string& name, double value) {
    set(name, {}, {value});
}

bool Checkpoint::has(const std::string& name) const { return entries_.count(name) != 0; }

const CheckpointEntry& Checkpoint::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("checkpoint has no entry named " + name);
    return it->second;
}

double Checkpoint::get_scalar(const std::string& name) const {
    const CheckpointEntry& e = get(name);
    if (e.data.size() != 1) {
        throw FormatError("checkpoint entry " + name + " is not a scalar");
    }
    return e.data[0];
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
    std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLen);
    for (const std::string& name : order_) {
        const CheckpointEntry& e = entries_.at(name);
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
        for (std::uint32_t d : e.dims) put_u32(out, d);
        for (double v : e.data) put_f64(out, v);
    }
    return out;
}

Checkpoint Checkpoint::parse(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
        throw FormatError("not a checkpoint file (bad magic)");
    }
    Checkpoint ckpt;
    Cursor cur{bytes.data() + kMagicLen, bytes.size() - kMagicLen};
    while (!cur.done()) {
        const std::uint32_t name_len = cur.u32("entry name length");
        if (name_len == 0 || name_len > 4096) {
            throw FormatError("checkpoint entry has implausible name length " +
                              std::to_string(name_len));
        }
        const std::string name = cur.str(name_len, "entry name");
        const std::uint32_t rank = cur.u32("entry rank");
        if (rank > 8) {
            throw FormatError("checkpoint entry " + name + " has implausible rank " +
                              std::to_string(rank));
        }
        std::vector<std::uint32_t> dims(rank);
        std::uint64_t n = 1;
        for (std::uint32_t& d : dims) {
            d = cur.u32("entry dims");
            n *= d;
        }
        if (n > (1ull << 32)) {
            throw FormatError("checkpoint entry " + name + " is implausibly large");
        }
        std::vector<double> data(static_cast<std::size_t>(n));
        for (double& v : data) v = cur.f64("entry data");
        if (ckpt.has(name)) throw FormatError("checkpoint has duplicate entry " + name);
        ckpt.set(name, std::move(dims), std::move(data));
    }
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open " + path.string());
    const auto size = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw IoError("failed reading " + path.string());
    return parse(bytes);
}

void store_params(Checkpoint& ckpt, const ParamStore& store) {
    for (const std::string& name : store.names()) {
        const Tensor& t = store.get(name);
        std::vector<std::uint32_t> dims;
        for (int d : t.shape()) dims.push_back(static_cast<std::uint32_t>(d));
        auto data = t.data();
        ckpt.set(name, std::move(dims), std::vector<double>(data.begin(), data.end()));
    }
    for (const std::string& name : store.buffer_names()) {
        const std::vector<double>& b = store.buffer(name);
        ckpt.set(name, {static_cast<std::uint32_t>(b.size())}, b);
    }
}

void load_params(const Checkpoint& ckpt, ParamStore& store) {
    for (const std::string& name : store.names()) {
        Tensor& t = store.get(name);
        const CheckpointEntry& e = ckpt.get(name);
        Shape shape;
        for (std::uint32_t d : e.dims) shape.push_back(static_cast<int>(d));
        if (!shape_eq(shape, t.shape())) {
            throw FormatError("checkpoint entry " + name + " has shape " + shape_str(shape) +
                              ", model expects " + shape_str(t.shape()));
        }
        check_finite(e.data, "checkpoint parameter");
        auto dst = t.mutable_data();
        std::copy(e.data.begin(), e.data.end(), dst.begin());
    }
    for (const std::string& name : store.buffer_names()) {
        std::vector<double>& b = store.buffer(name);
        const CheckpointEntry& e = ckpt.get(name);
        if (e.data.size() != b.size()) {
            throw FormatError("checkpoint entry " + name + " has wrong length");
        }
        check_finite(e.data, "checkpoint buffer");
        b = e.data;
    }
}

}  // namespace depthfuse
