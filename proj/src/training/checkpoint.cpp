#include "chroma/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "chroma/errors.hpp"

namespace chroma::training {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'A', 'N'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::string_view s) {
        if (s.size() > UINT32_MAX) throw Error("checkpoint string too long");
        u32(static_cast<std::uint32_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> in, const std::string& source) : in_(in), source_(source) {}

    std::uint8_t u8() {
        need(1, "u8");
        return in_[pos_++];
    }
    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(const char* what) {
        const std::uint32_t n = u32();
        need(n, what);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void expect_magic() {
        need(4, "magic");
        if (std::memcmp(in_.data(), kMagic, 4) != 0) fail("bad magic (not a checkpoint)");
        pos_ += 4;
    }
    bool done() const { return pos_ == in_.size(); }
    std::size_t pos() const { return pos_; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError("corrupt checkpoint " + source_ + ": " + msg + " at offset " + std::to_string(pos_));
    }

private:
    void need(std::size_t n, const char* what) const {
        if (in_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
    }

    std::span<const std::uint8_t> in_;
    const std::string& source_;
    std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t.value;
    }
    throw DataError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return true;
    }
    return false;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(ck.version);
    w.bytes(ck.header.dump());
    w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, value] : ck.tensors) {
        w.bytes(name);
        if (value.rank() > 255) throw Error("tensor rank too large for checkpoint: " + name);
        w.u8(static_cast<std::uint8_t>(value.rank()));
        for (int d : value.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : value.data()) w.f32(v);
    }
    w.bytes(ck.rng_state);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
    Reader r(bytes, source);
    r.expect_magic();
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != kCheckpointVersion) {
        r.fail("unsupported version " + std::to_string(ck.version));
    }
    const std::string header = r.bytes("header");
    try {
        ck.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        r.fail(std::string("header is not valid JSON (") + e.what() + ")");
    }
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor entry;
        entry.name = r.bytes("tensor name");
        const int rank = r.u8();
        Shape shape(static_cast<std::size_t>(rank));
        std::size_t numel = 1;
        for (int& d : shape) {
            const std::uint32_t v = r.u32();
            if (v == 0 || v > static_cast<std::uint32_t>(INT32_MAX)) r.fail("bad dimension in " + entry.name);
            d = static_cast<int>(v);
            numel *= v;
        }
        if (numel > (bytes.size() - r.pos()) / 4) r.fail("truncated tensor " + entry.name);
        std::vector<float> values(numel);
        for (float& v : values) v = r.f32();
        entry.value = Tensor(std::move(shape), std::move(values));
        ck.tensors.push_back(std::move(entry));
    }
    ck.rng_state = r.bytes("rng state");
    if (!r.done()) {
        r.fail("trailing bytes");
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const auto bytes = encode_checkpoint(ck);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("failed writing checkpoint " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes, path.string());
}

}  // namespace chroma::training
