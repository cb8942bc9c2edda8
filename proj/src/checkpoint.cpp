#include "drl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <zlib.h>

namespace drl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'R', 'L', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_pod(std::vector<char>& out, T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

    template <typename T>
    T pod() {
        T value;
        std::memcpy(&value, take(sizeof(T)), sizeof(T));
        return value;
    }

    const char* take(std::size_t n) {
        if (n > size_ - pos_) throw IntegrityError("checkpoint payload is truncated");
        const char* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    [[nodiscard]] bool done() const { return pos_ == size_; }

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const char* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

void Checkpoint::put(const ParamList<float>& params) {
    for (const auto& p : params) tensors[p.name] = p.var.value();
}

void Checkpoint::restore(const ParamList<float>& params) const {
    for (const auto& p : params) {
        const auto it = tensors.find(p.name);
        if (it == tensors.end()) throw IntegrityError("checkpoint has no tensor named " + p.name);
        if (!(it->second.shape() == p.var.shape())) {
            throw IntegrityError("checkpoint tensor " + p.name + " has shape " + it->second.shape().str() +
                                 ", expected " + p.var.shape().str());
        }
        const_cast<Var<float>&>(p.var).mutable_value() = it->second;
    }
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    const auto it = tensors.lower_bound(prefix);
    return it != tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    std::vector<char> payload;
    const std::string header = checkpoint.header.dump();
    put_pod<std::uint64_t>(payload, header.size());
    payload.insert(payload.end(), header.begin(), header.end());
    put_pod<std::uint32_t>(payload, static_cast<std::uint32_t>(checkpoint.tensors.size()));
    for (const auto& [name, tensor] : checkpoint.tensors) {
        put_pod<std::uint32_t>(payload, static_cast<std::uint32_t>(name.size()));
        payload.insert(payload.end(), name.begin(), name.end());
        const Shape& s = tensor.shape();
        for (int d : {s.n, s.c, s.h, s.w}) put_pod<std::int32_t>(payload, d);
        const auto* bytes = reinterpret_cast<const char*>(tensor.ptr());
        payload.insert(payload.end(), bytes, bytes + tensor.size() * sizeof(float));
    }

    std::vector<char> file(std::begin(kMagic), std::end(kMagic));
    put_pod<std::uint32_t>(file, kCheckpointVersion);
    put_pod<std::uint64_t>(file, payload.size());
    put_pod<std::uint32_t>(file, crc32_of(payload.data(), payload.size()));
    file.insert(file.end(), payload.begin(), payload.end());

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        out.write(file.data(), static_cast<std::streamsize>(file.size()));
        if (!out) throw IoError("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::vector<char> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    constexpr std::size_t kPrefix = sizeof(kMagic) + 4 + 8 + 4;
    if (file.size() < kPrefix) throw IntegrityError("checkpoint " + path.string() + " is truncated");
    if (std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IntegrityError(path.string() + " is not a checkpoint");
    }
    Reader head(file.data() + sizeof(kMagic), kPrefix - sizeof(kMagic));
    const auto version = head.pod<std::uint32_t>();
    const auto size = head.pod<std::uint64_t>();
    const auto crc = head.pod<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw IntegrityError("checkpoint version " + std::to_string(version) + " is not supported");
    }
    if (size != file.size() - kPrefix) throw IntegrityError("checkpoint " + path.string() + " is truncated");
    const char* payload = file.data() + kPrefix;
    if (crc32_of(payload, size) != crc) throw IntegrityError("checkpoint checksum mismatch in " + path.string());

    Checkpoint out;
    Reader r(payload, size);
    const auto header_len = r.pod<std::uint64_t>();
    const char* header = r.take(header_len);
    try {
        out.header = nlohmann::json::parse(header, header + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("checkpoint header: ") + e.what());
    }
    const auto count = r.pod<std::uint32_t>();
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = r.pod<std::uint32_t>();
        const char* name = r.take(name_len);
        Shape s;
        s.n = r.pod<std::int32_t>();
        s.c = r.pod<std::int32_t>();
        s.h = r.pod<std::int32_t>();
        s.w = r.pod<std::int32_t>();
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw IntegrityError("checkpoint tensor has negative shape");
        Tensor<float> tensor(s);
        const auto bytes = static_cast<std::size_t>(tensor.size()) * sizeof(float);
        std::memcpy(tensor.ptr(), r.take(bytes), bytes);
        out.tensors.emplace(std::string(name, name_len), std::move(tensor));
    }
    if (!r.done()) throw IntegrityError("checkpoint has trailing bytes");
    return out;
}

}  // namespace drl
