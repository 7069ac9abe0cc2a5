#include "toolselect/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <zlib.h>

#include "toolselect/dataset_io.hpp"
#include "toolselect/errors.hpp"

namespace toolselect::checkpoint {

using diffcore::Tensor;

namespace {

constexpr char kMagic[4] = {'T', 'S', 'E', 'L'};

template <typename T>
void put(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t crc32_of(const char* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n));
    return static_cast<std::uint32_t>(crc);
}

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    template <typename T>
    T get(const char* field) {
        need(sizeof(T), field);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
        }
        pos_ += sizeof(T);
        return v;
    }

    std::string str(std::size_t n, const char* field) {
        need(n, field);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == end_; }

private:
    void need(std::size_t n, const char* field) {
        if (pos_ + n > end_) throw CorruptCheckpoint(std::string("checkpoint: truncated ") + field);
    }

    const std::string& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

} // namespace

std::string serialize(const anp::SelectorParams& params) {
    std::string out(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    const auto named = params.named();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractViolation("checkpoint: name too long");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t->rank()));
        for (std::size_t d : t->shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : t->data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    put<std::uint32_t>(out, crc32_of(out.data(), out.size()));
    return out;
}

std::vector<std::pair<std::string, Tensor>> parse(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CorruptCheckpoint("checkpoint: bad magic");
    if (bytes.size() < 8) throw CorruptCheckpoint("checkpoint: truncated version");
    Reader header(bytes, 8);
    header.str(4, "magic");
    const auto version = header.get<std::uint32_t>("version");
    if (version != kVersion) {
        throw UnsupportedVersion("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                                 std::to_string(kVersion) + ")");
    }
    if (bytes.size() < 16) throw CorruptCheckpoint("checkpoint: CRC mismatch (file truncated)");
    const std::size_t body = bytes.size() - 4;
    Reader crc_reader(bytes.substr(body), 4);
    if (crc_reader.get<std::uint32_t>("crc") != crc32_of(bytes.data(), body)) {
        throw CorruptCheckpoint("checkpoint: CRC mismatch");
    }

    Reader in(bytes, body);
    in.str(8, "header");
    const auto count = in.get<std::uint32_t>("tensor count");
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = in.get<std::uint16_t>("name length");
        std::string name = in.str(len, "name");
        const auto rank = in.get<std::uint8_t>("rank");
        diffcore::Shape shape;
        std::size_t n = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            shape.push_back(in.get<std::uint32_t>("dims"));
            n *= shape.back();
        }
        std::vector<double> values(n);
        for (double& v : values) v = static_cast<double>(std::bit_cast<float>(in.get<std::uint32_t>("values")));
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (!in.done()) throw CorruptCheckpoint("checkpoint: trailing bytes after tensors");
    return out;
}

anp::SelectorParams deserialize(const std::string& bytes, const anp::SelectorConfig& config) {
    auto tensors = parse(bytes);
    anp::SelectorParams params = anp::init_params(config, 0);
    auto named = params.named();
    if (named.size() != tensors.size()) {
        throw CorruptCheckpoint("checkpoint: tensor count " + std::to_string(tensors.size()) + " does not match " +
                                std::to_string(named.size()) + " selector tensors");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != tensors[i].first) {
            throw CorruptCheckpoint("checkpoint: tensor name '" + tensors[i].first + "', expected '" + named[i].first + "'");
        }
        if (named[i].second->shape() != tensors[i].second.shape()) {
            throw CorruptCheckpoint("checkpoint: tensor '" + named[i].first + "' has shape " +
                                    diffcore::shape_string(tensors[i].second.shape()) + ", expected " +
                                    diffcore::shape_string(named[i].second->shape()));
        }
        *named[i].second = std::move(tensors[i].second);
    }
    return params;
}

void save(const anp::SelectorParams& params, const std::filesystem::path& path) {
    dataset_io::write_atomic(path, serialize(params));
}

anp::SelectorParams load(const std::filesystem::path& path, const anp::SelectorConfig& config) {
    return deserialize(dataset_io::read_file(path), config);
}

} // namespace toolselect::checkpoint
