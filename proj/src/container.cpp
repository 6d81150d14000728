#include "nert/container.hpp"

#include <bit>
#include <cstring>

#include "nert/errors.hpp"
#include "nert/io.hpp"

namespace nert::io {

namespace {

static_assert(std::endian::native == std::endian::little, "container encoding assumes a little-endian host");

template <typename T>
void append(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

void append_string(std::string& out, const std::string& s) {
    append<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("truncated array container");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void ArrayContainer::put(const std::string& name, std::vector<std::uint64_t> shape, std::vector<double> values,
                         DType dtype) {
    std::uint64_t count = 1;
    for (auto d : shape) count *= d;
    if (count != values.size()) throw DomainError("array '" + name + "' shape does not match value count");
    NamedArray a;
    a.shape = std::move(shape);
    a.dtype = dtype;
    a.values = std::move(values);
    if (dtype == DType::Float32) {
        for (double& v : a.values) v = static_cast<double>(static_cast<float>(v));
    }
    arrays[name] = std::move(a);
}

const NamedArray& ArrayContainer::at(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw DataError("container has no array named '" + name + "'");
    return it->second;
}

std::string ArrayContainer::serialize() const {
    std::string out;
    append_string(out, magic);
    append_string(out, metadata.dump());
    append<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, a] : arrays) {
        append_string(out, name);
        append<std::uint8_t>(out, static_cast<std::uint8_t>(a.dtype));
        append<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) append<std::uint64_t>(out, d);
        if (a.dtype == DType::Float32) {
            for (double v : a.values) append<float>(out, static_cast<float>(v));
        } else {
            for (double v : a.values) append<double>(out, v);
        }
    }
    return out;
}

ArrayContainer ArrayContainer::deserialize(const std::string& bytes) {
    Reader in(bytes);
    ArrayContainer c;
    c.magic = in.get_string();
    try {
        c.metadata = nlohmann::json::parse(in.get_string());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("container metadata is not JSON: ") + e.what());
    }
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = in.get_string();
        const auto dtype = in.get<std::uint8_t>();
        if (dtype > 1) throw DataError("unknown dtype tag in array '" + name + "'");
        const auto ndim = in.get<std::uint32_t>();
        NamedArray a;
        a.dtype = static_cast<DType>(dtype);
        std::uint64_t total = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            a.shape.push_back(in.get<std::uint64_t>());
            total *= a.shape.back();
        }
        if (total > bytes.size()) throw DataError("array '" + name + "' larger than file");
        a.values.resize(total);
        for (auto& v : a.values) {
            v = a.dtype == DType::Float32 ? static_cast<double>(in.get<float>()) : in.get<double>();
        }
        c.arrays.emplace(std::move(name), std::move(a));
    }
    if (!in.done()) throw DataError("trailing bytes after array container");
    return c;
}

void ArrayContainer::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, serialize());
}

ArrayContainer ArrayContainer::load(const std::filesystem::path& path, const std::string& expected_magic) {
    ArrayContainer c = deserialize(read_file(path));
    if (!expected_magic.empty() && c.magic != expected_magic) {
        throw DataError("unexpected container header '" + c.magic + "' in " + path.string() + " (want '" +
                        expected_magic + "')");
    }
    return c;
}

}  // namespace nert::io
