#include "gridformer/serialize.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "gridformer/errors.hpp"

namespace gridformer {

namespace {

constexpr char kMagic[4] = {'G', 'F', 'T', '1'};

// Scalars and extents are stored little-endian; this code assumes a
// little-endian host, which the build targets.
template <typename V>
void put(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is, const std::string& path, const char* what) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw FormatError(path + ": truncated while reading " + what);
    return v;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write(kMagic, 4);
    put<uint32_t>(os, static_cast<uint32_t>(t.shape().rank()));
    for (int i = 0; i < t.shape().rank(); ++i)
        put<uint32_t>(os, static_cast<uint32_t>(t.shape()[i]));
    put<uint8_t>(os, static_cast<uint8_t>(dtype_of<T>()));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_tensor(os, t);
    if (!os) throw IoError("write failed: " + path);
}

namespace {

struct Header {
    Shape shape;
    Dtype dtype;
};

Header read_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": not a GFT1 tensor file");
    const uint32_t rank = get<uint32_t>(is, path, "rank");
    if (rank < 1 || rank > 4)
        throw FormatError(path + ": rank " + std::to_string(rank) + " outside [1,4]");
    std::vector<int64_t> d(rank);
    for (uint32_t i = 0; i < rank; ++i) {
        const uint32_t e = get<uint32_t>(is, path, "extent");
        if (e == 0) throw FormatError(path + ": zero extent");
        d[i] = static_cast<int64_t>(e);
    }
    const uint8_t tag = get<uint8_t>(is, path, "dtype");
    if (tag > 1) throw FormatError(path + ": unknown dtype tag " + std::to_string(tag));
    Shape s;
    switch (rank) {
        case 1: s = Shape{d[0]}; break;
        case 2: s = Shape{d[0], d[1]}; break;
        case 3: s = Shape{d[0], d[1], d[2]}; break;
        default: s = Shape{d[0], d[1], d[2], d[3]}; break;
    }
    return Header{s, static_cast<Dtype>(tag)};
}

}  // namespace

template <typename T>
Tensor<T> read_tensor(std::istream& is, const std::string& where) {
    const Header h = read_header(is, where);
    if (h.dtype != dtype_of<T>())
        throw FormatError(where + ": stored dtype does not match the requested scalar type");
    std::vector<T> v(static_cast<size_t>(h.shape.numel()));
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(T)));
    if (!is) throw FormatError(where + ": truncated scalar payload");
    return Tensor<T>::from(h.shape, std::move(v));
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return read_tensor<T>(is, path);
}

Dtype tensor_file_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return read_header(is, path).dtype;
}

template void save_tensor<float>(const std::string&, const Tensor<float>&);
template void save_tensor<double>(const std::string&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(const std::string&);
template Tensor<double> load_tensor<double>(const std::string&);
template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&, const std::string&);
template Tensor<double> read_tensor<double>(std::istream&, const std::string&);

}  // namespace gridformer
