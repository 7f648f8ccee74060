#include "declust/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "declust/errors.hpp"

namespace declust {

namespace {

constexpr char kMagic[8] = {'D', 'C', 'L', 'T', 'N', 'S', 'R', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw std::invalid_argument("container: truncated at offset " + std::to_string(pos));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<std::uint8_t> container_to_bytes(const std::vector<NamedTensor>& items) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u64(out, items.size());
    for (const NamedTensor& item : items) {
        put_u32(out, static_cast<std::uint32_t>(item.name.size()));
        out.insert(out.end(), item.name.begin(), item.name.end());
        put_u32(out, static_cast<std::uint32_t>(item.value.rank()));
        for (std::size_t d : item.value.shape) put_u64(out, d);
        for (double v : item.value.data) put_f64(out, v);
    }
    return out;
}

std::vector<NamedTensor> container_from_bytes(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    if (r.str(8) != std::string(kMagic, 8))
        throw std::invalid_argument("container: bad magic");
    std::uint64_t count = r.u64();
    std::vector<NamedTensor> items;
    items.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor item;
        item.name = r.str(r.u32());
        std::uint32_t rank = r.u32();
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(r.u64());
        std::size_t n = shape_numel(shape);
        std::vector<double> data(n);
        for (std::size_t j = 0; j < n; ++j) data[j] = r.f64();
        item.value = Tensor(std::move(shape), std::move(data));
        items.push_back(std::move(item));
    }
    if (r.pos != bytes.size())
        throw std::invalid_argument("container: trailing bytes at offset " + std::to_string(r.pos));
    return items;
}

void save_container(const std::string& path, const std::vector<NamedTensor>& items) {
    write_file_bytes(path, container_to_bytes(items));
}

std::vector<NamedTensor> load_container(const std::string& path) {
    return container_from_bytes(read_file_bytes(path));
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failed: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

void write_file_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

std::string read_file_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failed: " + path);
    return s;
}

}  // namespace declust
