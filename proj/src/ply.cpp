#include "spikevol/ply.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace spikevol::geo {

namespace {

static_assert(std::endian::native == std::endian::little, "binary PLY support assumes a little-endian host");

enum class Scalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct Property {
    std::string name;
    Scalar type = Scalar::Float32;
    bool is_list = false;
    Scalar count_type = Scalar::UInt8;
};

struct Element {
    std::string name;
    std::uint64_t count = 0;
    std::vector<Property> properties;
};

std::size_t scalar_size(Scalar s) {
    switch (s) {
        case Scalar::Int8:
        case Scalar::UInt8: return 1;
        case Scalar::Int16:
        case Scalar::UInt16: return 2;
        case Scalar::Int32:
        case Scalar::UInt32:
        case Scalar::Float32: return 4;
        case Scalar::Float64: return 8;
    }
    return 0;
}

bool parse_scalar(const std::string& name, Scalar& out) {
    static const std::pair<const char*, Scalar> table[] = {
        {"char", Scalar::Int8},     {"int8", Scalar::Int8},     {"uchar", Scalar::UInt8},   {"uint8", Scalar::UInt8},
        {"short", Scalar::Int16},   {"int16", Scalar::Int16},   {"ushort", Scalar::UInt16}, {"uint16", Scalar::UInt16},
        {"int", Scalar::Int32},     {"int32", Scalar::Int32},   {"uint", Scalar::UInt32},   {"uint32", Scalar::UInt32},
        {"float", Scalar::Float32}, {"float32", Scalar::Float32}, {"double", Scalar::Float64}, {"float64", Scalar::Float64},
    };
    for (const auto& [key, value] : table) {
        if (name == key) {
            out = value;
            return true;
        }
    }
    return false;
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : data_(bytes) {}

    std::uint64_t offset() const { return pos_; }
    bool at_end() const { return pos_ >= data_.size(); }

    std::string line() {
        const auto end = data_.find('\n', pos_);
        if (end == std::string::npos) throw ParseError("unexpected end of header", pos_);
        std::string out = data_.substr(pos_, end - pos_);
        if (!out.empty() && out.back() == '\r') out.pop_back();
        pos_ = end + 1;
        return out;
    }

    double binary(Scalar s) {
        const std::size_t n = scalar_size(s);
        if (pos_ + n > data_.size()) throw ParseError("truncated binary payload", pos_);
        const char* p = data_.data() + pos_;
        pos_ += n;
        switch (s) {
            case Scalar::Int8: return static_cast<double>(static_cast<std::int8_t>(*p));
            case Scalar::UInt8: return static_cast<double>(static_cast<std::uint8_t>(*p));
            case Scalar::Int16: return load<std::int16_t>(p);
            case Scalar::UInt16: return load<std::uint16_t>(p);
            case Scalar::Int32: return load<std::int32_t>(p);
            case Scalar::UInt32: return load<std::uint32_t>(p);
            case Scalar::Float32: return load<float>(p);
            case Scalar::Float64: return load<double>(p);
        }
        return 0.0;
    }

    double ascii() {
        while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
        if (pos_ >= data_.size()) throw ParseError("unexpected end of ASCII payload", pos_);
        const char* begin = data_.data() + pos_;
        const char* end = data_.data() + data_.size();
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc{} ||
            (ptr < end && !std::isspace(static_cast<unsigned char>(*ptr)))) {
            throw ParseError("non-numeric value in payload", pos_);
        }
        pos_ += static_cast<std::size_t>(ptr - begin);
        return value;
    }

private:
    template <typename T>
    static double load(const char* p) {
        T v;
        std::memcpy(&v, p, sizeof(T));
        return static_cast<double>(v);
    }

    const std::string& data_;
    std::size_t pos_ = 0;
};

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

}  // namespace

TriangleMesh parse_ply(const std::string& bytes) {
    Reader reader(bytes);
    if (reader.line() != "ply") throw ParseError("missing 'ply' magic", 0);

    bool binary = false;
    bool have_format = false;
    std::vector<Element> elements;
    for (;;) {
        const auto at = reader.offset();
        const auto words = split_words(reader.line());
        if (words.empty()) continue;
        const auto& key = words[0];
        if (key == "end_header") break;
        if (key == "comment" || key == "obj_info") continue;
        if (key == "format") {
            if (words.size() < 2) throw ParseError("malformed format line", at);
            if (words[1] == "ascii") {
                binary = false;
            } else if (words[1] == "binary_little_endian") {
                binary = true;
            } else {
                throw ParseError("unsupported PLY format '" + words[1] + "'", at);
            }
            have_format = true;
        } else if (key == "element") {
            if (words.size() != 3) throw ParseError("malformed element line", at);
            Element e;
            e.name = words[1];
            const auto& c = words[2];
            const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), e.count);
            if (ec != std::errc{} || ptr != c.data() + c.size()) throw ParseError("bad element count", at);
            elements.push_back(std::move(e));
        } else if (key == "property") {
            if (elements.empty()) throw ParseError("property before any element", at);
            Property p;
            if (words.size() == 5 && words[1] == "list") {
                p.is_list = true;
                if (!parse_scalar(words[2], p.count_type) || !parse_scalar(words[3], p.type)) {
                    throw ParseError("unknown list property type", at);
                }
                p.name = words[4];
            } else if (words.size() == 3) {
                if (!parse_scalar(words[1], p.type)) throw ParseError("unknown property type '" + words[1] + "'", at);
                p.name = words[2];
            } else {
                throw ParseError("malformed property line", at);
            }
            elements.back().properties.push_back(std::move(p));
        } else {
            throw ParseError("unknown header keyword '" + key + "'", at);
        }
    }
    if (!have_format) throw ParseError("missing format line", reader.offset());

    auto value = [&](Scalar s) { return binary ? reader.binary(s) : reader.ascii(); };

    TriangleMesh mesh;
    std::uint64_t face_count_hint = 0;
    for (const auto& e : elements) {
        if (e.name == "face") face_count_hint = e.count;
    }
    mesh.faces.reserve(face_count_hint);
    std::uint64_t declared_vertices = 0;
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            declared_vertices = e.count;
            int ix = -1, iy = -1, iz = -1;
            for (std::size_t k = 0; k < e.properties.size(); ++k) {
                if (e.properties[k].name == "x") ix = static_cast<int>(k);
                if (e.properties[k].name == "y") iy = static_cast<int>(k);
                if (e.properties[k].name == "z") iz = static_cast<int>(k);
            }
            if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x/y/z", reader.offset());
            mesh.vertices.reserve(e.count);
            std::vector<double> row(e.properties.size());
            for (std::uint64_t i = 0; i < e.count; ++i) {
                for (std::size_t k = 0; k < e.properties.size(); ++k) {
                    const auto& p = e.properties[k];
                    if (p.is_list) {
                        const auto n = static_cast<std::uint64_t>(value(p.count_type));
                        for (std::uint64_t j = 0; j < n; ++j) value(p.type);
                        row[k] = 0.0;
                    } else {
                        row[k] = value(p.type);
                    }
                }
                mesh.vertices.push_back({row[ix], row[iy], row[iz]});
            }
        } else if (e.name == "face") {
            std::vector<std::uint32_t> poly;
            for (std::uint64_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.properties) {
                    if (!p.is_list) {
                        value(p.type);
                        continue;
                    }
                    const auto at = reader.offset();
                    const double count = value(p.count_type);
                    if (count < 0) throw ParseError("negative face vertex count", at);
                    poly.clear();
                    for (std::uint64_t j = 0; j < static_cast<std::uint64_t>(count); ++j) {
                        const auto idx_at = reader.offset();
                        const double idx = value(p.type);
                        if (idx < 0 || idx >= static_cast<double>(declared_vertices) || idx != std::floor(idx)) {
                            throw ParseError("face references vertex " + std::to_string(static_cast<long long>(idx)) +
                                                 " of " + std::to_string(declared_vertices),
                                             idx_at);
                        }
                        poly.push_back(static_cast<std::uint32_t>(idx));
                    }
                    if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
                    if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices", at);
                    for (std::size_t j = 1; j + 1 < poly.size(); ++j) mesh.faces.push_back({poly[0], poly[j], poly[j + 1]});
                }
            }
        } else {
            for (std::uint64_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.properties) {
                    if (p.is_list) {
                        const auto n = static_cast<std::uint64_t>(value(p.count_type));
                        for (std::uint64_t j = 0; j < n; ++j) value(p.type);
                    } else {
                        value(p.type);
                    }
                }
            }
        }
    }
    return mesh;
}

TriangleMesh load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open PLY file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ply(buf.str());
}

std::string serialize_ply(const TriangleMesh& mesh, PlyFormat format, const std::string& comment) {
    std::ostringstream out;
    out << "ply\n"
        << (format == PlyFormat::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n");
    if (!comment.empty()) out << "comment " << comment << '\n';
    out << "element vertex " << mesh.vertices.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "element face " << mesh.faces.size() << "\n"
        << "property list uchar int vertex_indices\n"
        << "end_header\n";
    if (format == PlyFormat::Ascii) {
        out.precision(17);
        for (const auto& v : mesh.vertices) out << v.x << ' ' << v.y << ' ' << v.z << '\n';
        for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    } else {
        for (const auto& v : mesh.vertices) {
            const double xyz[3] = {v.x, v.y, v.z};
            out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        }
        for (const auto& f : mesh.faces) {
            const unsigned char n = 3;
            const std::int32_t idx[3] = {static_cast<std::int32_t>(f[0]), static_cast<std::int32_t>(f[1]),
                                         static_cast<std::int32_t>(f[2])};
            out.write(reinterpret_cast<const char*>(&n), 1);
            out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
        }
    }
    return out.str();
}

void save_ply(const TriangleMesh& mesh, const std::filesystem::path& path, PlyFormat format, const std::string& comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write PLY file " + path.string());
    const auto bytes = serialize_ply(mesh, format, comment);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing PLY file " + path.string());
}

}  // namespace spikevol::geo
