#include "kolstack/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace kolstack {

namespace {

constexpr char kMagic[8] = {'K', 'S', 'F', 'L', 'D', '0', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

void dump_field_binary(const Grid& grid, const Field& field, const std::string& path) {
    require_shape(grid, field, "dump_field_binary");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("dump_field_binary: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof kMagic);
    write_u32(os, field.kind == FieldKind::slice ? 0u : 1u);
    write_u32(os, static_cast<std::uint32_t>(grid.n_axes()));
    for (int a = 0; a < grid.n_axes(); ++a)
        write_u64(os, static_cast<std::uint64_t>(grid.dim(a)));
    write_u64(os, static_cast<std::uint64_t>(field.n_slices()));
    for (int k = 0; k < field.n_slices(); ++k)
        os.write(reinterpret_cast<const char*>(field.values.col(k).data()),
                 static_cast<std::streamsize>(sizeof(double)) * grid.n_nodes());
    if (!os) throw ConfigError("dump_field_binary: write to '" + path + "' failed");
}

Field load_field_binary(const Grid& grid, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("load_field_binary: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw ConfigError("load_field_binary: '" + path + "' is not a field file");
    const std::uint32_t kind = read_u32(is);
    const std::uint32_t n_axes = read_u32(is);
    if (n_axes != static_cast<std::uint32_t>(grid.n_axes()))
        throw ConfigError("load_field_binary: axis count does not match the grid");
    for (int a = 0; a < grid.n_axes(); ++a)
        if (read_u64(is) != static_cast<std::uint64_t>(grid.dim(a)))
            throw ConfigError("load_field_binary: axis dimensions do not match the grid");
    const std::uint64_t n_slices = read_u64(is);

    Field field;
    field.kind = (kind == 0u) ? FieldKind::slice : FieldKind::spacetime;
    const std::uint64_t expected =
        (field.kind == FieldKind::slice) ? 1u : static_cast<std::uint64_t>(grid.n_slices());
    if (n_slices != expected)
        throw ConfigError("load_field_binary: slice count does not match the grid");
    field.values.resize(grid.n_nodes(), static_cast<int>(n_slices));
    for (std::uint64_t k = 0; k < n_slices; ++k)
        is.read(reinterpret_cast<char*>(field.values.col(static_cast<int>(k)).data()),
                static_cast<std::streamsize>(sizeof(double)) * grid.n_nodes());
    if (!is) throw ConfigError("load_field_binary: truncated file '" + path + "'");
    return field;
}

namespace {

void write_csv_slice(const Grid& grid, const Eigen::Ref<const VectorXd>& values,
                     const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("dump_field_csv: cannot open '" + path + "' for writing");
    for (int a = 0; a < grid.n_axes(); ++a) os << "x" << a + 1 << ",";
    os << "value\n";
    os << std::setprecision(17);
    for (int node = 0; node < grid.n_nodes(); ++node) {
        for (int a = 0; a < grid.n_axes(); ++a) os << grid.coord(node, a) << ",";
        os << values[node] << "\n";
    }
    if (!os) throw ConfigError("dump_field_csv: write to '" + path + "' failed");
}

}  // namespace

void dump_field_csv(const Grid& grid, const Field& field, const std::string& path) {
    require_shape(grid, field, "dump_field_csv");
    if (field.kind == FieldKind::slice) {
        write_csv_slice(grid, field.values.col(0), path);
        return;
    }
    const std::string stem =
        path.size() > 4 && path.substr(path.size() - 4) == ".csv" ? path.substr(0, path.size() - 4)
                                                                  : path;
    for (int k = 0; k < field.n_slices(); ++k) {
        std::ostringstream name;
        name << stem << "_t" << std::setfill('0') << std::setw(4) << k << ".csv";
        write_csv_slice(grid, field.values.col(k), name.str());
    }
}

void dump_field(const Grid& grid, const Field& field, const std::string& path,
                FieldFormat format) {
    if (format == FieldFormat::binary)
        dump_field_binary(grid, field, path);
    else
        dump_field_csv(grid, field, path);
}

}  // namespace kolstack
