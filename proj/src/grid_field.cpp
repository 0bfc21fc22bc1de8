#include "mkv/grid_field.hpp"

#include <fstream>

namespace mkv {

GridField GridField::zeros(int d, int n, double L, double time) {
    if (d < 1 || d > kMaxDim) throw ConfigError("grid dimension must be in {1,2,3}");
    if (n < 2) throw ConfigError("grid needs at least 2 points per dimension");
    if (!(L > 0.0)) throw ConfigError("grid half-width must be positive");
    GridField g;
    g.d = d;
    g.n = n;
    g.L = L;
    g.time = time;
    std::size_t count = 1;
    for (int a = 0; a < d; ++a) count *= static_cast<std::size_t>(n);
    g.values.assign(count, 0.0);
    return g;
}

double GridField::cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < d; ++a) v *= spacing();
    return v;
}

Point GridField::node(std::size_t flat) const {
    Point x{};
    for (int a = d - 1; a >= 0; --a) {
        x[a] = coord(static_cast<int>(flat % n));
        flat /= n;
    }
    return x;
}

std::size_t GridField::flat_index(const std::array<int, kMaxDim>& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < d; ++a) f = f * n + static_cast<std::size_t>(idx[a]);
    return f;
}

double GridField::integral() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * cell_volume();
}

void GridField::save(const std::filesystem::path& file) const {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write grid field " + file.string());
    auto d32 = static_cast<std::uint32_t>(d), n32 = static_cast<std::uint32_t>(n);
    os.write(reinterpret_cast<const char*>(&d32), sizeof d32);
    os.write(reinterpret_cast<const char*>(&n32), sizeof n32);
    os.write(reinterpret_cast<const char*>(&L), sizeof L);
    os.write(reinterpret_cast<const char*>(&time), sizeof time);
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!os) throw ConfigError("failed writing grid field " + file.string());
}

GridField GridField::load(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw ConfigError("cannot open grid field " + file.string());
    std::uint32_t d32 = 0, n32 = 0;
    double L = 0.0, time = 0.0;
    is.read(reinterpret_cast<char*>(&d32), sizeof d32);
    is.read(reinterpret_cast<char*>(&n32), sizeof n32);
    is.read(reinterpret_cast<char*>(&L), sizeof L);
    is.read(reinterpret_cast<char*>(&time), sizeof time);
    if (!is) throw ConfigError("truncated grid field header in " + file.string());
    GridField g = zeros(static_cast<int>(d32), static_cast<int>(n32), L, time);
    is.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    if (!is) throw ConfigError("truncated grid field values in " + file.string());
    return g;
}

void require_same_grid(const GridField& a, const GridField& b) {
    if (!a.same_grid(b))
        throw ConfigError("grid mismatch: (d=" + std::to_string(a.d) + ", n=" + std::to_string(a.n) +
                          ", L=" + std::to_string(a.L) + ") vs (d=" + std::to_string(b.d) + ", n=" +
                          std::to_string(b.n) + ", L=" + std::to_string(b.L) + ")");
}

} // namespace mkv
