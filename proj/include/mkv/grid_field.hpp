#pragma once

#include "mkv/common.hpp"

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mkv {

/// Scalar field on the box [-L, L)^d sampled at x_j = -L + j * (2L/n),
/// j = 0..n-1 per axis, stored row-major (last axis fastest).
struct GridField {
    int d = 1;
    int n = 0;
    double L = 1.0;
    double time = 0.0;
    std::vector<double> values;

    static GridField zeros(int d, int n, double L, double time = 0.0);

    double spacing() const { return 2.0 * L / n; }
    double cell_volume() const;
    std::size_t size() const { return values.size(); }
    double coord(int j) const { return -L + j * spacing(); }
    /// Node position for a flat index.
    Point node(std::size_t flat) const;
    std::size_t flat_index(const std::array<int, kMaxDim>& idx) const;
    /// Sum of values times cell volume.
    double integral() const;
    bool same_grid(const GridField& o) const { return d == o.d && n == o.n && L == o.L; }

    /// Binary layout: u32 d, u32 n, f64 L, f64 time, then n^d f64 values.
    void save(const std::filesystem::path& file) const;
    static GridField load(const std::filesystem::path& file);
};

/// Throws ConfigError("grid mismatch ...") unless both fields share d, n and L.
void require_same_grid(const GridField& a, const GridField& b);

} // namespace mkv
