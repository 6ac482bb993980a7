#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "polaron/fock.hpp"

// Persistence: CSV with a versioned schema header, JSON documents carrying
// the config hash and code version, and a little-endian binary container for
// operators and composite states (documented in docs/conventions.md).

namespace polaron {

static_assert(std::endian::native == std::endian::little,
              "binary container assumes a little-endian host");

using Json = nlohmann::ordered_json;

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigurationError("cannot open for writing: " + path.string());
    out << content;
}

inline std::string csv_header(const std::string& config_hash, const std::string& version) {
    return "# schema=1\n# config_hash=" + config_hash + "\n# version=" + version + "\n";
}

inline Json json_complex_array(const CVector& v) {
    Json re = Json::array(), im = Json::array();
    for (int i = 0; i < v.size(); ++i) {
        re.push_back(std::real(v[i]));
        im.push_back(std::imag(v[i]));
    }
    return Json{{"re", re}, {"im", im}};
}

// --- binary container ---------------------------------------------------------

namespace detail {

constexpr char kBinaryMagic[8] = {'P', 'L', 'R', 'N', 'B', 'I', 'N', '1'};

inline void put_bytes(std::ofstream& out, const void* data, size_t size) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

template <typename T>
void put(std::ofstream& out, T value) {
    put_bytes(out, &value, sizeof(T));
}

inline void get_bytes(std::ifstream& in, void* data, size_t size) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (!in) throw ConfigurationError("binary container: truncated file");
}

template <typename T>
T get(std::ifstream& in) {
    T value;
    get_bytes(in, &value, sizeof(T));
    return value;
}

}  // namespace detail

/// Layout: magic, kind=1, config-hash (8 bytes), n, L, M, cutoff, alpha,
/// then 2*n*D doubles (re, im interleaved).
inline void save_composite_state(const std::filesystem::path& path, const CompositeState& state,
                                 std::uint64_t config_hash) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigurationError("cannot open for writing: " + path.string());
    detail::put_bytes(out, detail::kBinaryMagic, 8);
    detail::put<std::uint32_t>(out, 1);
    detail::put<std::uint64_t>(out, config_hash);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.grid.points()));
    detail::put<double>(out, state.grid.length());
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.basis.modes()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.basis.cutoff()));
    detail::put<double>(out, state.alpha);
    for (int i = 0; i < state.coefficients.size(); ++i) {
        detail::put<double>(out, std::real(state.coefficients[i]));
        detail::put<double>(out, std::imag(state.coefficients[i]));
    }
}

struct LoadedState {
    CompositeState state;
    std::uint64_t config_hash;
};

inline LoadedState load_composite_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigurationError("cannot open: " + path.string());
    char magic[8];
    detail::get_bytes(in, magic, 8);
    if (!std::equal(magic, magic + 8, detail::kBinaryMagic))
        throw ConfigurationError("binary container: bad magic in " + path.string());
    if (detail::get<std::uint32_t>(in) != 1)
        throw ConfigurationError("binary container: not a composite state");
    const std::uint64_t hash = detail::get<std::uint64_t>(in);
    const int n = static_cast<int>(detail::get<std::uint32_t>(in));
    const double L = detail::get<double>(in);
    const int M = static_cast<int>(detail::get<std::uint32_t>(in));
    const int cutoff = static_cast<int>(detail::get<std::uint32_t>(in));
    const double alpha = detail::get<double>(in);
    Grid grid(n, L);
    FockBasis basis(M, cutoff);
    CVector coef(static_cast<std::int64_t>(n) * basis.dimension());
    for (int i = 0; i < coef.size(); ++i) {
        const double re = detail::get<double>(in);
        const double im = detail::get<double>(in);
        coef[i] = Complex(re, im);
    }
    return LoadedState{CompositeState{grid, basis, alpha, std::move(coef)}, hash};
}

/// Layout: magic, kind=2, dim, nnz, then triplets (row u32, col u32, re, im).
inline void save_sparse_operator(const std::filesystem::path& path, const SparseOperator& op,
                                 std::uint64_t config_hash) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigurationError("cannot open for writing: " + path.string());
    detail::put_bytes(out, detail::kBinaryMagic, 8);
    detail::put<std::uint32_t>(out, 2);
    detail::put<std::uint64_t>(out, config_hash);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(op.dimension()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(op.nonzeros()));
    detail::put<std::uint8_t>(out, op.hermitian() ? 1 : 0);
    const auto& m = op.matrix();
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(m, k); it; ++it) {
            detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(it.row()));
            detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(it.col()));
            detail::put<double>(out, std::real(it.value()));
            detail::put<double>(out, std::imag(it.value()));
        }
}

struct LoadedOperator {
    SparseOperator op;
    std::uint64_t config_hash;
};

inline LoadedOperator load_sparse_operator(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigurationError("cannot open: " + path.string());
    char magic[8];
    detail::get_bytes(in, magic, 8);
    if (!std::equal(magic, magic + 8, detail::kBinaryMagic))
        throw ConfigurationError("binary container: bad magic in " + path.string());
    if (detail::get<std::uint32_t>(in) != 2)
        throw ConfigurationError("binary container: not a sparse operator");
    const std::uint64_t hash = detail::get<std::uint64_t>(in);
    const int dim = static_cast<int>(detail::get<std::uint32_t>(in));
    const std::uint64_t nnz = detail::get<std::uint64_t>(in);
    const bool hermitian = detail::get<std::uint8_t>(in) != 0;
    std::vector<SparseOperator::Triplet> trips;
    trips.reserve(nnz);
    for (std::uint64_t i = 0; i < nnz; ++i) {
        const auto row = detail::get<std::uint32_t>(in);
        const auto col = detail::get<std::uint32_t>(in);
        const double re = detail::get<double>(in);
        const double im = detail::get<double>(in);
        trips.emplace_back(static_cast<int>(row), static_cast<int>(col), Complex(re, im));
    }
    return LoadedOperator{SparseOperator::from_triplets(dim, trips, hermitian), hash};
}

}  // namespace polaron
