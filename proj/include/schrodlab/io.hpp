#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "schrodlab/schrodinger.hpp"

namespace schrodlab {

/// printf "%.17g"; "inf", "-inf" and "nan" for non-finite values. Parses back
/// bit-identically with std::strtod.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Comma-separated, one header line, every value through format_double.
/// Throws std::invalid_argument when a row's width differs from the header.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string to_csv(const CsvTable& table);
/// Throws std::runtime_error on an unreadable file or a malformed value.
CsvTable read_csv(const std::filesystem::path& path);

/// Binary eigenbasis cache, all fields little-endian:
///   char[8]  "SCHRBAS1"
///   u32      format version (1)
///   u32      dim
///   f64      half_width
///   u64      points_per_axis
///   u64      grid hash
///   u64      potential hash
///   u64      request kind (0 lambda_max, 1 count)
///   f64      request value
///   u64      number of eigenpairs n
///   u64      rows (grid nodes) m
///   f64[n]   eigenvalues
///   f64[m*n] eigenvectors, column by column
///   u64      FNV-1a of every preceding byte
inline constexpr char cache_magic[8] = {'S', 'C', 'H', 'R', 'B', 'A', 'S', '1'};
inline constexpr std::uint32_t cache_version = 1;

void save_basis(const std::filesystem::path& path, const EigenBasis& basis);
/// Throws CacheError on a missing, truncated or corrupt file.
BasisPtr load_basis(const std::filesystem::path& path);
/// Also throws CacheError when the file belongs to another grid, potential
/// or request.
BasisPtr load_basis(const std::filesystem::path& path, const Grid& grid, std::uint64_t potential_hash,
                    const EigenRequest& request);

/// File name derived from the (grid, potential, request) triple.
std::string cache_file_name(const Grid& grid, std::uint64_t potential_hash, const EigenRequest& request);

/// Directory named by SCHRODLAB_CACHE_DIR, if set and nonempty.
std::optional<std::filesystem::path> cache_dir_from_env();

struct CacheLookup {
    BasisPtr basis;
    bool hit = false;
    /// Set when an unreadable or mismatched cache file was replaced.
    std::optional<std::string> replaced;
    std::filesystem::path file;
};

/// Loads the basis for (op, request) from `dir` or computes and stores it.
/// A corrupt or mismatched file is recomputed and overwritten.
/// Files are written to a temporary name and renamed into place, so readers
/// never see a partial file.
CacheLookup cached_eigensolve(const std::filesystem::path& dir, const DiscreteOperator& op,
                              const EigenRequest& request, const EigenOptions& options = {});

}  // namespace schrodlab
