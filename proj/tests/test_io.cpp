#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "schrodlab/errors.hpp"
#include "schrodlab/io.hpp"

using namespace schrodlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("schrodlab_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

BasisPtr small_basis(double beta1 = 2.0) {
    return eigensolve(assemble(Grid::build(1, 8.0, 129), Potential::polynomial_radial(beta1)), EigenRequest::lowest(6));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(FormatDouble, RoundTripsBitExactly) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20000; ++i) {
        const double v = std::bit_cast<double>(rng());
        if (std::isnan(v)) continue;
        const std::string s = format_double(v);
        EXPECT_EQ(std::bit_cast<std::uint64_t>(std::strtod(s.c_str(), nullptr)), std::bit_cast<std::uint64_t>(v)) << s;
    }
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_EQ(format_double(std::nan("")), "nan");
    EXPECT_EQ(format_double(-0.0), "-0");
}

TEST(Csv, RoundTripIsLossless) {
    const fs::path dir = scratch("csv");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    CsvTable t{{"a", "b", "c"}, {}};
    for (int i = 0; i < 500; ++i) t.rows.push_back({u(rng), std::ldexp(u(rng), -1060), static_cast<double>(i)});
    t.rows.push_back({std::numeric_limits<double>::infinity(), -0.0, std::numeric_limits<double>::denorm_min()});
    write_csv(dir / "t.csv", t);
    const CsvTable back = read_csv(dir / "t.csv");
    EXPECT_EQ(back.header, t.header);
    ASSERT_EQ(back.rows.size(), t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_EQ(std::bit_cast<std::uint64_t>(back.rows[i][j]), std::bit_cast<std::uint64_t>(t.rows[i][j]));
    write_csv(dir / "u.csv", back);
    EXPECT_EQ(slurp(dir / "t.csv"), slurp(dir / "u.csv"));
}

TEST(Csv, Errors) {
    const fs::path dir = scratch("csv_err");
    EXPECT_THROW(write_csv(dir / "x.csv", CsvTable{{"a", "b"}, {{1.0}}}), std::invalid_argument);
    std::ofstream(dir / "bad.csv") << "a,b\n1,zz\n";
    EXPECT_THROW(read_csv(dir / "bad.csv"), std::runtime_error);
    std::ofstream(dir / "short.csv") << "a,b\n1\n";
    EXPECT_THROW(read_csv(dir / "short.csv"), std::runtime_error);
    EXPECT_THROW(read_csv(dir / "missing.csv"), std::runtime_error);
}

TEST(Cache, SaveLoadIsBitIdentical) {
    const fs::path dir = scratch("cache");
    const BasisPtr b = small_basis();
    save_basis(dir / "b.bin", *b);
    const BasisPtr c = load_basis(dir / "b.bin", b->grid(), b->potential_hash(), b->request());
    EXPECT_EQ(c->grid(), b->grid());
    EXPECT_EQ(c->potential_hash(), b->potential_hash());
    EXPECT_TRUE(c->request() == b->request());
    ASSERT_EQ(c->size(), b->size());
    for (Eigen::Index k = 0; k < b->size(); ++k) EXPECT_EQ(c->eigenvalues()[k], b->eigenvalues()[k]);
    EXPECT_TRUE((c->eigenvectors().array() == b->eigenvectors().array()).all());
    const std::string bytes = slurp(dir / "b.bin");
    EXPECT_EQ(bytes.substr(0, 8), "SCHRBAS1");
    EXPECT_EQ(bytes.size(), 8 + 4 + 4 + 8 * 8 + 8 * (6 + 129 * 6) + 8);
}

TEST(Cache, RejectsMismatchAndCorruption) {
    const fs::path dir = scratch("cache_bad");
    const BasisPtr b = small_basis();
    save_basis(dir / "b.bin", *b);
    const Grid other_grid = Grid::build(1, 8.0, 131);
    EXPECT_THROW(load_basis(dir / "b.bin", other_grid, b->potential_hash(), b->request()), CacheError);
    EXPECT_THROW(load_basis(dir / "b.bin", b->grid(), b->potential_hash() + 1, b->request()), CacheError);
    EXPECT_THROW(load_basis(dir / "b.bin", b->grid(), b->potential_hash(), EigenRequest::lowest(7)), CacheError);

    const std::string bytes = slurp(dir / "b.bin");
    std::ofstream(dir / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 9);
    EXPECT_THROW(load_basis(dir / "trunc.bin"), CacheError);
    std::string flipped = bytes;
    flipped[200] ^= 0x10;
    std::ofstream(dir / "flip.bin", std::ios::binary) << flipped;
    EXPECT_THROW(load_basis(dir / "flip.bin"), CacheError);
    std::string magic = bytes;
    magic[0] = 'X';
    std::ofstream(dir / "magic.bin", std::ios::binary) << magic;
    EXPECT_THROW(load_basis(dir / "magic.bin"), CacheError);
    EXPECT_THROW(load_basis(dir / "none.bin"), CacheError);
}

TEST(Cache, FileNameTracksGridPotentialAndCutoff) {
    const Grid g = Grid::build(1, 8.0, 129);
    const std::uint64_t p = Potential::polynomial_radial(2.0).hash();
    const std::string base = cache_file_name(g, p, EigenRequest::lowest(6));
    EXPECT_NE(base, cache_file_name(Grid::build(1, 8.0, 131), p, EigenRequest::lowest(6)));
    EXPECT_NE(base, cache_file_name(g, Potential::polynomial_radial(4.0).hash(), EigenRequest::lowest(6)));
    EXPECT_NE(base, cache_file_name(g, p, EigenRequest::lowest(7)));
    EXPECT_NE(base, cache_file_name(g, p, EigenRequest::below(6.0)));
    EXPECT_EQ(base, cache_file_name(g, p, EigenRequest::lowest(6)));
}

TEST(Cache, CachedEigensolveHitsOnSecondCall) {
    const fs::path dir = scratch("cache_hit");
    const DiscreteOperator op = assemble(Grid::build(1, 8.0, 129), Potential::polynomial_radial(2.0));
    const CacheLookup first = cached_eigensolve(dir, op, EigenRequest::lowest(6));
    EXPECT_FALSE(first.hit);
    EXPECT_TRUE(fs::exists(first.file));
    const CacheLookup second = cached_eigensolve(dir, op, EigenRequest::lowest(6));
    EXPECT_TRUE(second.hit);
    EXPECT_TRUE((second.basis->eigenvectors().array() == first.basis->eigenvectors().array()).all());
    const DiscreteOperator changed = assemble(Grid::build(1, 8.0, 129), Potential::polynomial_radial(4.0));
    const CacheLookup third = cached_eigensolve(dir, changed, EigenRequest::lowest(6));
    EXPECT_FALSE(third.hit);
    EXPECT_NE(third.file, first.file);
    EXPECT_FALSE(first.replaced);

    std::string bytes = slurp(first.file);
    bytes[100] ^= 0x01;
    std::ofstream(first.file, std::ios::binary | std::ios::trunc) << bytes;
    const CacheLookup healed = cached_eigensolve(dir, op, EigenRequest::lowest(6));
    EXPECT_FALSE(healed.hit);
    EXPECT_TRUE(healed.replaced.has_value());
    EXPECT_TRUE((healed.basis->eigenvectors().array() == first.basis->eigenvectors().array()).all());
    EXPECT_TRUE(cached_eigensolve(dir, op, EigenRequest::lowest(6)).hit);
    for (const auto& e : fs::directory_iterator(dir)) EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos);
}

TEST(Cache, EnvironmentDirectory) {
    ::setenv("SCHRODLAB_CACHE_DIR", "/tmp/schrodlab-env-cache", 1);
    ASSERT_TRUE(cache_dir_from_env().has_value());
    EXPECT_EQ(*cache_dir_from_env(), fs::path("/tmp/schrodlab-env-cache"));
    ::setenv("SCHRODLAB_CACHE_DIR", "", 1);
    EXPECT_FALSE(cache_dir_from_env().has_value());
    ::unsetenv("SCHRODLAB_CACHE_DIR");
    EXPECT_FALSE(cache_dir_from_env().has_value());
}
