#include "schrodlab/io.hpp"

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "schrodlab/errors.hpp"
#include "schrodlab/hash.hpp"

namespace schrodlab {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string to_csv(const CsvTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out += ',';
        out += table.header[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw std::invalid_argument("CSV row width differs from the header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    const std::string text = to_csv(table);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty CSV");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size())
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != t.header.size())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": row width differs from header");
        t.rows.push_back(std::move(row));
    }
    return t;
}

namespace {

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.append(c, n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    const std::string& data() const noexcept { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string name) : data_(data), name_(std::move(name)) {}
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw CacheError(name_ + ": truncated cache file");
    }
    const std::string& data_;
    std::string name_;
    std::size_t pos_ = 0;
};

std::uint64_t checksum(const std::string& data, std::size_t n) {
    Fnv1a h;
    h.bytes(data.data(), n);
    return h.value();
}

std::uint64_t request_code(const EigenRequest& r) { return r.kind == EigenRequest::Kind::lambda_max ? 0 : 1; }

}  // namespace

void save_basis(const std::filesystem::path& path, const EigenBasis& basis) {
    Writer w;
    w.raw(cache_magic, sizeof cache_magic);
    w.u32(cache_version);
    const Grid& g = basis.grid();
    w.u32(static_cast<std::uint32_t>(g.dim()));
    w.f64(g.half_width());
    w.u64(static_cast<std::uint64_t>(g.points_per_axis()));
    w.u64(g.hash());
    w.u64(basis.potential_hash());
    w.u64(request_code(basis.request()));
    w.f64(basis.request().value);
    const auto n = static_cast<std::uint64_t>(basis.size());
    const auto m = static_cast<std::uint64_t>(basis.eigenvectors().rows());
    w.u64(n);
    w.u64(m);
    for (Eigen::Index k = 0; k < basis.size(); ++k) w.f64(basis.eigenvalues()[k]);
    const Eigen::MatrixXd& v = basis.eigenvectors();
    for (Eigen::Index c = 0; c < v.cols(); ++c)
        for (Eigen::Index r = 0; r < v.rows(); ++r) w.f64(v(r, c));
    const std::uint64_t sum = checksum(w.data(), w.data().size());
    w.u64(sum);

    static std::atomic<unsigned> counter{0};
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
           std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheError("cannot write cache file " + tmp.string());
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        if (!out) throw CacheError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

BasisPtr load_basis(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CacheError("cannot read cache file " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = path.string();
    Reader r(data, name);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, cache_magic, sizeof magic) != 0) throw CacheError(name + ": not an eigenbasis cache file");
    if (const std::uint32_t ver = r.u32(); ver != cache_version)
        throw CacheError(name + ": unsupported cache version " + std::to_string(ver));
    const auto dim = static_cast<int>(r.u32());
    const double hw = r.f64();
    const auto ppa = static_cast<int>(r.u64());
    const std::uint64_t grid_hash = r.u64();
    const std::uint64_t pot_hash = r.u64();
    const std::uint64_t kind = r.u64();
    const double value = r.f64();
    const std::uint64_t n = r.u64();
    const std::uint64_t m = r.u64();
    if (kind > 1) throw CacheError(name + ": bad request kind");
    // The payload size must match exactly: n + m*n doubles and the checksum.
    if (m == 0 || n > r.remaining() / 8 || (n > 0 && m > r.remaining() / 8 / n) ||
        r.remaining() != 8 * (n + m * n) + 8)
        throw CacheError(name + ": truncated or oversized cache file");
    Grid grid;
    try {
        grid = Grid::build(dim, hw, ppa);
    } catch (const std::exception& e) {
        throw CacheError(name + ": bad grid header (" + e.what() + ")");
    }
    if (grid.hash() != grid_hash || grid.size() != m) throw CacheError(name + ": grid header is inconsistent");
    Eigen::VectorXd vals(static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < vals.size(); ++k) vals[k] = r.f64();
    Eigen::MatrixXd vecs(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (Eigen::Index c = 0; c < vecs.cols(); ++c)
        for (Eigen::Index row = 0; row < vecs.rows(); ++row) vecs(row, c) = r.f64();
    const std::size_t body = r.pos();
    if (r.u64() != checksum(data, body)) throw CacheError(name + ": checksum mismatch");
    const EigenRequest req{kind == 0 ? EigenRequest::Kind::lambda_max : EigenRequest::Kind::count, value};
    return std::make_shared<const EigenBasis>(grid, pot_hash, req, std::move(vals), std::move(vecs));
}

BasisPtr load_basis(const std::filesystem::path& path, const Grid& grid, std::uint64_t potential_hash,
                    const EigenRequest& request) {
    BasisPtr b = load_basis(path);
    if (b->grid() != grid) throw CacheError(path.string() + ": cached basis belongs to another grid");
    if (b->potential_hash() != potential_hash)
        throw CacheError(path.string() + ": cached basis belongs to another potential");
    if (!(b->request() == request)) throw CacheError(path.string() + ": cached basis has another cutoff");
    return b;
}

std::string cache_file_name(const Grid& grid, std::uint64_t potential_hash, const EigenRequest& request) {
    Fnv1a h;
    h.u64(grid.hash()).u64(potential_hash).u64(request_code(request)).f64(request.value);
    char buf[64];
    std::snprintf(buf, sizeof buf, "basis-%016llx.bin", static_cast<unsigned long long>(h.value()));
    return buf;
}

std::optional<std::filesystem::path> cache_dir_from_env() {
    const char* v = std::getenv("SCHRODLAB_CACHE_DIR");
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::filesystem::path(v);
}

CacheLookup cached_eigensolve(const std::filesystem::path& dir, const DiscreteOperator& op,
                              const EigenRequest& request, const EigenOptions& options) {
    CacheLookup out;
    out.file = dir / cache_file_name(op.grid, op.potential_hash, request);
    if (std::filesystem::exists(out.file)) {
        try {
            out.basis = load_basis(out.file, op.grid, op.potential_hash, request);
            out.hit = true;
            return out;
        } catch (const CacheError& e) {
            out.replaced = e.what();
        }
    }
    out.basis = eigensolve(op, request, options);
    std::filesystem::create_directories(dir);
    save_basis(out.file, *out.basis);
    return out;
}

}  // namespace schrodlab
