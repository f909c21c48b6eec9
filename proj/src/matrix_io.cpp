#include "kelp/matrix_io.hpp"

#include "kelp/random.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace kelp {

namespace {

void check_coords(Index n, Index p, std::vector<Coord>& coords, const char* what) {
  require(n >= 1 && p >= 1, std::string(what) + ": dimensions must be positive");
  for (const auto& [i, j] : coords) {
    require(i >= 0 && i < n && j >= 0 && j < p,
            std::string(what) + ": index out of range (" + std::to_string(i) + ", " +
                std::to_string(j) + ")");
  }
  std::sort(coords.begin(), coords.end());
  auto dup = std::adjacent_find(coords.begin(), coords.end());
  require(dup == coords.end(), std::string(what) + ": duplicate pair (" +
                                   (dup == coords.end() ? std::string()
                                                        : std::to_string(dup->first) + ", " +
                                                              std::to_string(dup->second)) +
                                   ")");
}

Index parse_index(const std::string& token) {
  Index value = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  require(ec == std::errc() && ptr == last && !token.empty(), "non-integer token '" + token + "'");
  return value;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

struct CoordFile {
  Index n;
  Index p;
  std::vector<Coord> coords;
};

CoordFile read_coords(std::istream& in) {
  std::string line;
  while (std::getline(in, line) && blank(line)) {
  }
  require(!blank(line), "malformed header: empty input");
  auto head = split_ws(line);
  require(head.size() == 2, "malformed header: expected 'n p'");
  CoordFile f{parse_index(head[0]), parse_index(head[1]), {}};
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    auto toks = split_ws(line);
    require(toks.size() == 2, "malformed entry line '" + line + "'");
    f.coords.emplace_back(parse_index(toks[0]), parse_index(toks[1]));
  }
  return f;
}

void write_coords(std::ostream& out, Index n, Index p, const std::vector<Coord>& coords) {
  out << n << ' ' << p << '\n';
  for (const auto& [i, j] : coords) out << i << ' ' << j << '\n';
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

BinaryMatrix::BinaryMatrix(Index n, Index p, std::vector<Coord> ones)
    : n_(n), p_(p), ones_(std::move(ones)) {
  check_coords(n_, p_, ones_, "binary matrix");
}

double BinaryMatrix::one_fraction() const {
  return static_cast<double>(ones_.size()) / (static_cast<double>(n_) * static_cast<double>(p_));
}

bool BinaryMatrix::operator()(Index i, Index j) const {
  return std::binary_search(ones_.begin(), ones_.end(), Coord{i, j});
}

BinaryMatrix BinaryMatrix::from_dense(const MatrixXd& y) {
  std::vector<Coord> ones;
  for (Index i = 0; i < y.rows(); ++i)
    for (Index j = 0; j < y.cols(); ++j) {
      require(y(i, j) == 0.0 || y(i, j) == 1.0, "binary matrix: entries must be 0 or 1");
      if (y(i, j) == 1.0) ones.emplace_back(i, j);
    }
  return BinaryMatrix(y.rows(), y.cols(), std::move(ones));
}

EntryMask::EntryMask(Index n, Index p, std::vector<Coord> held_out)
    : n_(n), p_(p), held_(std::move(held_out)) {
  check_coords(n_, p_, held_, "mask");
}

bool EntryMask::contains(Index i, Index j) const {
  return std::binary_search(held_.begin(), held_.end(), Coord{i, j});
}

EmbeddingTable::EmbeddingTable(MatrixXd rows) : data_(std::move(rows)) {
  require(data_.rows() >= 1, "embeddings: empty table");
  require(data_.cols() >= 1, "embeddings: dimension must be at least 1");
  require(data_.allFinite(), "embeddings: non-finite entry");
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& token) {
  require(!token.empty() && !std::isspace(static_cast<unsigned char>(token.front())),
          "non-numeric token '" + token + "'");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(token.c_str(), &end);
  require(end == token.c_str() + token.size(), "non-numeric token '" + token + "'");
  // underflow to a subnormal is fine, overflow is not
  require(errno != ERANGE || std::abs(v) < 1.0, "out-of-range token '" + token + "'");
  return v;
}

BinaryMatrix read_binary_matrix(std::istream& in) {
  auto f = read_coords(in);
  return BinaryMatrix(f.n, f.p, std::move(f.coords));
}

void write_binary_matrix(std::ostream& out, const BinaryMatrix& y) {
  write_coords(out, y.rows(), y.cols(), y.ones());
}

BinaryMatrix load_binary_matrix(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_binary_matrix(in);
}

void save_binary_matrix(const std::filesystem::path& path, const BinaryMatrix& y) {
  auto out = open_out(path);
  write_binary_matrix(out, y);
}

EntryMask read_mask(std::istream& in) {
  auto f = read_coords(in);
  return EntryMask(f.n, f.p, std::move(f.coords));
}

void write_mask(std::ostream& out, const EntryMask& mask) {
  write_coords(out, mask.rows(), mask.cols(), mask.held_out());
}

EntryMask load_mask(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_mask(in);
}

void save_mask(const std::filesystem::path& path, const EntryMask& mask) {
  auto out = open_out(path);
  write_mask(out, mask);
}

EmbeddingTable read_embeddings(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      auto b = tok.find_first_not_of(" \t\r");
      auto e = tok.find_last_not_of(" \t\r");
      require(b != std::string::npos, "embeddings: empty field");
      row.push_back(parse_double(tok.substr(b, e - b + 1)));
    }
    if (!rows.empty())
      require(row.size() == rows.front().size(),
              "embeddings: ragged rows (row " + std::to_string(rows.size()) + ")");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "embeddings: empty file");
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index j = 0; j < m.rows(); ++j)
    for (Index k = 0; k < m.cols(); ++k) m(j, k) = rows[j][k];
  return EmbeddingTable(std::move(m));
}

void write_embeddings(std::ostream& out, const EmbeddingTable& e) {
  const auto& m = e.matrix();
  for (Index j = 0; j < m.rows(); ++j) {
    for (Index k = 0; k < m.cols(); ++k) {
      if (k) out << ',';
      out << format_double(m(j, k));
    }
    out << '\n';
  }
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_embeddings(in);
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& e) {
  auto out = open_out(path);
  write_embeddings(out, e);
}

EntryMask sample_holdout_mask(Index n, Index p, double pi, std::uint64_t seed) {
  require(pi > 0.0 && pi < 1.0, "hold-out probability must lie in (0, 1)");
  require(n >= 1 && p >= 1, "mask: dimensions must be positive");
  auto rng = make_rng(seed, 0x6d61736b);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Coord> held;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j)
      if (unif(rng) < pi) held.emplace_back(i, j);
  return EntryMask(n, p, std::move(held));
}

}  // namespace kelp
