#pragma once

#include "kelp/core.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

namespace kelp {

using Coord = std::pair<Index, Index>;

// Sparse n x p binary matrix stored as the sorted list of its one-entries.
class BinaryMatrix {
 public:
  BinaryMatrix(Index n, Index p, std::vector<Coord> ones);

  Index rows() const { return n_; }
  Index cols() const { return p_; }
  const std::vector<Coord>& ones() const { return ones_; }
  Index nnz() const { return static_cast<Index>(ones_.size()); }
  double one_fraction() const;

  bool operator()(Index i, Index j) const;

  template <typename Scalar = double>
  Mat<Scalar> dense() const {
    Mat<Scalar> out = Mat<Scalar>::Zero(n_, p_);
    for (const auto& [i, j] : ones_) out(i, j) = Scalar(1);
    return out;
  }

  static BinaryMatrix from_dense(const MatrixXd& y);

  friend bool operator==(const BinaryMatrix&, const BinaryMatrix&) = default;

 private:
  Index n_;
  Index p_;
  std::vector<Coord> ones_;
};

// Set of held-out (i, j) entries for an n x p matrix.
class EntryMask {
 public:
  EntryMask(Index n, Index p, std::vector<Coord> held_out);

  Index rows() const { return n_; }
  Index cols() const { return p_; }
  const std::vector<Coord>& held_out() const { return held_; }
  Index size() const { return static_cast<Index>(held_.size()); }
  bool empty() const { return held_.empty(); }
  bool contains(Index i, Index j) const;

  // 1 for observed entries, 0 for held-out ones.
  template <typename Scalar = double>
  Mat<Scalar> observed_weights() const {
    Mat<Scalar> w = Mat<Scalar>::Ones(n_, p_);
    for (const auto& [i, j] : held_) w(i, j) = Scalar(0);
    return w;
  }

  friend bool operator==(const EntryMask&, const EntryMask&) = default;

 private:
  Index n_;
  Index p_;
  std::vector<Coord> held_;
};

// p x d table of external semantic embeddings; row j is e_j.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(MatrixXd rows);

  Index rows() const { return data_.rows(); }
  Index dim() const { return data_.cols(); }
  const MatrixXd& matrix() const { return data_; }
  auto row(Index j) const { return data_.row(j); }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  MatrixXd data_;
};

// Decimal text with 17 significant digits; parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& token);

BinaryMatrix read_binary_matrix(std::istream& in);
void write_binary_matrix(std::ostream& out, const BinaryMatrix& y);
BinaryMatrix load_binary_matrix(const std::filesystem::path& path);
void save_binary_matrix(const std::filesystem::path& path, const BinaryMatrix& y);

EntryMask read_mask(std::istream& in);
void write_mask(std::ostream& out, const EntryMask& mask);
EntryMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const EntryMask& mask);

EmbeddingTable read_embeddings(std::istream& in);
void write_embeddings(std::ostream& out, const EmbeddingTable& e);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& e);

// Each entry is held out independently with probability pi.
EntryMask sample_holdout_mask(Index n, Index p, double pi, std::uint64_t seed);

}  // namespace kelp
