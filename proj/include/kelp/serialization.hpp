#pragma once

#include "kelp/core.hpp"
#include "kelp/evaluation.hpp"
#include "kelp/kernel.hpp"
#include "kelp/model.hpp"
#include "kelp/selection.hpp"
#include "kelp/simulation.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace kelp {

// Line-oriented text document. Scalars are "key=value" lines; a matrix is a
// "[name rows cols]" header followed by rows of space-separated values.
// Blank lines and lines starting with '#' are ignored. Doubles use 17
// significant digits.
class TextDocument {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, Index value);
  void set_matrix(const std::string& key, const MatrixXd& value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  Index get_index(const std::string& key) const;
  const MatrixXd& matrix(const std::string& key) const;
  VectorXd vector(const std::string& key) const;

  // scalar entries in insertion order
  std::vector<std::pair<std::string, std::string>> scalars() const;

  static TextDocument read(std::istream& in);
  void write(std::ostream& out) const;
  static TextDocument load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  using Value = std::variant<std::string, MatrixXd>;
  const Value* find(const std::string& key) const;
  void put(const std::string& key, Value v);
  std::vector<std::pair<std::string, Value>> entries_;
};

TextDocument model_document(const ModelParamsd& m);
ModelParamsd model_from_document(const TextDocument& doc);

TextDocument basis_document(const KpcaBasisd& b);
KpcaBasisd basis_from_document(const TextDocument& doc);

TextDocument truth_document(const GroundTruth& t);
GroundTruth truth_from_document(const TextDocument& doc);

TextDocument selection_document(const SelectionReport& rep);
TextDocument metrics_document(const MetricsReport& rep);

void save_trace(const std::filesystem::path& path, const std::vector<double>& trace);
std::vector<double> load_trace(const std::filesystem::path& path);

}  // namespace kelp
