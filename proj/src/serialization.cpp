#include "kelp/serialization.hpp"

#include <fstream>
#include <sstream>

namespace kelp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Index to_index(const std::string& s) {
  const double v = parse_double(s);
  require(v == static_cast<double>(static_cast<Index>(v)), "expected an integer, got '" + s + "'");
  return static_cast<Index>(v);
}

void require_format(const TextDocument& doc, const std::string& expected) {
  require(doc.has("format") && doc.get("format") == expected,
          "document is not a " + expected + " file");
}

}  // namespace

void TextDocument::put(const std::string& key, Value v) {
  require(!key.empty() && key.find_first_of("=[] \t\n") == std::string::npos,
          "document: invalid key '" + key + "'");
  for (auto& [k, old] : entries_)
    if (k == key) {
      old = std::move(v);
      return;
    }
  entries_.emplace_back(key, std::move(v));
}

void TextDocument::set(const std::string& key, const std::string& value) {
  require(value.find('\n') == std::string::npos, "document: value contains a newline");
  put(key, value);
}
void TextDocument::set(const std::string& key, double value) { put(key, format_double(value)); }
void TextDocument::set(const std::string& key, Index value) { put(key, std::to_string(value)); }
void TextDocument::set_matrix(const std::string& key, const MatrixXd& value) { put(key, value); }

const TextDocument::Value* TextDocument::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

bool TextDocument::has(const std::string& key) const { return find(key) != nullptr; }

const std::string& TextDocument::get(const std::string& key) const {
  const Value* v = find(key);
  require(v != nullptr, "document: missing field '" + key + "'");
  const auto* s = std::get_if<std::string>(v);
  require(s != nullptr, "document: field '" + key + "' is a matrix, expected a scalar");
  return *s;
}

double TextDocument::get_double(const std::string& key) const { return parse_double(get(key)); }
Index TextDocument::get_index(const std::string& key) const { return to_index(get(key)); }

const MatrixXd& TextDocument::matrix(const std::string& key) const {
  const Value* v = find(key);
  require(v != nullptr, "document: missing matrix '" + key + "'");
  const auto* m = std::get_if<MatrixXd>(v);
  require(m != nullptr, "document: field '" + key + "' is a scalar, expected a matrix");
  return *m;
}

VectorXd TextDocument::vector(const std::string& key) const {
  const MatrixXd& m = matrix(key);
  require(m.cols() == 1 || m.rows() == 0, "document: '" + key + "' is not a column vector");
  return m.col(0);
}

std::vector<std::pair<std::string, std::string>> TextDocument::scalars() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : entries_)
    if (const auto* s = std::get_if<std::string>(&v)) out.emplace_back(k, *s);
  return out;
}

TextDocument TextDocument::read(std::istream& in) {
  TextDocument doc;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      require(t.back() == ']', "document: malformed matrix header '" + t + "'");
      std::istringstream hs(t.substr(1, t.size() - 2));
      std::string name, rows_tok, cols_tok, extra;
      hs >> name >> rows_tok >> cols_tok;
      require(!name.empty() && !cols_tok.empty() && !(hs >> extra),
              "document: malformed matrix header '" + t + "'");
      const Index rows = to_index(rows_tok), cols = to_index(cols_tok);
      require(rows >= 0 && cols >= 0, "document: negative matrix size in '" + t + "'");
      MatrixXd m(rows, cols);
      for (Index i = 0; i < rows; ++i) {
        require(static_cast<bool>(std::getline(in, line)),
                "document: matrix '" + name + "' truncated");
        std::istringstream rs(line);
        std::string tok;
        Index j = 0;
        while (rs >> tok) {
          require(j < cols, "document: matrix '" + name + "' row too long");
          m(i, j++) = parse_double(tok);
        }
        require(j == cols, "document: matrix '" + name + "' row too short");
      }
      doc.put(name, std::move(m));
    } else {
      const auto eq = t.find('=');
      require(eq != std::string::npos, "document: malformed line '" + t + "'");
      doc.put(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
  }
  return doc;
}

void TextDocument::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) {
    if (const auto* s = std::get_if<std::string>(&v)) {
      out << k << '=' << *s << '\n';
      continue;
    }
    const auto& m = std::get<MatrixXd>(v);
    out << '[' << k << ' ' << m.rows() << ' ' << m.cols() << "]\n";
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        if (j) out << ' ';
        out << format_double(m(i, j));
      }
      out << '\n';
    }
  }
}

TextDocument TextDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '" + path.string() + "'");
  return read(in);
}

void TextDocument::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(out.good(), "cannot write '" + path.string() + "'");
  write(out);
}

TextDocument model_document(const ModelParamsd& m) {
  m.check_shapes();
  TextDocument doc;
  doc.set("format", std::string("kelp-model"));
  doc.set("r", m.rank());
  doc.set("rho", m.rho);
  doc.set("kernel", m.kernel ? m.kernel->to_string() : std::string("baseline"));
  doc.set_matrix("alpha", m.alpha);
  doc.set_matrix("U", m.u);
  doc.set_matrix("V", m.v);
  if (m.gamma) doc.set_matrix("Gamma", *m.gamma);
  return doc;
}

ModelParamsd model_from_document(const TextDocument& doc) {
  require_format(doc, "kelp-model");
  ModelParamsd m;
  m.rho = doc.get_double("rho");
  m.alpha = doc.vector("alpha");
  m.u = doc.matrix("U");
  m.v = doc.matrix("V");
  m.kernel = KernelSpec::parse(doc.get("kernel"));
  if (doc.has("Gamma")) m.gamma = doc.matrix("Gamma");
  m.check_shapes();
  require(doc.get_index("r") == m.rank(), "model: declared rank does not match U");
  return m;
}

TextDocument basis_document(const KpcaBasisd& b) {
  TextDocument doc;
  doc.set("format", std::string("kelp-basis"));
  doc.set("kernel", b.kernel.to_string());
  doc.set("q", b.q);
  doc.set("energy", b.energy);
  doc.set_matrix("mu", b.mu);
  doc.set_matrix("Phi", b.phi);
  doc.set_matrix("kbar", b.kbar);
  return doc;
}

KpcaBasisd basis_from_document(const TextDocument& doc) {
  require_format(doc, "kelp-basis");
  KpcaBasisd b;
  b.kernel = KernelSpec::parse(doc.get("kernel"));
  b.q = doc.get_index("q");
  b.energy = doc.get_double("energy");
  b.mu = doc.vector("mu");
  b.phi = doc.matrix("Phi");
  b.kbar = doc.vector("kbar");
  require(b.mu.size() == b.q && b.phi.cols() == b.q, "basis: q does not match mu/Phi");
  require(b.kbar.size() == b.phi.rows(), "basis: kbar length does not match Phi rows");
  require((b.mu.array() > 0.0).all(), "basis: eigenvalues must be positive");
  b.psi = b.phi * b.mu.cwiseSqrt().asDiagonal();
  return b;
}

TextDocument truth_document(const GroundTruth& t) {
  TextDocument doc;
  doc.set("format", std::string("kelp-truth"));
  doc.set("rho_star", t.rho_star);
  doc.set_matrix("alpha_star", t.alpha_star);
  doc.set_matrix("U_star", t.u_star);
  doc.set_matrix("V_star", t.v_star);
  doc.set_matrix("Theta_star", t.theta_star);
  return doc;
}

GroundTruth truth_from_document(const TextDocument& doc) {
  require_format(doc, "kelp-truth");
  GroundTruth t;
  t.theta_star = doc.matrix("Theta_star");
  if (doc.has("rho_star")) t.rho_star = doc.get_double("rho_star");
  if (doc.has("alpha_star")) t.alpha_star = doc.vector("alpha_star");
  if (doc.has("U_star")) t.u_star = doc.matrix("U_star");
  if (doc.has("V_star")) t.v_star = doc.matrix("V_star");
  return t;
}

TextDocument selection_document(const SelectionReport& rep) {
  TextDocument doc;
  doc.set("format", std::string("kelp-selection"));
  doc.set("pi", rep.pi);
  doc.set("seed", std::to_string(rep.seed));
  doc.set("mask_seed", std::to_string(rep.mask_seed));
  doc.set("heldout_entries", rep.mask.size());
  doc.set("candidates", static_cast<Index>(rep.candidates.size()));
  for (std::size_t k = 0; k < rep.candidates.size(); ++k) {
    const auto& c = rep.candidates[k];
    const std::string pre = "candidate." + std::to_string(k) + ".";
    doc.set(pre + "kernel", c.kernel.to_string());
    doc.set(pre + "q", c.q ? std::to_string(*c.q) : std::string("none"));
    doc.set(pre + "holdout_loss", c.holdout_loss);
    doc.set(pre + "iterations", c.iterations);
    doc.set(pre + "converged", std::string(c.converged ? "true" : "false"));
    if (c.diverged) doc.set(pre + "diverged", std::string("true"));
  }
  doc.set("chosen", static_cast<Index>(rep.chosen));
  doc.set("chosen_kernel", rep.best().kernel.to_string());
  return doc;
}

TextDocument metrics_document(const MetricsReport& rep) {
  TextDocument doc;
  doc.set("format", std::string("kelp-metrics"));
  for (const auto& [k, v] : rep.fields()) doc.set(k, v);
  return doc;
}

void save_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
  std::ofstream out(path);
  require(out.good(), "cannot write '" + path.string() + "'");
  for (double v : trace) out << format_double(v) << '\n';
}

std::vector<double> load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '" + path.string() + "'");
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!t.empty()) out.push_back(parse_double(t));
  }
  return out;
}

}  // namespace kelp
