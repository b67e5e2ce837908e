#include "kto/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace kto {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& field, double& out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct CsvLines {
  std::vector<std::string> comments;
  std::vector<std::pair<std::size_t, std::string>> rows;  // (line number, content)
};

CsvLines read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  CsvLines out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      out.comments.push_back(t);
      continue;
    }
    out.rows.emplace_back(no, t);
  }
  return out;
}

std::string unquote(const std::string& field, const std::string& path, std::size_t line) {
  const std::string t = trim(field);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '"') {
        if (i + 2 < t.size() && t[i + 1] == '"') {
          out.push_back('"');
          ++i;
          continue;
        }
        throw InvalidInput(path + ":" + std::to_string(line) + ": stray quote");
      }
      out.push_back(t[i]);
    }
    return out;
  }
  if (t.find('"') != std::string::npos) throw InvalidInput(path + ":" + std::to_string(line) + ": malformed quoting");
  return t;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

MatrixXd parse_numeric_rows(const CsvLines& lines, const std::string& path) {
  if (lines.rows.empty()) throw InvalidInput("'" + path + "' contains no data rows");
  const std::size_t d = split_commas(lines.rows.front().second).size();
  MatrixXd m(static_cast<Index>(d), static_cast<Index>(lines.rows.size()));
  for (std::size_t r = 0; r < lines.rows.size(); ++r) {
    const auto& [no, content] = lines.rows[r];
    const auto fields = split_commas(content);
    if (fields.size() != d)
      throw InvalidInput(path + ":" + std::to_string(no) + ": expected " + std::to_string(d) + " columns, found " +
                         std::to_string(fields.size()));
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0;
      if (!parse_double(fields[c], v) || !std::isfinite(v))
        throw InvalidInput(path + ":" + std::to_string(no) + ": '" + trim(fields[c]) + "' is not a finite number");
      m(static_cast<Index>(c), static_cast<Index>(r)) = v;
    }
  }
  return m;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  return out;
}

void write_rows(std::ostream& out, const MatrixXd& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    for (Index i = 0; i < columns.rows(); ++i) {
      if (i) out << ',';
      out << format_double(columns(i, j));
    }
    out << '\n';
  }
}

Json real_matrix_json(const MatrixXd& m) {
  Json cols = Json::array();
  for (Index j = 0; j < m.cols(); ++j) {
    Json col = Json::array();
    for (Index i = 0; i < m.rows(); ++i) col.push_back(m(i, j));
    cols.push_back(std::move(col));
  }
  return cols;
}

MatrixXd real_matrix_from_json(const Json& j, Index rows_hint = -1) {
  const Index cols = static_cast<Index>(j.size());
  const Index rows = cols ? static_cast<Index>(j.at(0).size()) : std::max<Index>(rows_hint, 0);
  MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    if (static_cast<Index>(j.at(c).size()) != rows) throw InvalidInput("ragged matrix in JSON");
    for (Index r = 0; r < rows; ++r) m(r, c) = j.at(c).at(r).get<double>();
  }
  return m;
}

Json complex_matrix_json(const MatrixXcd& m) {
  return Json{{"re", real_matrix_json(m.real())}, {"im", real_matrix_json(m.imag())}};
}

MatrixXcd complex_matrix_from_json(const Json& j) {
  const MatrixXd re = real_matrix_from_json(j.at("re"));
  const MatrixXd im = real_matrix_from_json(j.at("im"));
  if (re.rows() != im.rows() || re.cols() != im.cols()) throw InvalidInput("complex matrix parts differ in shape");
  MatrixXcd m(re.rows(), re.cols());
  m.real() = re;
  m.imag() = im;
  return m;
}

Json samples_json(const SampleSet& s) {
  if (s.is_text()) return Json{{"kind", "text"}, {"items", s.text()}};
  return Json{{"kind", "vector"}, {"dim", s.dim()}, {"points", real_matrix_json(s.matrix())}};
}

SampleSet samples_from_json(const Json& j) {
  if (j.at("kind") == "text") return SampleSet(j.at("items").get<std::vector<std::string>>());
  return SampleSet(real_matrix_from_json(j.at("points"), j.at("dim").get<Index>()));
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericalError("float formatting failed");
  return std::string(buf, ptr);
}

SampleSet read_samples_csv(const std::string& path, CsvKind kind) {
  const CsvLines lines = read_lines(path);
  if (lines.rows.empty()) throw InvalidInput("'" + path + "' contains no data rows");
  if (kind == CsvKind::automatic) {
    kind = CsvKind::vector;
    for (const auto& f : split_commas(lines.rows.front().second)) {
      double v;
      if (!parse_double(f, v)) kind = CsvKind::text;
    }
  }
  if (kind == CsvKind::vector) return SampleSet(parse_numeric_rows(lines, path));
  std::vector<std::string> words;
  for (const auto& [no, content] : lines.rows) words.push_back(unquote(content, path, no));
  return SampleSet(std::move(words));
}

void write_samples_csv(const std::string& path, const SampleSet& s, const std::vector<std::string>& comments) {
  auto out = open_out(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  if (s.is_text()) {
    for (const auto& w : s.text()) out << quote(w) << '\n';
  } else {
    write_rows(out, s.matrix());
  }
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

MatrixXd read_matrix_csv(const std::string& path) {
  return parse_numeric_rows(read_lines(path), path).transpose();
}

void write_matrix_csv(const std::string& path, const MatrixXd& m, const std::vector<std::string>& comments) {
  auto out = open_out(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  write_rows(out, m.transpose());
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

void write_trajectory_csv(const std::string& path, const Trajectory& t, const std::vector<std::string>& comments) {
  auto out = open_out(path);
  out << "# h=" << format_double(t.h) << " seed=" << t.seed << '\n';
  for (const auto& c : comments) out << "# " << c << '\n';
  write_rows(out, t.states);
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

Trajectory read_trajectory_csv(const std::string& path) {
  const CsvLines lines = read_lines(path);
  Trajectory t;
  bool found = false;
  for (const auto& c : lines.comments) {
    std::istringstream ss(c.substr(1));
    std::string tok;
    bool h_ok = false, seed_ok = false;
    while (ss >> tok) {
      if (tok.rfind("h=", 0) == 0) h_ok = parse_double(tok.substr(2), t.h);
      if (tok.rfind("seed=", 0) == 0) {
        const std::string v = tok.substr(5);
        seed_ok = std::from_chars(v.data(), v.data() + v.size(), t.seed).ec == std::errc();
      }
    }
    if (h_ok && seed_ok) {
      found = true;
      break;
    }
  }
  if (!found) throw InvalidInput("'" + path + "' lacks the '# h=... seed=...' header");
  if (!(t.h > 0)) throw InvalidInput("'" + path + "' has a nonpositive step size");
  t.states = parse_numeric_rows(lines, path);
  return t;
}

void write_text_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json to_json(const KernelSpec& spec) {
  Json j;
  j["family"] = kernel_family_name(spec);
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          j["sigma2"] = k.sigma2;
        } else if constexpr (std::is_same_v<T, Polynomial>) {
          j["degree"] = k.degree;
          j["offset"] = k.offset;
        } else if constexpr (std::is_same_v<T, Explicit>) {
          j["feature_map"] = feature_map_name(k.map);
          if (k.map == FeatureMapId::rbf_grid) {
            j["sigma2"] = k.sigma2;
            j["grid"] = k.grid;
            j["lo"] = k.lo;
            j["hi"] = k.hi;
          }
        } else if constexpr (std::is_same_v<T, GappedString>) {
          j["order"] = k.order;
          j["decay"] = k.decay;
          j["normalized"] = k.normalized;
        } else if constexpr (std::is_same_v<T, GaussianOfKernel>) {
          j["sigma2"] = k.sigma2;
          j["inner"] = to_json(*k.inner);
        }
      },
      spec.family);
  return j;
}

KernelSpec kernel_from_json(const Json& j) {
  const std::string family = j.at("family").get<std::string>();
  KernelSpec spec;
  if (family == "gaussian") {
    spec.family = Gaussian{j.at("sigma2").get<double>()};
  } else if (family == "polynomial") {
    spec.family = Polynomial{j.at("degree").get<int>(), j.at("offset").get<double>()};
  } else if (family == "linear") {
    spec.family = Linear{};
  } else if (family == "explicit") {
    Explicit e;
    e.map = parse_feature_map(j.at("feature_map").get<std::string>());
    if (e.map == FeatureMapId::rbf_grid) {
      e.sigma2 = j.at("sigma2").get<double>();
      e.grid = j.at("grid").get<int>();
      e.lo = j.at("lo").get<double>();
      e.hi = j.at("hi").get<double>();
    }
    spec.family = e;
  } else if (family == "gapped_string") {
    spec.family = GappedString{j.at("order").get<int>(), j.at("decay").get<double>(), j.at("normalized").get<bool>()};
  } else if (family == "gaussian_of_kernel") {
    spec.family = GaussianOfKernel{std::make_shared<const KernelSpec>(kernel_from_json(j.at("inner"))),
                                   j.at("sigma2").get<double>()};
  } else {
    throw ConfigError("unknown kernel family '" + family + "'");
  }
  validate(spec);
  return spec;
}

Json complex_vector_json(const Eigen::VectorXcd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(Json{{"re", v(i).real()}, {"im", v(i).imag()}});
  return a;
}

Eigen::VectorXcd complex_vector_from_json(const Json& j) {
  Eigen::VectorXcd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = {j.at(i).at("re").get<double>(), j.at(i).at("im").get<double>()};
  return v;
}

Json to_json(const SpectrumResult& s) {
  Json j;
  j["format"] = "kto.spectrum";
  j["version"] = kSpectrumFormatVersion;
  j["kind"] = to_string(s.kind);
  j["epsilon"] = s.epsilon;
  j["n"] = s.n;
  j["eval_rule"] = to_string(s.eval_rule);
  j["method"] = to_string(s.method);
  j["rank"] = s.rank;
  j["used_pseudoinverse"] = s.used_pseudoinverse;
  j["kernel"] = s.kernel ? to_json(*s.kernel) : Json();
  j["eigenvalues"] = complex_vector_json(s.eigenvalues);
  j["coefficients"] = complex_matrix_json(s.coefficients);
  j["expansion"] = complex_matrix_json(s.expansion);
  if (s.basis) j["basis"] = samples_json(*s.basis);
  return j;
}

SpectrumResult spectrum_from_json(const Json& j) {
  try {
    if (j.at("format") != "kto.spectrum") throw InvalidInput("not a spectrum document");
    const int version = j.at("version").get<int>();
    if (version != kSpectrumFormatVersion)
      throw InvalidInput("unsupported spectrum format version " + std::to_string(version));
    SpectrumResult s;
    s.kind = parse_operator_kind(j.at("kind").get<std::string>());
    s.epsilon = j.at("epsilon").get<double>();
    s.n = j.at("n").get<Index>();
    s.eval_rule = parse_eval_rule(j.at("eval_rule").get<std::string>());
    s.method = parse_eig_method(j.at("method").get<std::string>());
    s.rank = j.at("rank").get<Index>();
    s.used_pseudoinverse = j.at("used_pseudoinverse").get<bool>();
    if (!j.at("kernel").is_null()) s.kernel = kernel_from_json(j.at("kernel"));
    s.eigenvalues = complex_vector_from_json(j.at("eigenvalues"));
    s.coefficients = complex_matrix_from_json(j.at("coefficients"));
    s.expansion = complex_matrix_from_json(j.at("expansion"));
    if (j.contains("basis")) s.basis = samples_from_json(j.at("basis"));
    if (s.coefficients.cols() != s.eigenvalues.size() || s.expansion.cols() != s.eigenvalues.size())
      throw InvalidInput("spectrum document has inconsistent column counts");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed spectrum document: ") + e.what());
  }
}

Json to_json(const ClusterResult& c) {
  Json j;
  j["k"] = c.centers.rows();
  j["inertia"] = c.inertia;
  j["iterations"] = c.iterations;
  j["best_restart"] = c.best_restart;
  j["inertia_history"] = c.inertia_history;
  Json centers = Json::array();
  for (Index i = 0; i < c.centers.rows(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < c.centers.cols(); ++k) row.push_back(c.centers(i, k));
    centers.push_back(std::move(row));
  }
  j["centers"] = std::move(centers);
  j["labels"] = c.labels;
  return j;
}

Json to_json(const TicaResult& t) {
  Json j;
  j["eigenvalues"] = complex_vector_json(t.eigenvalues);
  j["eigenvectors"] = complex_matrix_json(t.eigenvectors);
  j["used_pseudoinverse"] = t.used_pseudoinverse;
  return j;
}

Json to_json(const EdmdModel& m) {
  Json j;
  j["feature_map"] = to_json(KernelSpec{m.map});
  j["d"] = m.d;
  j["r"] = m.r;
  j["n"] = m.n;
  j["epsilon"] = m.epsilon;
  j["method"] = to_string(m.method);
  j["rank"] = m.rank;
  j["used_pseudoinverse"] = m.used_pseudoinverse;
  j["eigenvalues"] = complex_vector_json(m.spectrum.eigenvalues);
  j["eigenvectors"] = complex_matrix_json(m.spectrum.eigenvectors);
  if (m.r <= 64) j["k_matrix"] = real_matrix_json(m.k_matrix);
  if (m.modes.size()) {
    j["modes"] = complex_matrix_json(m.modes);
    j["reconstruction_residual"] = m.reconstruction_residual;
    j["modes_ill_conditioned"] = m.modes_ill_conditioned;
  }
  return j;
}

Json to_json(const RkhsElement& e) {
  return Json{{"basis", to_string(e.basis)}, {"coeffs", std::vector<double>(e.coeffs.data(), e.coeffs.data() + e.coeffs.size())}};
}

}  // namespace kto
