#include "ctlfm/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "ctlfm/error.hpp"

namespace ctlfm {

namespace fs = std::filesystem;
using nlohmann::json;

void atomic_write(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return os.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) throw ConfigError("empty numeric field");
  const std::string t = s.substr(a, b - a + 1);
  if (t == "nan" || t == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError("not a number: '" + t + "'");
  }
  return v;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

void check_id(const std::string& id) {
  if (id.find_first_of(",\n\r\"") != std::string::npos) {
    throw InvalidArgument("identifier contains a CSV delimiter: '" + id + "'");
  }
}

std::string where(std::size_t line) { return "line " + std::to_string(line + 1) + ": "; }

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (std::isfinite(v)) {
        r.push_back(v);
      } else {
        r.push_back(nullptr);
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) {
      throw ConfigError(field + ": ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = r[static_cast<std::size_t>(c)];
      m(i, c) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    }
  }
  return m;
}

}  // namespace

SpikeData parse_spikes_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("spike JSON: ") + e.what());
  }
  try {
    if (!j.contains("t_end")) throw ConfigError("spike JSON: missing field 't_end'");
    if (!j.contains("neurons") || !j["neurons"].is_array()) {
      throw ConfigError("spike JSON: missing array 'neurons'");
    }
    const double t_end = j["t_end"].get<double>();
    std::vector<std::vector<double>> spikes;
    std::vector<std::string> ids;
    for (std::size_t n = 0; n < j["neurons"].size(); ++n) {
      const json& e = j["neurons"][n];
      if (!e.contains("spikes")) {
        throw ConfigError("spike JSON: neurons[" + std::to_string(n) + "] has no 'spikes'");
      }
      ids.push_back(e.contains("id") ? e["id"].get<std::string>() : "n" + std::to_string(n));
      spikes.push_back(e["spikes"].get<std::vector<double>>());
    }
    return SpikeData(t_end, std::move(spikes), std::move(ids));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spike JSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("spike JSON: ") + e.what());
  }
}

std::string format_spikes_json(const SpikeData& s) {
  json neurons = json::array();
  for (std::size_t i = 0; i < s.neuron_count(); ++i) {
    neurons.push_back({{"id", s.ids()[i]}, {"spikes", s.spikes(i)}});
  }
  json j = {{"t_end", s.t_end()}, {"neurons", std::move(neurons)}};
  return j.dump() + "\n";
}

SpikeData parse_spikes_csv(const std::string& text) {
  const auto lines = lines_of(text);
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> spikes;
  double t_end = std::numeric_limits<double>::quiet_NaN();
  double latest = 0.0;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("t_end=");
      if (pos != std::string::npos) t_end = parse_double(line.substr(pos + 6));
      continue;
    }
    const auto f = split(line);
    if (f.size() != 2) throw ConfigError("spike CSV " + where(ln) + "expected 'neuron_id,time'");
    if (ids.empty() && f[1] == "time") continue;  // header
    double t = 0.0;
    try {
      t = parse_double(f[1]);
    } catch (const ConfigError& e) {
      throw ConfigError("spike CSV " + where(ln) + e.what());
    }
    auto it = index.find(f[0]);
    if (it == index.end()) {
      it = index.emplace(f[0], ids.size()).first;
      ids.push_back(f[0]);
      spikes.emplace_back();
    }
    spikes[it->second].push_back(t);
    latest = std::max(latest, t);
  }
  if (std::isnan(t_end)) t_end = latest;
  try {
    return SpikeData(t_end, std::move(spikes), std::move(ids));
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("spike CSV: ") + e.what());
  }
}

std::string format_spikes_csv(const SpikeData& s) {
  std::string out = "# t_end=" + format_double(s.t_end()) + "\nneuron_id,time\n";
  for (std::size_t i = 0; i < s.neuron_count(); ++i) {
    check_id(s.ids()[i]);
    for (double t : s.spikes(i)) out += s.ids()[i] + "," + format_double(t) + "\n";
  }
  return out;
}

SpikeData read_spikes(const fs::path& path) {
  const std::string text = read_text(path);
  if (path.extension() == ".csv") return parse_spikes_csv(text);
  return parse_spikes_json(text);
}

void write_spikes(const fs::path& path, const SpikeData& s) {
  atomic_write(path, path.extension() == ".csv" ? format_spikes_csv(s) : format_spikes_json(s));
}

std::string format_matrix_csv(const LabeledMatrix& m) {
  if (static_cast<Eigen::Index>(m.row_ids.size()) != m.values.rows() ||
      static_cast<Eigen::Index>(m.col_ids.size()) != m.values.cols()) {
    throw InvalidArgument("format_matrix_csv: id counts do not match the matrix shape");
  }
  std::string out = "id";
  for (const auto& c : m.col_ids) {
    check_id(c);
    out += "," + c;
  }
  out += "\n";
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    check_id(m.row_ids[static_cast<std::size_t>(i)]);
    out += m.row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) out += "," + format_double(m.values(i, j));
    out += "\n";
  }
  return out;
}

LabeledMatrix parse_matrix_csv(const std::string& text) {
  const auto lines = lines_of(text);
  LabeledMatrix m;
  std::vector<std::vector<double>> rows;
  bool header = false;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto f = split(lines[ln]);
    if (!header) {
      if (f.empty() || f[0] != "id") throw ConfigError("matrix CSV " + where(ln) + "header must start with 'id'");
      m.col_ids.assign(f.begin() + 1, f.end());
      header = true;
      continue;
    }
    if (f.size() != m.col_ids.size() + 1) {
      throw ConfigError("matrix CSV " + where(ln) + "expected " +
                        std::to_string(m.col_ids.size() + 1) + " fields");
    }
    m.row_ids.push_back(f[0]);
    std::vector<double> r;
    for (std::size_t c = 1; c < f.size(); ++c) {
      try {
        r.push_back(parse_double(f[c]));
      } catch (const ConfigError& e) {
        throw ConfigError("matrix CSV " + where(ln) + e.what());
      }
    }
    rows.push_back(std::move(r));
  }
  if (!header) throw ConfigError("matrix CSV: empty input");
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.col_ids.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

void write_matrix_csv(const fs::path& path, const LabeledMatrix& m) {
  atomic_write(path, format_matrix_csv(m));
}

LabeledMatrix read_matrix_csv(const fs::path& path) { return parse_matrix_csv(read_text(path)); }

std::string format_params_csv(const ParamsTable& p) {
  const ThetaEstimate& e = p.estimate;
  const std::size_t q = p.ids.size();
  if (e.theta.size() != q || e.ig.params.size() != q || e.estimable.size() != q) {
    throw InvalidArgument("format_params_csv: size mismatch");
  }
  std::string out = "id,mu,b,ig_mean,ig_shape,n_isi,estimable,reason\n";
  for (std::size_t i = 0; i < q; ++i) {
    check_id(p.ids[i]);
    const auto k = static_cast<Eigen::Index>(i);
    std::string reason = i < e.reasons.size() ? e.reasons[i] : "";
    for (char& c : reason) {
      if (c == ',' || c == '\n') c = ';';
    }
    out += p.ids[i] + "," + format_double(e.theta.mu[k]) + "," + format_double(e.theta.b[k]) + "," +
           format_double(e.ig.params[i].mean) + "," + format_double(e.ig.params[i].shape) + "," +
           std::to_string(e.ig.n[i]) + "," + (e.estimable[i] ? "1" : "0") + "," + reason + "\n";
  }
  return out;
}

ParamsTable parse_params_csv(const std::string& text) {
  const auto lines = lines_of(text);
  ParamsTable p;
  std::vector<double> mu;
  std::vector<double> b;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto f = split(lines[ln]);
    if (ln == 0) {
      if (f.size() < 3 || f[0] != "id" || f[1] != "mu" || f[2] != "b") {
        throw ConfigError("params CSV line 1: header must start with 'id,mu,b'");
      }
      continue;
    }
    if (f.size() < 3) throw ConfigError("params CSV " + where(ln) + "too few fields");
    try {
      p.ids.push_back(f[0]);
      mu.push_back(parse_double(f[1]));
      b.push_back(parse_double(f[2]));
      IgParams ig;
      ig.mean = f.size() > 3 ? parse_double(f[3]) : b.back() / mu.back();
      ig.shape = f.size() > 4 ? parse_double(f[4]) : b.back() * b.back();
      p.estimate.ig.params.push_back(ig);
      p.estimate.ig.n.push_back(f.size() > 5 ? std::stoul(f[5]) : 0);
      const bool est = f.size() > 6 ? f[6] == "1" : std::isfinite(mu.back()) && std::isfinite(b.back());
      p.estimate.estimable.push_back(est);
      p.estimate.reasons.push_back(f.size() > 7 ? f[7] : "");
    } catch (const ConfigError& e) {
      throw ConfigError("params CSV " + where(ln) + e.what());
    } catch (const std::logic_error&) {
      throw ConfigError("params CSV " + where(ln) + "bad interval count");
    }
  }
  p.estimate.theta.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  p.estimate.theta.b = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  return p;
}

std::string format_labels_csv(const std::vector<std::string>& ids, const std::vector<int>& labels) {
  if (ids.size() != labels.size()) throw InvalidArgument("format_labels_csv: size mismatch");
  std::string out = "id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check_id(ids[i]);
    out += ids[i] + "," + std::to_string(labels[i]) + "\n";
  }
  return out;
}

std::vector<int> parse_labels_csv(const std::string& text, std::vector<std::string>* ids) {
  const auto lines = lines_of(text);
  std::vector<int> labels;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty() || ln == 0) continue;
    const auto f = split(lines[ln]);
    if (f.size() != 2) throw ConfigError("labels CSV " + where(ln) + "expected 'id,label'");
    try {
      labels.push_back(std::stoi(f[1]));
    } catch (const std::logic_error&) {
      throw ConfigError("labels CSV " + where(ln) + "label is not an integer");
    }
    if (ids != nullptr) ids->push_back(f[0]);
  }
  return labels;
}

std::vector<std::string> factor_ids(std::size_t d) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < d; ++j) out.push_back("f" + std::to_string(j + 1));
  return out;
}

std::string format_fit_json(const FitResult& fit, const std::vector<std::string>& ids) {
  json restarts = json::array();
  for (const auto& r : fit.restarts) {
    restarts.push_back({{"start", r.start},
                        {"seed", r.seed},
                        {"iterations", r.iterations},
                        {"evaluations", r.evaluations},
                        {"nll", std::isfinite(r.nll) ? json(r.nll) : json(nullptr)},
                        {"grad_norm", std::isfinite(r.grad_norm) ? json(r.grad_norm) : json(nullptr)},
                        {"converged", r.converged},
                        {"message", r.message}});
  }
  json j = {{"ids", ids},
            {"lambda", matrix_to_json(fit.lambda_hat.lambda())},
            {"z", matrix_to_json(fit.z_hat)},
            {"nll", fit.nll},
            {"grad_norm", fit.grad_norm},
            {"converged", fit.converged},
            {"iterations", fit.iterations},
            {"best_restart", fit.best_restart},
            {"sigma", matrix_to_json(fit.sigma_hat)},
            {"has_standard_errors", fit.has_standard_errors},
            {"se_z", matrix_to_json(fit.se_z)},
            {"sigma_se", matrix_to_json(fit.sigma_se)},
            {"restarts", std::move(restarts)}};
  return j.dump(1) + "\n";
}

FitResult parse_fit_json(const std::string& text, std::vector<std::string>* ids) {
  try {
    const json j = json::parse(text);
    FitResult f;
    f.lambda_hat = FactorLoadings(matrix_from_json(j.at("lambda"), "lambda"), 0.0);
    f.z_hat = matrix_from_json(j.at("z"), "z");
    f.nll = j.at("nll").get<double>();
    f.grad_norm = j.at("grad_norm").get<double>();
    f.converged = j.at("converged").get<bool>();
    f.iterations = j.at("iterations").get<int>();
    f.best_restart = j.at("best_restart").get<int>();
    f.sigma_hat = matrix_from_json(j.at("sigma"), "sigma");
    f.has_standard_errors = j.at("has_standard_errors").get<bool>();
    f.se_z = matrix_from_json(j.at("se_z"), "se_z");
    f.sigma_se = matrix_from_json(j.at("sigma_se"), "sigma_se");
    for (const auto& r : j.at("restarts")) {
      RestartTrace t;
      t.start = r.at("start").get<std::string>();
      t.seed = r.at("seed").get<std::uint64_t>();
      t.iterations = r.at("iterations").get<int>();
      t.evaluations = r.at("evaluations").get<int>();
      t.nll = r.at("nll").is_null() ? std::numeric_limits<double>::quiet_NaN() : r.at("nll").get<double>();
      t.grad_norm = r.at("grad_norm").is_null() ? std::numeric_limits<double>::infinity()
                                                 : r.at("grad_norm").get<double>();
      t.converged = r.at("converged").get<bool>();
      t.message = r.at("message").get<std::string>();
      f.restarts.push_back(std::move(t));
    }
    if (ids != nullptr) *ids = j.at("ids").get<std::vector<std::string>>();
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("fit JSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("fit JSON: ") + e.what());
  }
}

}  // namespace ctlfm
