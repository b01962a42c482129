#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <system_error>

#include <CLI11.hpp>
#include <json.hpp>

#include "fisherlens/estimators.hpp"
#include "fisherlens/quasiopt.hpp"
#include "fisherlens/simkit.hpp"
#include "fisherlens/stats.hpp"
#include "fisherlens/tikhonov.hpp"

namespace fisherlens::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InfeasibleConstraint:
    case ErrorKind::MaxItersExceeded:
    case ErrorKind::NoRoot:
    case ErrorKind::DegenerateTarget:
    case ErrorKind::NotConverged:
      return kExitSolver;
    default:
      return kExitInput;
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

[[noreturn]] void parse_fail(const std::string& what) {
  throw Error(ErrorKind::Parse, what);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_number(std::string_view field, const fs::path& path, int line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    parse_fail(path.string() + ":" + std::to_string(line) +
               ": not a number: '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

Matrix read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) parse_fail("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string text;
  int line = 0;
  bool header_seen = false;
  while (std::getline(in, text)) {
    ++line;
    const std::string_view body = trim(text);
    if (body.empty() || body.front() == '#') continue;
    // A leading row of column names, as written by write_csv.
    if (rows.empty() && !header_seen && std::isalpha(
            static_cast<unsigned char>(body.front())) &&
        body.substr(0, 3) != "nan" && body.substr(0, 3) != "inf") {
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    size_t start = 0;
    for (;;) {
      const size_t comma = body.find(',', start);
      row.push_back(parse_number(body.substr(start, comma - start), path, line));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      parse_fail(path.string() + ":" + std::to_string(line) +
                 ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) parse_fail(path.string() + ": no data");
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  }
  return m;
}

Vector read_csv_vector(const fs::path& path) {
  const Matrix m = read_csv_matrix(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  parse_fail(path.string() + ": expected a single row or column");
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<Vector>& columns) {
  std::ofstream out(path);
  if (!out) parse_fail("cannot write " + path.string());
  for (size_t j = 0; j < header.size(); ++j) {
    out << (j ? "," : "") << header[j];
  }
  out << '\n';
  Eigen::Index rows = 0;
  for (const auto& c : columns) rows = std::max(rows, c.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (size_t j = 0; j < columns.size(); ++j) {
      if (j) out << ',';
      if (i < columns[j].size()) {
        out << format_double(columns[j](i));
      } else {
        out << "nan";
      }
    }
    out << '\n';
  }
  if (!out) parse_fail("write failed: " + path.string());
}

// Problem files.
namespace {

// A JSON value that is either inline numbers or a CSV path.
Matrix matrix_field(const json& v, const fs::path& base, const char* name) {
  if (v.is_string()) return read_csv_matrix(base / v.get<std::string>());
  if (v.is_number()) return Matrix::Constant(1, 1, v.get<double>());
  if (v.is_array() && !v.empty()) {
    if (v.front().is_array()) {
      const auto rows = static_cast<Eigen::Index>(v.size());
      const auto cols = static_cast<Eigen::Index>(v.front().size());
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = v[static_cast<size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
          parse_fail(std::string(name) + ": ragged rows");
        }
        for (Eigen::Index j = 0; j < cols; ++j) {
          m(i, j) = row[static_cast<size_t>(j)].get<double>();
        }
      }
      return m;
    }
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (size_t i = 0; i < v.size(); ++i) {
      m(static_cast<Eigen::Index>(i), 0) = v[i].get<double>();
    }
    return m;
  }
  parse_fail(std::string(name) + ": expected a number, an array or a CSV path");
}

Vector vector_field(const json& v, const fs::path& base, const char* name) {
  const Matrix m = matrix_field(v, base, name);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  parse_fail(std::string(name) + ": expected a vector");
}

Matrix psf_field(const json& v, const fs::path& base,
                 std::optional<Eigen::Index> image_size) {
  if (!v.is_object()) return matrix_field(v, base, "psf");
  const std::string kind = v.value("kind", "");
  const Eigen::Index m = v.contains("m")   ? v.at("m").get<Eigen::Index>()
                         : image_size      ? *image_size
                                           : 0;
  const Eigen::Index n = v.contains("n") ? v.at("n").get<Eigen::Index>() : m;
  if (n <= 0) parse_fail("psf: grid size n is required");
  PsfSpec spec;
  spec.support = v.value("support", 0);
  if (kind == "sinc2") {
    spec.kind = PsfKind::Sinc2;
    spec.radius = v.at("radius").get<double>();
  } else if (kind == "gaussian") {
    spec.kind = PsfKind::Gaussian;
    spec.sigma_psf = v.at("sigma_psf").get<double>();
  } else if (kind == "custom_kernel") {
    spec.kind = PsfKind::CustomKernel;
    spec.kernel = vector_field(v.at("kernel"), base, "psf.kernel");
  } else {
    parse_fail("psf.kind must be sinc2, gaussian or custom_kernel");
  }
  return make_psf(spec, n, m);
}

}  // namespace

ProblemFile load_problem(const fs::path& path) {
  std::ifstream in(path);
  if (!in) parse_fail("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    parse_fail(path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  ProblemFile p;
  try {
    if (!doc.is_object()) parse_fail("problem file must be a JSON object");
    if (doc.contains("image")) p.image = vector_field(doc["image"], base, "image");
    if (doc.contains("true_object")) {
      p.true_object = vector_field(doc["true_object"], base, "true_object");
    }
    if (!doc.contains("psf")) parse_fail("problem file has no psf");
    p.psf = psf_field(doc["psf"], base,
                      p.image ? std::optional(p.image->size()) : std::nullopt);
    const Eigen::Index m = p.psf.rows();

    const Matrix mean = doc.contains("noise_mean")
                            ? matrix_field(doc["noise_mean"], base, "noise_mean")
                            : Matrix::Zero(1, 1);
    if (mean.size() == 1) {
      p.noise_mean = Vector::Constant(m, mean(0, 0));
    } else {
      p.noise_mean = vector_field(doc["noise_mean"], base, "noise_mean");
    }

    if (!doc.contains("noise_cov")) parse_fail("problem file has no noise_cov");
    const Matrix cov = matrix_field(doc["noise_cov"], base, "noise_cov");
    if (cov.size() == 1) {
      p.noise_cov = cov(0, 0) * Matrix::Identity(m, m);
    } else if (cov.rows() == m && cov.cols() == m) {
      p.noise_cov = cov;
    } else if (cov.cols() == 1 || cov.rows() == 1) {
      p.noise_cov = vector_field(doc["noise_cov"], base, "noise_cov").asDiagonal();
    } else {
      parse_fail("noise_cov must be a scalar, a vector or an m x m matrix");
    }

    if (doc.contains("options")) {
      const json& o = doc["options"];
      p.options.alpha = o.value("alpha", p.options.alpha);
      if (o.contains("alpha_band")) {
        p.options.alpha_low = o["alpha_band"].at(0).get<double>();
        p.options.alpha_high = o["alpha_band"].at(1).get<double>();
      }
      p.options.method = o.value("method", std::string());
      p.options.seed = o.value("seed", std::uint64_t{0});
      p.options.rank_rel_tol = o.value("rank_rel_tol", p.options.rank_rel_tol);
    }
  } catch (const json::exception& e) {
    parse_fail(path.string() + ": " + e.what());
  }
  if (p.image) require_same_size(p.image->size(), p.psf.rows(), "image");
  if (p.true_object) {
    require_same_size(p.true_object->size(), p.psf.cols(), "true_object");
  }
  require_same_size(p.noise_mean.size(), p.psf.rows(), "noise_mean");
  require_same_size(p.noise_cov.rows(), p.psf.rows(), "noise_cov");
  return p;
}

namespace {

struct Outcome {
  std::string method;
  PrincipalComponents p;
  Vector x;
  Vector weights;
  json solver = json::object();
};

std::string canonical_method(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  if (name == "tikhonov-nonneg") return "tikhonov-nn";
  if (name == "quasi-optimal") return "quasiopt";
  return name;
}

std::optional<Method> method_from_name(std::string name) {
  name = canonical_method(std::move(name));
  if (name == "tikhonov-nn") return Method::TikhonovNonneg;
  if (name == "quasiopt") return Method::QuasiOptimal;
  std::replace(name.begin(), name.end(), '-', '_');
  return parse_method(name);
}

Vector retained_ones(const SpectralModel& spec) {
  Vector w = Vector::Zero(spec.size());
  w.head(spec.effective_rank()).setOnes();
  return w;
}

Outcome from_filter(const SpectralModel& spec, const FilterWeights& w,
                    const PrincipalComponents& p_star) {
  FilteredEstimate est = apply_filter(spec, w, p_star);
  Outcome o;
  o.p = std::move(est.components);
  o.x = std::move(est.object);
  o.weights = w.weights();
  return o;
}

json tikhonov_json(const TikhonovSolution& s, bool nonneg) {
  json j{{"gamma", s.gamma}, {"mu", s.mu}, {"iterations", s.iterations}};
  if (nonneg) j["kkt_residual"] = s.kkt_residual;
  return j;
}

Outcome restore_with(const std::string& method, const SpectralModel& spec,
                     double alpha, double target,
                     const std::optional<Vector>& true_object) {
  const PrincipalComponents p_star = lse(spec);
  Outcome o;
  if (method == "lse") {
    o = from_filter(spec, FilterWeights(retained_ones(spec), FilterKind::Custom),
                    p_star);
  } else if (method == "truncated") {
    const Eigen::Index k = truncation_for_target(spec, target);
    o = from_filter(spec, truncated_weights(spec.size(), k), p_star);
    o.solver = {{"count", k}};
  } else if (method == "tikhonov") {
    const TikhonovSolution s = solve_gamma(spec, alpha);
    o.p = s.p_reg;
    o.x = s.x_reg;
    o.weights = s.weights.weights();
    o.solver = tikhonov_json(s, false);
  } else if (method == "tikhonov-nn") {
    const TikhonovSolution s = solve_nonneg(spec, alpha);
    o.p = s.p_reg;
    o.x = s.x_reg;
    o.solver = tikhonov_json(s, true);
  } else if (method == "quasiopt") {
    QuasiOptConfig cfg;
    cfg.alpha = alpha;
    const QuasiOptSolution s = solve(spec, cfg);
    o.p = s.p_filtered;
    o.x = s.x_filtered;
    o.weights = s.weights.weights();
    o.solver = {{"objective", s.objective_value},
                {"constraint_residual", s.constraint_residual},
                {"stationarity", s.stationarity},
                {"multiplier", s.multiplier},
                {"iterations", s.iterations},
                {"seed", to_string(s.seed_used)}};
  } else if (method == "wiener-oracle") {
    if (!true_object) {
      throw Error(ErrorKind::InvalidArgument,
                  "wiener-oracle needs true_object in the problem file");
    }
    require_same_size(true_object->size(), spec.size(), "true_object");
    o = from_filter(spec,
                    wiener_oracle_weights(spec, analyze(spec, *true_object)),
                    p_star);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown method '" + method + "'");
  }
  o.method = method;
  return o;
}

json spectrum_json(const SpectralBasis& basis, const FisherSpectrum& fsp) {
  const Vector& delta = basis.singular_values();
  const Eigen::Index r = basis.effective_rank();
  return {{"n", basis.size()},
          {"m", basis.rows()},
          {"effective_rank", r},
          {"condition_number", fsp.condition_number},
          {"psf_condition_number", delta(0) / delta(r - 1)},
          {"lambda_max", fsp.eigenvalues(0)},
          {"lambda_min", fsp.eigenvalues(r - 1)},
          {"quantile", fsp.quantile}};
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector iota(Eigen::Index n) {
  return Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) parse_fail("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) parse_fail("cannot create " + dir.string() + ": " + ec.message());
}

void check_alpha(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::DomainError,
          "alpha must lie in (0, 1)");
}

// restore

struct RestoreArgs {
  std::string problem;
  std::string method;
  std::optional<double> alpha;
  std::string out;
  bool oracle_ok = false;
};

int cmd_restore(const RestoreArgs& a, std::ostream& out) {
  const ProblemFile pf = load_problem(a.problem);
  if (!pf.image) parse_fail("problem file has no image");
  const std::string method = canonical_method(
      !a.method.empty()            ? a.method
      : !pf.options.method.empty() ? pf.options.method
                                   : "quasiopt");
  if (method == "wiener-oracle" && !a.oracle_ok) {
    throw Error(ErrorKind::InvalidArgument,
                "wiener-oracle uses the true object; pass "
                "--i-have-the-true-object to run it");
  }
  const double alpha = a.alpha.value_or(pf.options.alpha);
  check_alpha(alpha);

  const GeneralLinearModel model(pf.psf, pf.noise_mean, pf.noise_cov);
  const WhitenedProblem wp = whiten(model, *pf.image);
  const SpectralModel spec =
      decompose(wp.model, wp.whitened_image, pf.options.rank_rel_tol);
  const int n = static_cast<int>(spec.size());
  const double target = chi2_upper_quantile(alpha, n);
  const FeasibilitySpec band(pf.options.alpha_low, pf.options.alpha_high, n);

  const Outcome o = restore_with(method, spec, alpha, target, pf.true_object);
  const double theta = misfit(spec, o.p);

  const fs::path dir(a.out);
  ensure_dir(dir);
  write_csv(dir / "estimate.csv", {"i", "estimate"}, {iota(n), o.x});
  write_csv(dir / "components.csv",
            {"k", "lambda", "phi", "p_lse", "p_estimate"},
            {iota(n), spec.fisher_eigenvalues(), spec.refined_image(),
             lse(spec).coeffs, o.p.coeffs});
  if (o.weights.size() > 0) {
    write_csv(dir / "weights.csv", {"k", "weight"}, {iota(n), o.weights});
  }

  const FisherSpectrum fsp = fisher_spectrum_at(spec.basis(), target);
  json report{{"schema_version", kReportSchemaVersion},
              {"status", "ok"},
              {"method", method},
              {"alpha", alpha},
              {"target_misfit", target},
              {"misfit", theta},
              {"significance", significance_of(theta, n)},
              {"feasible", is_feasible(theta, band)},
              {"band",
               {{"alpha_low", band.alpha_low()},
                {"alpha_high", band.alpha_high()},
                {"lower", band.lower_bound()},
                {"upper", std::isfinite(band.upper_bound())
                              ? json(band.upper_bound())
                              : json(nullptr)}}},
              {"spectrum", spectrum_json(spec.basis(), fsp)},
              {"solver", o.solver}};
  if (pf.true_object) {
    report["rms_error"] =
        (o.x - *pf.true_object).norm() / std::sqrt(static_cast<double>(n));
  }
  write_json(dir / "restore.json", report);
  out << report.dump(2) << '\n';
  return kExitOk;
}

// diagnose

int cmd_diagnose(const std::string& problem, std::optional<double> alpha_arg,
                 bool as_json, std::ostream& out) {
  const ProblemFile pf = load_problem(problem);
  const double alpha = alpha_arg.value_or(pf.options.alpha);
  check_alpha(alpha);
  const GeneralLinearModel model(pf.psf, pf.noise_mean, pf.noise_cov);
  const SpectralBasis basis =
      decompose_basis(whiten_psf(model), pf.options.rank_rel_tol);
  const int n = static_cast<int>(basis.size());
  const double t = chi2_upper_quantile(alpha, n);
  const FisherSpectrum fsp = fisher_spectrum_at(basis, t);

  if (as_json) {
    json j = spectrum_json(basis, fsp);
    j["schema_version"] = kReportSchemaVersion;
    j["alpha"] = alpha;
    j["singular_values"] = to_std(basis.singular_values());
    j["fisher_eigenvalues"] = to_std(basis.fisher_eigenvalues());
    j["semi_axes"] = to_std(fsp.semi_axes);
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  const Eigen::Index r = basis.effective_rank();
  out << "n " << n << "  m " << basis.rows() << "  effective rank " << r
      << '\n'
      << "condition number (Fisher) " << format_double(fsp.condition_number)
      << '\n'
      << "condition number (whitened PSF) "
      << format_double(basis.singular_values()(0) /
                       basis.singular_values()(r - 1))
      << '\n'
      << "alpha " << format_double(alpha) << "  t " << format_double(t)
      << '\n'
      << "k,delta,lambda,semi_axis\n";
  for (Eigen::Index k = 0; k < n; ++k) {
    out << k << ',' << format_double(basis.singular_values()(k)) << ','
        << format_double(basis.fisher_eigenvalues()(k)) << ','
        << (k < r ? format_double(fsp.semi_axes(k)) : std::string("inf"))
        << '\n';
  }
  return kExitOk;
}

// simulate

struct SimulateArgs {
  std::string case_name = "fig2";
  int trials = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::string problem;
  std::string alpha_mode;
  std::optional<double> alpha;
  std::string methods;
  int threads = 0;
};

ModelConfig custom_config(const std::string& problem) {
  if (problem.empty()) parse_fail("--case custom needs --problem");
  const ProblemFile pf = load_problem(problem);
  if (!pf.true_object) parse_fail("custom simulation needs true_object");
  const Eigen::Index m = pf.psf.rows();
  const double s2 = pf.noise_cov(0, 0);
  const bool white =
      (pf.noise_cov - s2 * Matrix::Identity(m, m)).cwiseAbs().maxCoeff() == 0.0;
  const bool flat = (pf.noise_mean.array() == pf.noise_mean(0)).all();
  if (!white || !flat || s2 < 0.0) {
    throw Error(ErrorKind::InvalidArgument,
                "custom simulation needs scalar white noise");
  }
  ModelConfig c;
  c.name = "custom";
  c.psf = pf.psf;
  c.object = *pf.true_object;
  c.noise_mean = pf.noise_mean(0);
  c.noise_sigma = std::sqrt(s2);
  c.alpha = pf.options.alpha;
  c.rank_rel_tol = pf.options.rank_rel_tol;
  return c;
}

std::vector<Method> parse_methods(const std::string& list) {
  if (list.empty()) return all_methods();
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto m = method_from_name(std::string(trim(name)));
    if (!m) {
      throw Error(ErrorKind::InvalidArgument, "unknown method '" + name + "'");
    }
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

json comparison_json(const MethodAggregate& q, const MethodAggregate& w) {
  std::vector<double> ratios;
  int within = 0;
  int similar = 0;
  for (size_t i = 0; i < q.rms.size(); ++i) {
    if (!std::isfinite(q.rms[i]) || !std::isfinite(w.rms[i])) continue;
    ratios.push_back(q.rms[i] / w.rms[i]);
    if (q.rms[i] <= 1.25 * w.rms[i]) ++within;
    if (std::abs(q.rms[i] - w.rms[i]) <= 0.25 * w.rms[i]) ++similar;
  }
  const double n = static_cast<double>(q.rms.size());
  return {{"compared_trials", ratios.size()},
          {"ratio_median", median(ratios)},
          {"fraction_within_1_25", within / n},
          {"fraction_similar_0_25", similar / n}};
}

json aggregate_json(const MethodAggregate& a) {
  json codes = json::object();
  for (const auto& [code, count] : a.failure_codes) codes[code] = count;
  return {{"successes", a.successes},
          {"failures", a.failures},
          {"rms_mean", a.rms_mean},
          {"rms_variance", a.rms_variance},
          {"significance_mean", a.significance_mean},
          {"failure_codes", codes}};
}

// The four panels: object and image, weights, components, estimates.
void write_panels(const fs::path& dir, const Experiment& ex,
                  const TrialReport& trial) {
  const Eigen::Index n = ex.size();
  const ModelConfig& c = ex.config();
  const Vector blurred = c.psf * c.object;
  write_csv(dir / "object_image.csv", {"i", "object", "blurred", "image"},
            {iota(std::max(n, blurred.size())), c.object, blurred, trial.image});

  const Vector missing = Vector::Constant(n, std::nan(""));
  std::vector<std::string> wh{"k"};
  std::vector<Vector> wc{iota(n)};
  std::vector<std::string> ph{"k", "p_true", "p_lse"};
  std::vector<Vector> pc{iota(n), ex.true_components().coeffs,
                         ex.true_components().coeffs + trial.lse_error};
  std::vector<std::string> eh{"i", "object"};
  std::vector<Vector> ec{iota(n), c.object};
  for (const MethodResult& r : trial.results) {
    const std::string name(to_string(r.method));
    if (r.method != Method::TikhonovNonneg) {
      wh.push_back(name);
      wc.push_back(r.ok && r.weights.size() > 0 ? r.weights : missing);
    }
    ph.push_back(name);
    pc.push_back(r.ok ? r.components : missing);
    eh.push_back(name);
    ec.push_back(r.ok ? r.estimate : missing);
  }
  write_csv(dir / "weights.csv", wh, wc);
  write_csv(dir / "components.csv", ph, pc);
  write_csv(dir / "estimates.csv", eh, ec);
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  require(a.trials >= 1, ErrorKind::InvalidArgument, "--trials must be >= 1");
  ModelConfig cfg;
  if (a.case_name == "fig2") {
    cfg = fig2_config();
  } else if (a.case_name == "fig3") {
    cfg = fig3_config();
  } else if (a.case_name == "custom") {
    cfg = custom_config(a.problem);
  } else {
    parse_fail("--case must be fig2, fig3 or custom");
  }
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.alpha_mode == "fixed") {
    cfg.alpha_mode = AlphaMode::Fixed;
  } else if (a.alpha_mode == "match_wiener" || a.alpha_mode == "match-wiener") {
    cfg.alpha_mode = AlphaMode::MatchWiener;
  } else if (!a.alpha_mode.empty()) {
    parse_fail("--alpha-mode must be fixed or match_wiener");
  }
  cfg.quasi.alpha = cfg.alpha;
  const std::vector<Method> methods = parse_methods(a.methods);

  const Experiment ex(cfg);
  MonteCarloOptions opt;
  opt.n_trials = a.trials;
  opt.base_seed = a.seed;
  opt.threads = a.threads;
  const MonteCarloReport rep = run_monte_carlo(ex, methods, opt);
  const TrialReport& first = rep.trials.front();

  const fs::path dir(a.out);
  ensure_dir(dir);
  write_panels(dir, ex, first);

  const int n = static_cast<int>(rep.size);
  const Eigen::Index r = ex.basis().effective_rank();
  json agg = json::object();
  for (const MethodAggregate& m : rep.methods) {
    agg[std::string(to_string(m.method))] = aggregate_json(m);
  }
  json report{{"schema_version", kReportSchemaVersion},
              {"case", cfg.name},
              {"n", n},
              {"effective_rank", r},
              {"trials", rep.n_trials},
              {"seed", rep.base_seed},
              {"alpha_mode", to_string(rep.alpha_mode)},
              {"alpha", rep.alpha},
              {"methods", agg}};

  json law{{"mean", rep.misfit_mean},
           {"variance", rep.misfit_variance},
           {"expected_mean", n},
           {"expected_variance", 2 * n},
           {"ks_statistic", rep.misfit_ks},
           {"ks_critical_1pct", ks_critical_value(rep.n_trials, 0.01)}};
  report["misfit_true"] = law;

  const double trials = static_cast<double>(rep.n_trials);
  const Vector se = (rep.lse_expected_variance.head(r) / trials).cwiseSqrt();
  json lse_summary{
      {"max_abs_bias_over_se",
       (rep.lse_bias.head(r).array().abs() / se.array()).maxCoeff()}};
  if (rep.n_trials > 1) {
    lse_summary["max_rel_variance_error"] =
        (rep.lse_variance.head(r).array() /
             rep.lse_expected_variance.head(r).array() -
         1.0)
            .abs()
            .maxCoeff();
  } else {
    lse_summary["max_rel_variance_error"] = nullptr;
  }
  report["lse"] = lse_summary;

  const MethodAggregate* q = rep.find(Method::QuasiOptimal);
  const MethodAggregate* w = rep.find(Method::WienerOracle);
  if (q && w) report["quasi_vs_wiener"] = comparison_json(*q, *w);

  json shape = json::object();
  if (const MethodResult* t = first.find(Method::Tikhonov); t && t->ok) {
    shape["tikhonov_nonincreasing"] = is_nonincreasing(t->weights, r, 1e-12);
  }
  if (const MethodResult* wr = first.find(Method::WienerOracle); wr && wr->ok) {
    shape["wiener_interior_maximum"] = has_interior_maximum(wr->weights, r);
  }
  if (const MethodResult* qr = first.find(Method::QuasiOptimal); qr && qr->ok) {
    shape["quasi_interior_maximum"] = has_interior_maximum(qr->weights, r);
  }
  report["weight_shape"] = shape;

  json per_trial = json::array();
  for (int i = 0; i < rep.n_trials; ++i) {
    const auto idx = static_cast<size_t>(i);
    json rms = json::object();
    for (const MethodAggregate& m : rep.methods) {
      rms[std::string(to_string(m.method))] =
          std::isfinite(m.rms[idx]) ? json(m.rms[idx]) : json(nullptr);
    }
    per_trial.push_back({{"seed", rep.base_seed + idx},
                         {"true_misfit", rep.true_misfits[idx]},
                         {"rms", rms}});
  }
  report["per_trial"] = per_trial;

  write_json(dir / "report.json", report);
  out << "wrote " << (dir / "report.json").string() << '\n';
  return kExitOk;
}

void report_error(std::ostream& err, std::string_view reason,
                  const std::string& message) {
  err << json{{"status", "error"}, {"reason", reason}, {"message", message}}
             .dump()
      << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Restoration of blurred, noisy 1-D signals by filtered "
               "principal components",
               "fisherlens"};
  app.require_subcommand(1);

  RestoreArgs ra;
  auto* restore = app.add_subcommand("restore", "Restore an image");
  restore->add_option("problem", ra.problem, "Problem JSON")->required();
  restore->add_option(
      "--method", ra.method,
      "lse|truncated|tikhonov|tikhonov-nn|quasiopt|wiener-oracle");
  restore->add_option("--alpha", ra.alpha, "Significance level (default 0.5)");
  restore->add_option("--out", ra.out, "Output directory")->required();
  restore->add_flag("--i-have-the-true-object", ra.oracle_ok,
                    "Allow wiener-oracle");

  std::string dg_problem;
  std::optional<double> dg_alpha;
  bool dg_json = false;
  auto* diagnose = app.add_subcommand("diagnose", "Report the Fisher spectrum");
  diagnose->add_option("problem", dg_problem, "Problem JSON")->required();
  diagnose->add_option("--alpha", dg_alpha, "Significance level for semi-axes");
  diagnose->add_flag("--json", dg_json, "JSON output");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run a simulated model case");
  simulate->add_option("--case", sa.case_name, "fig2|fig3|custom");
  simulate->add_option("--trials", sa.trials, "Number of trials");
  simulate->add_option("--seed", sa.seed, "Base seed");
  simulate->add_option("--out", sa.out, "Output directory")->required();
  simulate->add_option("--problem", sa.problem,
                       "Problem JSON for --case custom");
  simulate->add_option("--alpha-mode", sa.alpha_mode, "fixed|match_wiener");
  simulate->add_option("--alpha", sa.alpha, "Significance level");
  simulate->add_option("--methods", sa.methods, "Comma-separated method list");
  simulate->add_option("--threads", sa.threads, "Worker threads (0: auto)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, error_code(ErrorKind::Parse), e.what());
    return kExitInput;
  }

  try {
    if (*restore) return cmd_restore(ra, out);
    if (*diagnose) return cmd_diagnose(dg_problem, dg_alpha, dg_json, out);
    return cmd_simulate(sa, out);
  } catch (const Error& e) {
    report_error(err, error_code(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kExitSolver;
  }
}

}  // namespace fisherlens::cli
