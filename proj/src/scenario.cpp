#include "imse/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <unistd.h>

#include "imse/channel_sim.hpp"
#include "imse/errors.hpp"
#include "imse/gaussian_info.hpp"
#include "imse/lti_rates.hpp"
#include "imse/ltv_rates.hpp"
#include "imse/nonlinear_rates.hpp"

namespace imse {

namespace {

const std::set<std::string> kKinds = {"channel",         "lti_control",       "lti_filtering",
                                      "ltv_control",     "ltv_filtering",     "nonlinear_control",
                                      "nonlinear_filtering", "oracle_crosscheck"};
const std::set<std::string> kTopLevel = {
    "schema", "name",          "kind",      "description", "system",   "horizon",
    "trials", "particles",     "seed",      "epsilon",     "epsilon_sweep", "estimator",
    "regression_degree",       "outputs",   "tolerance"};
const std::set<std::string> kOutputs = {"report_json", "ledger_csv", "sandwich_csv"};

[[noreturn]] void schema_error(const std::string& path, const std::string& msg) {
  fail(ErrorCode::SchemaError, path + ": " + msg);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) schema_error(path + key, "required field is missing");
  return obj.at(key);
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a number");
  return j.get<double>();
}

long long as_integer(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) {
    double v = j.get<double>();
    if (std::floor(v) == v && std::abs(v) < 9e15) return static_cast<long long>(v);
  }
  schema_error(path, "expected an integer");
}

int positive_int(const json& doc, const std::string& key) {
  long long v = as_integer(require(doc, key, ""), key);
  if (v < 1 || v > 100000000) schema_error(key, "must be a positive integer");
  return static_cast<int>(v);
}

Mat parse_matrix(const json& j, const std::string& path) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (j.is_object() && j.contains("diag")) {
    const json& d = j.at("diag");
    if (!d.is_array() || d.empty()) schema_error(path + ".diag", "expected a non-empty array");
    Vec v(static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i)
      v(static_cast<Eigen::Index>(i)) = as_number(d[i], path + ".diag");
    return v.asDiagonal();
  }
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty())
    schema_error(path, "expected a number, {diag: [...]} or row-major nested arrays");
  const std::size_t rows = j.size(), cols = j[0].size();
  Mat M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) schema_error(path, "ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c)
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_number(j[r][c], path);
  }
  return M;
}

MatrixSequence parse_sequence(const json& j, const std::string& path) {
  if (j.is_object() && j.contains("period")) {
    long long p = as_integer(j.at("period"), path + ".period");
    const json& ms = require(j, "matrices", path + ".");
    if (!ms.is_array() || static_cast<long long>(ms.size()) != p || p < 1)
      schema_error(path + ".matrices", "must hold exactly `period` matrices");
    std::vector<Mat> cycle;
    for (std::size_t i = 0; i < ms.size(); ++i)
      cycle.push_back(parse_matrix(ms[i], path + ".matrices[" + std::to_string(i) + "]"));
    return MatrixSequence::periodic(std::move(cycle));
  }
  if (j.is_object() && j.contains("list")) {
    const json& ms = j.at("list");
    if (!ms.is_array() || ms.empty()) schema_error(path + ".list", "expected a non-empty array");
    std::vector<Mat> items;
    for (std::size_t i = 0; i < ms.size(); ++i)
      items.push_back(parse_matrix(ms[i], path + ".list[" + std::to_string(i) + "]"));
    return MatrixSequence::list(std::move(items));
  }
  return MatrixSequence::constant(parse_matrix(j, path));
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) schema_error(path + it.key(), "unknown field");
}

LoopMode kind_mode(const std::string& kind) {
  return kind.ends_with("filtering") ? LoopMode::filtering : LoopMode::control;
}

LtiSystemSpec build_lti(const json& sys, LoopMode mode) {
  check_keys(sys, {"A", "B", "C", "x0_cov"}, "system.");
  LtiSystemSpec s;
  s.A = parse_matrix(require(sys, "A", "system."), "system.A");
  s.B = parse_matrix(require(sys, "B", "system."), "system.B");
  s.C = parse_matrix(require(sys, "C", "system."), "system.C");
  if (sys.contains("x0_cov")) s.x0_cov = parse_matrix(sys.at("x0_cov"), "system.x0_cov");
  s.mode = mode;
  return s;
}

LtvSystemSpec build_ltv(const json& sys, LoopMode mode) {
  check_keys(sys, {"A", "B", "C", "x0_cov", "split", "norm_cap"}, "system.");
  LtvSystemSpec s;
  s.A = parse_sequence(require(sys, "A", "system."), "system.A");
  s.B = parse_sequence(require(sys, "B", "system."), "system.B");
  s.C = parse_sequence(require(sys, "C", "system."), "system.C");
  if (sys.contains("x0_cov")) s.x0_cov = parse_matrix(sys.at("x0_cov"), "system.x0_cov");
  if (sys.contains("norm_cap")) s.norm_cap = as_number(sys.at("norm_cap"), "system.norm_cap");
  if (sys.contains("split")) {
    const json& sp = sys.at("split");
    DeclaredSplit d;
    d.T = parse_sequence(require(sp, "T", "system.split."), "system.split.T");
    d.unstable_dim = static_cast<int>(
        as_integer(require(sp, "unstable_dim", "system.split."), "system.split.unstable_dim"));
    s.declared_split = std::move(d);
  }
  s.mode = mode;
  return s;
}

Mat cholesky_factor(const Mat& S) {
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) fail(ErrorCode::NotPSD, "x0_cov is not positive definite");
  return llt.matrixL();
}

NonlinearPlantSpec build_nonlinear(const json& sys, LoopMode mode, double epsilon) {
  check_keys(sys, {"model", "A", "B", "C", "D", "x0_cov", "coefficients", "power_cap"}, "system.");
  const std::string model = sys.value("model", std::string("linear"));
  static const std::map<std::string, std::set<std::string>> registry = {
      {"linear", {}},
      {"tanh-perturbed-linear", {"alpha"}},
      {"cubic-sensor", {"beta"}},
      {"saturated-linear", {"cubic", "limit"}}};
  auto entry = registry.find(model);
  if (entry == registry.end()) schema_error("system.model", "unknown nonlinearity '" + model + "'");
  json coeffs = sys.value("coefficients", json::object());
  if (!coeffs.is_object()) schema_error("system.coefficients", "expected an object");
  check_keys(coeffs, entry->second, "system.coefficients.");
  auto coeff = [&](const char* key, double dflt) {
    return coeffs.contains(key) ? as_number(coeffs.at(key), std::string("system.coefficients.") + key)
                                : dflt;
  };

  Mat A = parse_matrix(require(sys, "A", "system."), "system.A");
  Mat B = parse_matrix(require(sys, "B", "system."), "system.B");
  Mat C = parse_matrix(require(sys, "C", "system."), "system.C");
  if (A.rows() != A.cols() || B.rows() != A.rows() || C.cols() != A.rows())
    fail(ErrorCode::DimensionMismatch, "system matrices have inconsistent shapes");
  Mat X0 = sys.contains("x0_cov") ? parse_matrix(sys.at("x0_cov"), "system.x0_cov")
                                  : Mat::Identity(A.rows(), A.rows());

  NonlinearPlantSpec p;
  p.mode = mode;
  p.state_dim = static_cast<int>(A.rows());
  p.obs_dim = static_cast<int>(C.rows());
  p.epsilon = epsilon;
  if (sys.contains("power_cap")) p.power_cap = as_number(sys.at("power_cap"), "system.power_cap");

  if (model == "tanh-perturbed-linear") {
    double alpha = coeff("alpha", 0.05);
    p.f = [A, alpha](int, const Vec& x) -> Vec {
      return A * x + alpha * x.array().tanh().matrix();
    };
  } else if (model == "saturated-linear") {
    double cubic = coeff("cubic", 0.0), limit = coeff("limit", 10.0);
    if (!(limit > 0.0)) schema_error("system.coefficients.limit", "must be positive");
    p.f = [A, cubic, limit](int, const Vec& x) -> Vec {
      Vec y = A * x + cubic * x.array().cube().matrix();
      return y.cwiseMax(-limit).cwiseMin(limit);
    };
  } else {
    p.f = [A](int, const Vec& x) -> Vec { return A * x; };
  }
  if (model == "cubic-sensor") {
    double beta = coeff("beta", 0.1);
    p.h = [C, beta](int, const Vec& x) -> Vec {
      Vec z = C * x;
      return z + beta * z.array().cube().matrix();
    };
  } else {
    p.h = [C](int, const Vec& x) -> Vec { return C * x; };
  }
  p.b = [B](int, const Vec&) -> Mat { return B; };
  if (mode == LoopMode::control) {
    Mat D = sys.contains("D") ? parse_matrix(sys.at("D"), "system.D")
                              : Mat::Identity(C.rows(), C.rows());
    if (D.cols() != C.rows() || D.rows() != B.cols())
      fail(ErrorCode::DimensionMismatch, "controller D must map outputs to inputs");
    p.g = [D](int, const Vec& y) -> Vec { return D * y; };
    p.g_invertible = D.rows() == D.cols() && std::abs(D.determinant()) > 1e-12;
  } else if (sys.contains("D")) {
    schema_error("system.D", "controller gain only applies to control kinds");
  }
  Mat L = cholesky_factor(X0);
  p.x0_sampler = [L](Rng& rng) -> Vec { return L * rng.normal_vec(L.cols()); };
  return p;
}

struct ChannelSetup {
  LinearChannel lc;
  int dim = 1;
};

ChannelSetup build_channel(const json& sys, int horizon) {
  ChannelSetup c;
  if (sys.contains("lti")) {
    check_keys(sys, {"lti"}, "system.");
    LtiSystemSpec s = build_lti(sys.at("lti"), LoopMode::control);
    c.lc = lti_control_channel(s, horizon);
    c.dim = static_cast<int>(s.C.rows());
    return c;
  }
  check_keys(sys, {"message_cov", "F"}, "system.");
  c.lc.message_cov = parse_matrix(require(sys, "message_cov", "system."), "system.message_cov");
  MatrixSequence F = parse_sequence(require(sys, "F", "system."), "system.F");
  if (F.cols() != c.lc.message_cov.rows())
    fail(ErrorCode::DimensionMismatch, "F must have message_dim columns");
  c.dim = static_cast<int>(F.rows());
  c.lc.F = [F](int i) -> Mat { return F.at(i); };
  return c;
}

Estimator parse_estimator(const json& doc) {
  std::string e = doc.value("estimator", std::string("closed_form"));
  if (e == "closed_form") return Estimator::closed_form;
  if (e == "regression") return Estimator::regression;
  if (e == "particle") return Estimator::particle;
  schema_error("estimator", "expected closed_form, regression or particle");
}

void validate_document(const json& doc) {
  if (!doc.is_object()) schema_error("$", "scenario must be a JSON object");
  check_keys(doc, kTopLevel, "");
  if (doc.contains("schema") && as_integer(doc.at("schema"), "schema") != 1)
    schema_error("schema", "only schema version 1 is supported");
  const json& name = require(doc, "name", "");
  if (!name.is_string() || name.get<std::string>().empty())
    schema_error("name", "expected a non-empty string");
  const json& kindj = require(doc, "kind", "");
  if (!kindj.is_string() || !kKinds.count(kindj.get<std::string>()))
    schema_error("kind", "unknown scenario kind");
  const std::string kind = kindj.get<std::string>();
  long long seed = as_integer(require(doc, "seed", ""), "seed");
  if (seed < 0) schema_error("seed", "must be non-negative");
  int horizon = positive_int(doc, "horizon");
  if (!require(doc, "system", "").is_object()) schema_error("system", "expected an object");

  const bool filtering = kind.ends_with("filtering") || kind == "oracle_crosscheck";
  if (doc.contains("epsilon")) {
    if (!filtering) schema_error("epsilon", "only filtering kinds take epsilon");
    if (!(as_number(doc.at("epsilon"), "epsilon") >= 0.0)) schema_error("epsilon", "must be >= 0");
  }
  if (doc.contains("epsilon_sweep")) {
    if (!kind.ends_with("filtering") || kind.starts_with("nonlinear"))
      schema_error("epsilon_sweep", "only linear filtering kinds take an epsilon sweep");
    const json& sw = doc.at("epsilon_sweep");
    if (!sw.is_array() || sw.empty()) schema_error("epsilon_sweep", "expected a non-empty array");
    for (const auto& v : sw)
      if (!(as_number(v, "epsilon_sweep") > 0.0)) schema_error("epsilon_sweep", "values must be > 0");
  }
  if (doc.contains("outputs")) {
    const json& o = doc.at("outputs");
    if (!o.is_array()) schema_error("outputs", "expected an array");
    for (const auto& v : o)
      if (!v.is_string() || !kOutputs.count(v.get<std::string>()))
        schema_error("outputs", "entries must be report_json, ledger_csv or sandwich_csv");
  }
  if (doc.contains("tolerance") && kind != "oracle_crosscheck")
    schema_error("tolerance", "only oracle_crosscheck takes a tolerance");
  if (doc.contains("tolerance") && !(as_number(doc.at("tolerance"), "tolerance") > 0.0))
    schema_error("tolerance", "must be positive");

  if (kind.starts_with("nonlinear")) {
    positive_int(doc, "trials");
    positive_int(doc, "particles");
  }
  if (kind == "channel") {
    Estimator e = parse_estimator(doc);
    if (e != Estimator::closed_form) positive_int(doc, "trials");
    if (e == Estimator::particle) positive_int(doc, "particles");
    if (doc.contains("regression_degree")) {
      long long d = as_integer(doc.at("regression_degree"), "regression_degree");
      if (d < 1 || d > 5) schema_error("regression_degree", "must lie in [1, 5]");
    }
  } else {
    if (doc.contains("estimator")) schema_error("estimator", "only channel kinds take an estimator");
    if (doc.contains("regression_degree"))
      schema_error("regression_degree", "only channel kinds take a regression degree");
  }

  // Structural checks of the system block; no computation happens here.
  const json& sys = doc.at("system");
  double eps = doc.value("epsilon", 0.0);
  if (kind.starts_with("lti")) {
    build_lti(sys, kind_mode(kind));
  } else if (kind == "oracle_crosscheck") {
    std::string m = sys.value("mode", std::string("control"));
    if (m != "control" && m != "filtering") schema_error("system.mode", "expected control or filtering");
    json lti = sys;
    lti.erase("mode");
    build_lti(lti, m == "control" ? LoopMode::control : LoopMode::filtering);
  } else if (kind.starts_with("ltv")) {
    build_ltv(sys, kind_mode(kind));
  } else if (kind.starts_with("nonlinear")) {
    build_nonlinear(sys, kind_mode(kind), eps);
  } else {
    if (sys.contains("lti")) {
      check_keys(sys, {"lti"}, "system.");
      build_lti(sys.at("lti"), LoopMode::control);
    } else {
      build_channel(sys, horizon);
    }
  }
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json opt(const std::optional<double>& v, double u) {
  return v ? json(*v * u) : json(nullptr);
}

// Diagnostics that carry information units rather than MMSE or counts.
bool is_info_key(const std::string& k) {
  static const std::set<std::string> keys = {"info_rate",      "dare_rate",      "capacity_steady",
                                             "bode_full_window", "bode_limsup",  "rde_rate_steady",
                                             "rde_rate_telescoped", "clb_spectrum"};
  return keys.count(k) > 0;
}

json rate_json(const RateReport& r, double u) {
  json j;
  j["rate_exact"] = opt(r.rate_exact, u);
  j["rate_lower"] = r.rate_lower * u;
  j["rate_upper"] = r.rate_upper * u;
  j["rate_lower_limsup"] = r.rate_lower_limsup * u;
  j["rate_upper_limsup"] = r.rate_upper_limsup * u;
  j["rate_lower_full"] = r.rate_lower_full * u;
  j["rate_upper_full"] = r.rate_upper_full * u;
  j["capacity"] = opt(r.capacity, u);
  j["route"] = r.route;
  j["horizon"] = r.horizon;
  json d = json::object();
  for (const auto& [k, v] : r.diagnostics) d[k] = is_info_key(k) ? v * u : v;
  j["diagnostics"] = d;
  json b = json::object();
  for (const auto& [k, v] : r.boundary_terms) b[k] = v;
  j["boundary_terms"] = b;
  return j;
}

std::string ledger_csv(const std::vector<double>& cm, const std::vector<double>& pm,
                       const std::vector<double>& scm, const std::vector<double>& spm) {
  std::ostringstream os;
  os << "step,cmmse,pmmse,stderr_cmmse,stderr_pmmse\n";
  for (std::size_t i = 0; i < cm.size(); ++i)
    os << i << ',' << num(cm[i]) << ',' << num(pm[i]) << ',' << num(scm[i]) << ',' << num(spm[i])
       << '\n';
  return os.str();
}

struct SandwichRow {
  double lower = 0.0, info = NAN, upper = 0.0;
  Verdict verdict = Verdict::inconclusive;
};

std::string sandwich_csv(const std::vector<std::pair<std::string, SandwichRow>>& rows, double u) {
  std::ostringstream os;
  os << "lower,info,upper,verdict\n";
  for (const auto& [label, r] : rows)
    os << num(r.lower * u) << ',' << num(r.info * u) << ',' << num(r.upper * u) << ','
       << verdict_name(r.verdict) << '\n';
  return os.str();
}

SandwichRow rate_sandwich(const RateReport& r) {
  SandwichRow s;
  s.lower = r.rate_lower;
  s.upper = r.rate_upper;
  s.info = r.diagnostics.at("info_rate");
  const double tol = 1e-9 * std::max(1.0, std::abs(s.info));
  if (!std::isfinite(s.lower) || !std::isfinite(s.upper) || !std::isfinite(s.info))
    s.verdict = Verdict::inconclusive;
  else
    s.verdict = (s.lower - tol <= s.info && s.info <= s.upper + tol) ? Verdict::holds
                                                                      : Verdict::violated;
  return s;
}

json sandwich_json(const SandwichRow& s, double u) {
  return json{{"lower", s.lower * u},
              {"info", std::isnan(s.info) ? json(nullptr) : json(s.info * u)},
              {"upper", s.upper * u},
              {"verdict", verdict_name(s.verdict)}};
}

json sandwich_report_json(const SandwichReport& s, double u) {
  return json{{"lower", s.lower * u},           {"info", s.info * u},
              {"upper", s.upper * u},           {"sigma_lower", s.sigma_lower * u},
              {"sigma_upper", s.sigma_upper * u}, {"rate_lower", s.rate_lower * u},
              {"rate_info", s.rate_info * u},   {"rate_upper", s.rate_upper * u},
              {"verdict", verdict_name(s.verdict)}};
}

json footnote_json(const FootnoteDiagnostics& f, double u) {
  return json{{"eta", f.eta},
              {"unstable_rate", f.unstable_rate * u},
              {"identity_a_lhs", f.identity_a_lhs},
              {"identity_a_rhs", f.identity_a_rhs},
              {"identity_a_residual", f.identity_a_residual},
              {"steady_cmmse", f.steady_cmmse},
              {"steady_pmmse", f.steady_pmmse},
              {"inequality_b", f.inequality_b},
              {"inequality_c", f.inequality_c},
              {"trace_relation_residual", f.trace_relation_residual},
              {"doubled_trace_gap", f.doubled_trace_gap},
              {"woodbury_residual", f.woodbury_residual},
              {"causal_floor", f.causal_floor},
              {"causal_floor_respected", f.causal_floor_respected}};
}

json vanishing_json(const VanishingNoiseDiagnostics& v) {
  json levels = json::array();
  for (const auto& l : v.levels)
    levels.push_back({{"epsilon", l.epsilon},
                      {"stable_norm", l.stable_norm},
                      {"cross_norm", l.cross_norm},
                      {"antistable_norm", l.antistable_norm},
                      {"antistable_distance", l.antistable_distance}});
  json j;
  j["levels"] = levels;
  j["stable_slope"] = v.stable_slope ? json(*v.stable_slope) : json(nullptr);
  j["cross_slope"] = v.cross_slope ? json(*v.cross_slope) : json(nullptr);
  j["antistable_limit_norm"] = v.antistable_limit.size() ? v.antistable_limit.norm() : 0.0;
  j["extrapolated_distance"] = v.extrapolated_distance ? json(*v.extrapolated_distance) : json(nullptr);
  j["unstable_dim"] = v.unstable_dim;
  return j;
}

json empty_headline() {
  return json{{"rate_exact", nullptr},        {"rate_lower", nullptr}, {"rate_upper", nullptr},
              {"capacity", nullptr},          {"info_rate", nullptr},  {"stable_block_norm", nullptr},
              {"antistable_block", nullptr},  {"verdict", nullptr}};
}

void headline_from_rates(json& h, const RateReport& r, double u) {
  h["rate_exact"] = opt(r.rate_exact, u);
  h["rate_lower"] = r.rate_lower * u;
  h["rate_upper"] = r.rate_upper * u;
  h["capacity"] = opt(r.capacity, u);
  auto it = r.diagnostics.find("info_rate");
  if (it != r.diagnostics.end()) h["info_rate"] = it->second * u;
}

void headline_blocks(json& h, const LtvSystemSpec& spec, double eps, int horizon) {
  if (!(eps > 0.0)) return;
  VanishingNoiseDiagnostics v = vanishing_noise_structure(spec, {eps}, horizon);
  h["stable_block_norm"] = v.levels[0].stable_norm;
  h["antistable_block"] = v.levels[0].antistable_norm;
}

std::vector<double> sweep_values(const json& doc) {
  std::vector<double> out;
  if (doc.contains("epsilon_sweep"))
    for (const auto& v : doc.at("epsilon_sweep")) out.push_back(v.get<double>());
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::IoError, "cannot open " + tmp.string());
    os << content;
    os.flush();
    if (!os) fail(ErrorCode::IoError, "cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::IoError, "cannot rename into " + path.string());
  }
}

}  // namespace

Scenario parse_scenario(const json& doc) {
  validate_document(doc);
  Scenario s;
  s.doc = doc;
  s.name = doc.at("name").get<std::string>();
  s.kind = doc.at("kind").get<std::string>();
  return s;
}

Scenario parse_scenario_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    schema_error("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(doc);
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_scenario_text(ss.str());
}

void set_scenario_param(Scenario& scenario, const std::string& name, const json& value) {
  json doc = scenario.doc;
  json* slot = nullptr;
  if (!name.empty() && name[0] == '/') {
    json::json_pointer ptr;
    try {
      ptr = json::json_pointer(name);
    } catch (const json::exception&) {
      fail(ErrorCode::UnknownParameter, "malformed parameter path '" + name + "'");
    }
    if (!doc.contains(ptr)) fail(ErrorCode::UnknownParameter, "no parameter '" + name + "'");
    slot = &doc.at(ptr);
  } else {
    // optional schema keys may be set even when the scenario leaves them out
    if (!doc.contains(name) && !kTopLevel.contains(name))
      fail(ErrorCode::UnknownParameter, "no parameter '" + name + "'");
    slot = &doc[name];
  }
  json v = value;
  if (slot->is_number_integer() && v.is_number_float()) {
    double d = v.get<double>();
    if (std::floor(d) == d) v = static_cast<long long>(d);
  }
  *slot = v;
  scenario = parse_scenario(doc);
}

std::string scenario_hash(const Scenario& scenario) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : scenario.doc.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunRecord run_scenario(const Scenario& sc, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const json& doc = sc.doc;
  const json& sys = doc.at("system");
  const double u = options.bits ? 1.0 / std::numbers::ln2 : 1.0;
  const int horizon = doc.at("horizon").get<int>();
  const std::uint64_t seed = static_cast<std::uint64_t>(as_integer(doc.at("seed"), "seed"));
  const double eps = doc.value("epsilon", 0.0);

  RunRecord rec;
  rec.outputs = {"report_json", "ledger_csv", "sandwich_csv"};
  if (doc.contains("outputs")) rec.outputs = doc.at("outputs").get<std::vector<std::string>>();
  json rep;
  rep["schema"] = 1;
  rep["tool_version"] = kToolVersion;
  rep["scenario"] = sc.name;
  rep["kind"] = sc.kind;
  rep["scenario_hash"] = scenario_hash(sc);
  rep["units"] = options.bits ? "bits/step" : "nats/step";
  json head = empty_headline();
  std::vector<std::pair<std::string, SandwichRow>> rows;

  try {
    if (sc.kind == "lti_control" || sc.kind == "lti_filtering") {
      LtiSystemSpec spec = build_lti(sys, kind_mode(sc.kind));
      RateReport r = lti_rate_report(spec, horizon, eps);
      rep["rate_report"] = rate_json(r, u);
      if (spec.mode == LoopMode::control) rep["footnote"] = footnote_json(footnote_identity_checks(spec), u);
      LtvSystemSpec ltv = ltv_from_lti(spec);
      if (spec.mode == LoopMode::filtering && doc.contains("epsilon_sweep"))
        rep["vanishing_noise"] = vanishing_json(vanishing_noise_structure(ltv, sweep_values(doc), horizon));
      rec.ledger_csv = ledger_csv(r.per_step_cmmse, r.per_step_pmmse, r.stderr_cmmse, r.stderr_pmmse);
      rows.emplace_back("rate", rate_sandwich(r));
      headline_from_rates(head, r, u);
      if (spec.mode == LoopMode::filtering) headline_blocks(head, ltv, eps, horizon);
    } else if (sc.kind == "ltv_control" || sc.kind == "ltv_filtering") {
      LtvSystemSpec spec = build_ltv(sys, kind_mode(sc.kind));
      RateReport r = ltv_rate_report(spec, horizon, eps);
      rep["rate_report"] = rate_json(r, u);
      if (spec.mode == LoopMode::filtering && doc.contains("epsilon_sweep"))
        rep["vanishing_noise"] = vanishing_json(vanishing_noise_structure(spec, sweep_values(doc), horizon));
      rec.ledger_csv = ledger_csv(r.per_step_cmmse, r.per_step_pmmse, r.stderr_cmmse, r.stderr_pmmse);
      rows.emplace_back("rate", rate_sandwich(r));
      headline_from_rates(head, r, u);
      if (spec.mode == LoopMode::filtering) headline_blocks(head, spec, eps, horizon);
    } else if (sc.kind == "nonlinear_control" || sc.kind == "nonlinear_filtering") {
      NonlinearPlantSpec spec = build_nonlinear(sys, kind_mode(sc.kind), eps);
      NonlinearOptions nopt;
      nopt.threads = options.threads;
      RateReport r = nonlinear_rate_report(spec, horizon, doc.at("particles").get<int>(),
                                           doc.at("trials").get<int>(), seed, nopt);
      rep["rate_report"] = rate_json(r, u);
      rec.ledger_csv = ledger_csv(r.per_step_cmmse, r.per_step_pmmse, r.stderr_cmmse, r.stderr_pmmse);
      SandwichRow s;
      s.lower = r.rate_lower;
      s.upper = r.rate_upper;
      s.verdict = r.diagnostics.at("ordering_violations") == 0.0 ? Verdict::holds : Verdict::violated;
      rows.emplace_back("ordering", s);
      headline_from_rates(head, r, u);
    } else if (sc.kind == "channel") {
      ChannelSetup c = build_channel(sys, horizon);
      ChannelSpec cs = make_linear_channel(c.lc, c.dim);
      Estimator est = parse_estimator(doc);
      EstimatorOptions eo;
      eo.threads = options.threads;
      eo.particles = doc.value("particles", eo.particles);
      eo.regression_degree = doc.value("regression_degree", eo.regression_degree);
      const int trials = doc.value("trials", 0);
      InfoValue info = channel_information(c.lc, c.dim, horizon);
      MmseLedger exact = estimate_mmse_ledger(cs, horizon, trials, seed, Estimator::closed_form, eo);
      SandwichReport sx = verify_sandwich(exact, info);
      json ch;
      ch["dim"] = c.dim;
      ch["feedback"] = cs.feedback;
      ch["info_nats"] = info.nats * u;
      ch["closed_form"] = sandwich_report_json(sx, u);
      const MmseLedger* used = &exact;
      SandwichReport s = sx;
      MmseLedger mc;
      if (est != Estimator::closed_form) {
        mc = estimate_mmse_ledger(cs, horizon, trials, seed, est, eo);
        s = verify_sandwich(mc, info);
        used = &mc;
        ch["monte_carlo"] = sandwich_report_json(s, u);
        ch["trials"] = trials;
      }
      ch["estimator"] = used->estimator;
      ch["quality"] = used->quality;
      rep["channel"] = ch;
      rec.ledger_csv = ledger_csv(used->cmmse, used->pmmse, used->stderr_cmmse, used->stderr_pmmse);
      rows.emplace_back("closed_form", SandwichRow{sx.lower, sx.info, sx.upper, sx.verdict});
      if (est != Estimator::closed_form)
        rows.emplace_back("monte_carlo", SandwichRow{s.lower, s.info, s.upper, s.verdict});
      head["rate_lower"] = s.rate_lower * u;
      head["rate_upper"] = s.rate_upper * u;
      head["info_rate"] = s.rate_info * u;
    } else {  // oracle_crosscheck
      std::string m = sys.value("mode", std::string("control"));
      json lti = sys;
      lti.erase("mode");
      LtiSystemSpec spec = build_lti(lti, m == "control" ? LoopMode::control : LoopMode::filtering);
      const double tol = doc.value("tolerance", 2e-2);
      RateReport r = lti_rate_report(spec, horizon, eps);
      InfoValue info = oracle_information(spec, horizon, eps);
      const double gap = std::abs(info.rate() - *r.rate_exact);
      json o;
      o["info_nats"] = info.nats * u;
      o["info_rate"] = info.rate() * u;
      o["rate_exact"] = *r.rate_exact * u;
      o["gap"] = gap * u;
      o["tolerance"] = tol * u;
      o["within_tolerance"] = gap <= tol;
      if (spec.mode == LoopMode::control && horizon <= 50) {
        GaussianJointQ j = assemble_closed_loop_joint<quad>(spec, horizon, eps, spec.mode);
        o["entropy_difference_residual"] = entropy_difference_check(j, "E", "W", {"X0"});
      }
      rep["oracle"] = o;
      rep["rate_report"] = rate_json(r, u);
      MmseLedger ledger;
      ledger.horizon = horizon;
      ledger.cmmse = r.per_step_cmmse;
      ledger.pmmse = r.per_step_pmmse;
      ledger.stderr_cmmse = r.stderr_cmmse;
      ledger.stderr_pmmse = r.stderr_pmmse;
      SandwichReport s = verify_sandwich(ledger, info);
      rep["sandwich_total"] = sandwich_report_json(s, u);
      rec.ledger_csv = ledger_csv(r.per_step_cmmse, r.per_step_pmmse, r.stderr_cmmse, r.stderr_pmmse);
      rows.emplace_back("total", SandwichRow{s.lower, s.info, s.upper, s.verdict});
      if (gap > tol) rec.violation = true;
      headline_from_rates(head, r, u);
      head["info_rate"] = info.rate() * u;
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(error_name(e.code())) + ": ";
    if (msg.starts_with(prefix)) msg.erase(0, prefix.size());
    throw Error(e.code(), "scenario '" + sc.name + "': " + msg);
  }

  json sw = json::array();
  for (const auto& [label, s] : rows) {
    json j = sandwich_json(s, u);
    j["label"] = label;
    sw.push_back(j);
    if (s.verdict == Verdict::violated) rec.violation = true;
  }
  rep["sandwich"] = sw;
  if (!rows.empty()) head["verdict"] = verdict_name(rows.back().second.verdict);
  rep["headline"] = head;
  rep["violation"] = rec.violation;
  rec.sandwich_csv = sandwich_csv(rows, u);
  rec.headline = head;
  rec.report = rep;
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::string report_json_text(const RunRecord& record, bool include_wall_time) {
  json j = record.report;
  if (include_wall_time) j["wall_time_s"] = record.wall_time_s;
  return j.dump(2) + "\n";
}

void write_outputs(const RunRecord& record, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir);
  const std::filesystem::path base(dir);
  for (const auto& o : record.outputs) {
    if (o == "report_json") atomic_write(base / "report.json", report_json_text(record, true));
    if (o == "ledger_csv") atomic_write(base / "ledger.csv", record.ledger_csv);
    if (o == "sandwich_csv") atomic_write(base / "sandwich.csv", record.sandwich_csv);
  }
}

std::string headline_csv_header() {
  return "value,rate_exact,rate_lower,rate_upper,capacity,info_rate,stable_block_norm,"
         "antistable_block,verdict\n";
}

std::string headline_csv_row(const json& value, const RunRecord& record) {
  auto cell = [](const json& v) -> std::string {
    if (v.is_null()) return "";
    if (v.is_number()) return num(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  };
  const json& h = record.headline;
  std::ostringstream os;
  os << cell(value);
  for (const char* k : {"rate_exact", "rate_lower", "rate_upper", "capacity", "info_rate",
                        "stable_block_norm", "antistable_block", "verdict"})
    os << ',' << cell(h.at(k));
  os << '\n';
  return os.str();
}

std::string sweep_csv(const Scenario& scenario, const std::string& param,
                      const std::vector<json>& values, const RunOptions& options) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one value");
  std::string out = headline_csv_header();
  for (const auto& v : values) {
    Scenario s = scenario;
    set_scenario_param(s, param, v);
    out += headline_csv_row(v, run_scenario(s, options));
  }
  return out;
}

}  // namespace imse
