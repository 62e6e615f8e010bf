#include "mphase/cli/commands.hpp"

#include "mphase/error.hpp"
#include "mphase/inference.hpp"
#include "mphase/limitlaw.hpp"
#include "mphase/montecarlo.hpp"
#include "mphase/stats.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace mphase::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void csv_error(const fs::path& path, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << path.string() << ":" << line << ": " << what;
  throw InvalidArgument(os.str());
}

double parse_field(std::string_view field, const fs::path& path, std::size_t line, const char* name) {
  field = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    csv_error(path, line, std::string("field ") + name + " is not a number: '" + std::string(field) + "'");
  }
  if (!std::isfinite(v)) csv_error(path, line, std::string("field ") + name + " is not finite");
  return v;
}

}  // namespace

Dataset read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open input file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> xs;
  std::vector<double> ys;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      std::string_view h = line;
      if (h.substr(0, 3) == "\xEF\xBB\xBF") h.remove_prefix(3);
      const auto comma = h.find(',');
      if (comma == std::string_view::npos || trim(h.substr(0, comma)) != "x" || trim(h.substr(comma + 1)) != "y") {
        csv_error(path, lineno, "expected header 'x,y'");
      }
      header = true;
      continue;
    }
    if (line.empty()) csv_error(path, lineno, "empty row");
    const std::string_view row = line;
    const auto comma = row.find(',');
    if (comma == std::string_view::npos) csv_error(path, lineno, "expected 2 fields, found 1");
    if (row.find(',', comma + 1) != std::string_view::npos) csv_error(path, lineno, "expected 2 fields, found more");
    xs.push_back(parse_field(row.substr(0, comma), path, lineno, "x"));
    ys.push_back(parse_field(row.substr(comma + 1), path, lineno, "y"));
  }
  if (!header) csv_error(path, 1, "missing header 'x,y'");
  return Dataset(std::move(xs), std::move(ys));
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericError("number formatting failed");
  return std::string(buf, ptr);
}

std::string to_csv(const Dataset& data) {
  std::string out = "x,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += format_number(data.xs()[i]);
    out += ',';
    out += format_number(data.ys()[i]);
    out += '\n';
  }
  return out;
}

Json load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  Json cfg;
  try {
    cfg = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  if (!cfg.is_object()) throw InvalidArgument("config " + path.string() + " must be an object");
  return cfg;
}

// ---------------------------------------------------------------- config helpers

namespace {

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw InvalidArgument("unknown key '" + key + "' in " + where);
  }
}

const Json* find(const Json& obj, const char* key) {
  const auto it = obj.find(key);
  return (it == obj.end() || it->is_null()) ? nullptr : &*it;
}

double get_double(const Json& obj, const char* key, std::optional<double> def = std::nullopt) {
  const Json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    throw InvalidArgument(std::string("missing required key '") + key + "'");
  }
  if (!v->is_number()) throw InvalidArgument(std::string("key '") + key + "' must be a number");
  return v->get<double>();
}

long long get_int(const Json& obj, const char* key, std::optional<long long> def = std::nullopt) {
  const Json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    throw InvalidArgument(std::string("missing required key '") + key + "'");
  }
  if (!v->is_number_integer()) throw InvalidArgument(std::string("key '") + key + "' must be an integer");
  return v->get<long long>();
}

std::size_t get_count(const Json& obj, const char* key, std::optional<std::size_t> def = std::nullopt) {
  const Json* v = find(obj, key);
  if (!v && def) return *def;
  const long long n = get_int(obj, key);
  if (n < 0) throw InvalidArgument(std::string("key '") + key + "' must be non-negative");
  return static_cast<std::size_t>(n);
}

std::uint64_t get_seed(const Json& obj, const char* key, std::uint64_t def) {
  const Json* v = find(obj, key);
  if (!v) return def;
  if (!v->is_number_unsigned()) throw InvalidArgument(std::string("key '") + key + "' must be an unsigned integer");
  return v->get<std::uint64_t>();
}

std::string get_string(const Json& obj, const char* key, std::optional<std::string> def = std::nullopt) {
  const Json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    throw InvalidArgument(std::string("missing required key '") + key + "'");
  }
  if (!v->is_string()) throw InvalidArgument(std::string("key '") + key + "' must be a string");
  return v->get<std::string>();
}

unsigned get_threads(const Json& cfg) {
  if (find(cfg, "threads")) {
    const long long t = get_int(cfg, "threads");
    if (t < 0) throw InvalidArgument("threads must be non-negative");
    return static_cast<unsigned>(t);
  }
  if (const char* env = std::getenv("MPHASE_THREADS")) {
    unsigned t = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), t);
    if (ec == std::errc() && ptr == s.data() + s.size()) return t;
    throw InvalidArgument("MPHASE_THREADS must be a non-negative integer");
  }
  return 0;
}

fs::path out_dir(const Json& cfg) {
  const fs::path dir = get_string(cfg, "out", ".");
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
  if (!f) throw Error("write failed for " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

LossSpec parse_loss(const Json* v) {
  if (!v) return LossSpec::squared();
  if (v->is_string()) return LossSpec::from_name(v->get<std::string>());
  check_keys(*v, {"kind", "delta", "scale"}, "loss");
  LossSpec loss = LossSpec::from_name(get_string(*v, "kind"), get_double(*v, "delta", kDefaultHuberDelta));
  const double scale = get_double(*v, "scale", 1.0);
  return scale == 1.0 ? loss : loss.scaled(scale);
}

ErrorDist parse_err(const Json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "degenerate") return ErrorDist::degenerate();
    throw InvalidArgument("error distribution must be an object unless it is \"degenerate\"");
  }
  const std::string kind = get_string(v, "kind");
  if (kind == "gaussian") {
    check_keys(v, {"kind", "sigma"}, "err");
    return ErrorDist::gaussian(get_double(v, "sigma"));
  }
  if (kind == "laplace") {
    check_keys(v, {"kind", "b"}, "err");
    return ErrorDist::laplace(get_double(v, "b"));
  }
  if (kind == "student_t") {
    check_keys(v, {"kind", "nu", "scale"}, "err");
    return ErrorDist::student_t(get_double(v, "nu"), get_double(v, "scale", 1.0));
  }
  if (kind == "degenerate") {
    check_keys(v, {"kind"}, "err");
    return ErrorDist::degenerate();
  }
  throw InvalidArgument("unknown error distribution '" + kind + "'");
}

/// "gaussian:0.3", "laplace:1", "student_t:5[:scale]", "degenerate".
Json err_flag_to_json(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto num = [&](std::size_t i) {
    double v = 0.0;
    const std::string& s = parts.at(i);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidArgument("bad number in --err: '" + s + "'");
    return v;
  };
  if (parts.empty()) throw InvalidArgument("empty --err");
  const std::string& kind = parts[0];
  if (kind == "degenerate" && parts.size() == 1) return {{"kind", kind}};
  if (kind == "gaussian" && parts.size() == 2) return {{"kind", kind}, {"sigma", num(1)}};
  if (kind == "laplace" && parts.size() == 2) return {{"kind", kind}, {"b", num(1)}};
  if (kind == "student_t" && (parts.size() == 2 || parts.size() == 3)) {
    Json j = {{"kind", kind}, {"nu", num(1)}};
    if (parts.size() == 3) j["scale"] = num(2);
    return j;
  }
  throw InvalidArgument("--err expects gaussian:SIGMA, laplace:B, student_t:NU[:SCALE] or degenerate");
}

Json err_to_json(const ErrorDist& e) {
  switch (e.kind()) {
    case ErrorKind::gaussian: return {{"kind", "gaussian"}, {"sigma", e.scale()}};
    case ErrorKind::laplace: return {{"kind", "laplace"}, {"b", e.scale()}};
    case ErrorKind::student_t: return {{"kind", "student_t"}, {"nu", e.nu()}, {"scale", e.scale()}};
    case ErrorKind::degenerate: return {{"kind", "degenerate"}};
  }
  return {};
}

Json loss_to_json(const LossSpec& l) {
  Json j = {{"kind", l.name()}, {"scale", l.scale}};
  if (l.kind == LossKind::huber) j["delta"] = l.delta;
  return j;
}

XDist parse_xdist(const Json* v) {
  if (!v) return XDist::uniform(-1.0, 1.0);
  const std::string kind = get_string(*v, "kind");
  if (kind == "uniform") {
    check_keys(*v, {"kind", "a", "b"}, "x_dist");
    return XDist::uniform(get_double(*v, "a"), get_double(*v, "b"));
  }
  if (kind == "gaussian") {
    check_keys(*v, {"kind", "mu", "sigma"}, "x_dist");
    return XDist::gaussian(get_double(*v, "mu"), get_double(*v, "sigma"));
  }
  throw InvalidArgument("unknown x distribution '" + kind + "'");
}

Json xdist_to_json(const XDist& x) {
  if (x.kind() == XKind::uniform) return {{"kind", "uniform"}, {"a", x.param1()}, {"b", x.param2()}};
  return {{"kind", "gaussian"}, {"mu", x.param1()}, {"sigma", x.param2()}};
}

Json vector_to_json(const Vector& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Json matrix_to_json(const Matrix& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vector_to_json(m.row(r).transpose()));
  return j;
}

PiecewiseModel parse_truth(const Json* v) {
  if (!v) return PiecewiseModel(SegmentFamily::constant(), {Vector::Constant(1, 0.0), Vector::Constant(1, 2.0)}, {0.0});
  check_keys(*v, {"family", "alphas", "taus"}, "truth");
  const SegmentFamily family = SegmentFamily::from_name(get_string(*v, "family"));
  const Json* a = find(*v, "alphas");
  if (!a || !a->is_array()) throw InvalidArgument("truth.alphas must be an array of arrays");
  std::vector<Vector> alphas;
  for (const Json& row : *a) {
    if (!row.is_array()) throw InvalidArgument("truth.alphas must be an array of arrays");
    Vector alpha(static_cast<Eigen::Index>(row.size()));
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (!row[i].is_number()) throw InvalidArgument("truth.alphas entries must be numbers");
      alpha[static_cast<Eigen::Index>(i)] = row[i].get<double>();
    }
    alphas.push_back(std::move(alpha));
  }
  std::vector<double> taus;
  if (const Json* t = find(*v, "taus")) {
    if (!t->is_array()) throw InvalidArgument("truth.taus must be an array");
    for (const Json& x : *t) {
      if (!x.is_number()) throw InvalidArgument("truth.taus entries must be numbers");
      taus.push_back(x.get<double>());
    }
  }
  return PiecewiseModel(family, std::move(alphas), std::move(taus));
}

Json model_to_json(const PiecewiseModel& m) {
  Json alphas = Json::array();
  for (const Vector& a : m.alphas()) alphas.push_back(vector_to_json(a));
  return {{"family", m.family().name()}, {"alphas", alphas}, {"taus", m.taus()}};
}

FitOptions parse_fit_options(const Json& cfg) {
  FitOptions opts;
  opts.seed = get_seed(cfg, "seed", opts.seed);
  if (const Json* f = find(cfg, "fit")) {
    check_keys(*f, {"min_seg", "multistart", "max_iter", "grad_tol", "seed"}, "fit");
    opts.min_seg = static_cast<int>(get_int(*f, "min_seg", opts.min_seg));
    opts.multistart = static_cast<int>(get_int(*f, "multistart", opts.multistart));
    opts.max_iter = static_cast<int>(get_int(*f, "max_iter", opts.max_iter));
    opts.grad_tol = get_double(*f, "grad_tol", opts.grad_tol);
    opts.seed = get_seed(*f, "seed", opts.seed);
  }
  opts.threads = get_threads(cfg);
  return opts;
}

Json quantile_table(std::span<const double> values) {
  Json j = Json::array();
  const std::vector<double> q = stats::quantiles(values, kQuantileLevels);
  for (std::size_t i = 0; i < q.size(); ++i) j.push_back({{"prob", kQuantileLevels[i]}, {"value", q[i]}});
  return j;
}

}  // namespace

// ---------------------------------------------------------------- fit

Json cmd_fit(const Json& cfg) {
  check_keys(cfg, {"input", "family", "K", "loss", "err", "level", "fit", "seed", "threads", "out"}, "fit config");
  const fs::path input = get_string(cfg, "input");
  const SegmentFamily family = SegmentFamily::from_name(get_string(cfg, "family", "constant"));
  const long long K = get_int(cfg, "K", 1);
  if (K < 0) throw InvalidArgument("K must be non-negative");
  const LossSpec loss = parse_loss(find(cfg, "loss"));
  std::optional<ErrorDist> err;
  if (const Json* e = find(cfg, "err")) err = parse_err(*e);
  const double level = get_double(cfg, "level", 0.95);
  if (!(level >= 0.0 && level < 1.0)) throw InvalidArgument("level must lie in [0, 1)");
  const FitOptions opts = parse_fit_options(cfg);

  const Dataset data = read_csv(input);
  const FitResult f = fit(data, family, static_cast<int>(K), loss, opts);

  Json segments = Json::array();
  const auto& sx = data.sorted_xs();
  for (const SegmentSummary& s : f.per_segment) {
    segments.push_back({{"first", s.first},
                        {"last", s.last},
                        {"count", s.last - s.first + 1},
                        {"x_min", sx[s.first]},
                        {"x_max", sx[s.last]},
                        {"alpha", vector_to_json(s.alpha)},
                        {"objective", s.objective},
                        {"converged", s.converged}});
  }
  Json jumps_json = Json::array();
  for (const Jump& j : jumps(f.model_hat)) jumps_json.push_back({{"index", j.index}, {"value", j.value}});

  Json report = {{"command", "fit"},
                 {"input", input.filename().string()},
                 {"n", data.size()},
                 {"K", K},
                 {"family", family.name()},
                 {"loss", loss_to_json(loss)},
                 {"model", model_to_json(f.model_hat)},
                 {"objective", f.objective},
                 {"boundary_indices", f.boundary_indices},
                 {"segments", segments},
                 {"jumps", jumps_json},
                 {"converged", f.converged()},
                 {"failed_cells", f.failed_cells}};

  Json inf;
  try {
    const AsymptoticInfo info = asymptotic_covariance(f, data, loss, err);
    Json cis = Json::array();
    for (const ConfidenceInterval& ci : confidence_intervals(info, f, level)) {
      cis.push_back({{"segment", ci.segment},
                     {"component", ci.component},
                     {"estimate", ci.estimate},
                     {"half_width", ci.half_width},
                     {"lower", ci.lower},
                     {"upper", ci.upper}});
    }
    inf = {{"available", true},
           {"source", info.source == InfoSource::known_error_dist ? "known_error_dist" : "residual_based"},
           {"lambda_prime0", info.lambda_prime0_hat},
           {"psi_sq", info.psi_sq_hat},
           {"V0", matrix_to_json(info.V0_hat)},
           {"cov_theta1", matrix_to_json(info.cov_theta1)},
           {"level", level},
           {"intervals", cis}};
    if (err) inf["err"] = err_to_json(*err);
  } catch (const NumericError& e) {
    inf = {{"available", false}, {"reason", e.what()}};
  } catch (const InvalidArgument& e) {
    inf = {{"available", false}, {"reason", e.what()}};
  }
  report["inference"] = inf;
  write_json(out_dir(cfg) / "fit_report.json", report);
  return report;
}

// ---------------------------------------------------------------- simulate

namespace {

SimDesign parse_design(const Json* v, const ErrorDist& default_err) {
  SimDesign d{XDist::uniform(-1.0, 1.0), default_err, parse_truth(nullptr), 0, 0};
  if (!v) return d;
  check_keys(*v, {"x_dist", "err", "truth"}, "design");
  d.x_dist = parse_xdist(find(*v, "x_dist"));
  if (const Json* e = find(*v, "err")) d.err = parse_err(*e);
  d.truth = parse_truth(find(*v, "truth"));
  return d;
}

Json design_to_json(const SimDesign& d) {
  return {{"x_dist", xdist_to_json(d.x_dist)}, {"err", err_to_json(d.err)}, {"truth", model_to_json(d.truth)}};
}

}  // namespace

Json cmd_simulate(const Json& cfg) {
  check_keys(cfg, {"design", "n", "seed", "threads", "out"}, "simulate config");
  SimDesign design = parse_design(find(cfg, "design"), ErrorDist::gaussian(0.3));
  design.n = get_count(cfg, "n", 200);
  design.seed = get_seed(cfg, "seed", 1);
  design.validate();
  const Dataset data = generate_dataset(design);
  const fs::path dir = out_dir(cfg);
  write_file(dir / "data.csv", to_csv(data));
  Json truth = {{"command", "simulate"}, {"n", design.n}, {"seed", design.seed}, {"design", design_to_json(design)}};
  Json jumps_json = Json::array();
  for (const Jump& j : jumps(design.truth)) jumps_json.push_back({{"index", j.index}, {"value", j.value}});
  truth["jumps"] = jumps_json;
  write_json(dir / "truth.json", truth);
  return truth;
}

// ---------------------------------------------------------------- mc

Json cmd_mc(const Json& cfg) {
  check_keys(cfg,
             {"experiment", "design", "n", "n_grid", "reps", "family", "loss", "fit", "failure_budget", "n_samples",
              "k", "spec", "seed", "threads", "out"},
             "mc config");
  const std::string experiment = get_string(cfg, "experiment", "rate");
  ErrorDist default_err = ErrorDist::gaussian(0.3);
  if (experiment == "normality") default_err = ErrorDist::gaussian(1.0);
  if (experiment == "limitlaw") default_err = ErrorDist::gaussian(0.5);
  if (experiment != "rate" && experiment != "normality" && experiment != "limitlaw") {
    throw InvalidArgument("experiment must be rate, normality or limitlaw");
  }
  SimDesign design = parse_design(find(cfg, "design"), default_err);
  design.seed = get_seed(cfg, "seed", 1);
  const SegmentFamily family = find(cfg, "family") ? SegmentFamily::from_name(get_string(cfg, "family"))
                                                   : design.truth.family();
  const LossSpec loss = parse_loss(find(cfg, "loss"));
  ExperimentOptions opts;
  opts.fit = parse_fit_options(cfg);
  opts.threads = get_threads(cfg);
  opts.failure_budget = get_double(cfg, "failure_budget", 0.05);
  if (!(opts.failure_budget >= 0.0 && opts.failure_budget < 1.0)) {
    throw InvalidArgument("failure_budget must lie in [0, 1)");
  }

  Json report = {{"command", "mc"},
                 {"experiment", experiment},
                 {"seed", design.seed},
                 {"design", design_to_json(design)},
                 {"family", family.name()},
                 {"loss", loss_to_json(loss)}};
  const fs::path dir = out_dir(cfg);

  if (experiment == "rate") {
    std::vector<std::size_t> grid = {200, 400, 800, 1600};
    if (const Json* g = find(cfg, "n_grid")) {
      if (!g->is_array()) throw InvalidArgument("n_grid must be an array");
      grid.clear();
      for (const Json& x : *g) {
        if (!x.is_number_unsigned()) throw InvalidArgument("n_grid entries must be positive integers");
        grid.push_back(x.get<std::size_t>());
      }
    }
    const int reps = static_cast<int>(get_int(cfg, "reps", 200));
    const RateReport r = run_rate_experiment(design, grid, reps, family, loss, opts);
    report["n_grid"] = r.n_grid;
    report["reps"] = r.reps;
    report["medians_tau"] = r.medians_tau;
    report["medians_alpha"] = r.medians_alpha;
    report["slopes_tau"] = r.slopes_tau;
    report["slope_tau"] = r.slope_tau;
    report["slope_alpha"] = r.slope_alpha;
    report["failures"] = r.failures;
    report["attempts"] = r.attempts;
    std::string csv = "n";
    for (std::size_t k = 0; k < r.slopes_tau.size(); ++k) csv += ",median_tau_" + std::to_string(k + 1);
    csv += ",median_alpha\n";
    for (std::size_t i = 0; i < r.n_grid.size(); ++i) {
      csv += std::to_string(r.n_grid[i]);
      for (double m : r.medians_tau[i]) csv += "," + format_number(m);
      csv += "," + format_number(r.medians_alpha[i]) + "\n";
    }
    write_file(dir / "rate_medians.csv", csv);
  } else if (experiment == "normality") {
    design.n = get_count(cfg, "n", 2000);
    const int reps = static_cast<int>(get_int(cfg, "reps", 500));
    const NormalityReport r = run_normality_experiment(design, reps, family, loss, opts);
    report["n"] = r.n;
    report["reps"] = r.reps;
    report["empirical_cov"] = matrix_to_json(r.empirical_cov);
    report["theoretical_cov"] = matrix_to_json(r.theoretical_cov);
    report["rel_frobenius"] = r.rel_frobenius;
    report["skewness"] = r.skewness;
    report["kurtosis"] = r.kurtosis;
    report["failures"] = r.failures;
    report["attempts"] = r.attempts;
    std::string csv = "row,col,empirical,theoretical\n";
    for (Eigen::Index i = 0; i < r.empirical_cov.rows(); ++i) {
      for (Eigen::Index j = 0; j < r.empirical_cov.cols(); ++j) {
        csv += std::to_string(i) + "," + std::to_string(j) + "," + format_number(r.empirical_cov(i, j)) + "," +
               format_number(r.theoretical_cov(i, j)) + "\n";
      }
    }
    write_file(dir / "normality_cov.csv", csv);
    std::string marg = "coord,skewness,kurtosis\n";
    for (std::size_t j = 0; j < r.skewness.size(); ++j) {
      marg += std::to_string(j) + "," + format_number(r.skewness[j]) + "," + format_number(r.kurtosis[j]) + "\n";
    }
    write_file(dir / "normality_marginals.csv", marg);
  } else {
    design.n = get_count(cfg, "n", 4000);
    const int reps = static_cast<int>(get_int(cfg, "reps", 1000));
    const std::size_t n_samples = get_count(cfg, "n_samples", 1000);
    const int k = static_cast<int>(get_int(cfg, "k", 1));
    design.validate();
    LimitLawSpec spec = true_limit_spec(design, k, loss);
    if (const Json* s = find(cfg, "spec")) {
      check_keys(*s, {"rate", "jump_d", "horizon_cap", "extend_margin"}, "spec");
      spec.rate = get_double(*s, "rate", spec.rate);
      spec.jump_d = get_double(*s, "jump_d", spec.jump_d);
      spec.horizon_cap = get_double(*s, "horizon_cap", spec.horizon_cap);
      spec.extend_margin = get_double(*s, "extend_margin", spec.extend_margin);
    }
    const LimitLawReport r = run_limitlaw_experiment(design, reps, spec, n_samples, family, loss, opts, k);
    report["n"] = r.n;
    report["reps"] = r.reps;
    report["k"] = r.k;
    report["spec"] = {{"rate", spec.rate}, {"jump_d", spec.jump_d}};
    report["n_samples"] = n_samples;
    report["ks_distance"] = r.ks_distance;
    report["censored"] = r.censored;
    report["failures"] = r.failures;
    report["attempts"] = r.attempts;
    Json q = Json::array();
    std::string csv = "prob,estimator,limit\n";
    for (std::size_t i = 0; i < r.probs.size(); ++i) {
      q.push_back({{"prob", r.probs[i]}, {"estimator", r.quantiles_estimator[i]}, {"limit", r.quantiles_limit[i]}});
      csv += format_number(r.probs[i]) + "," + format_number(r.quantiles_estimator[i]) + "," +
             format_number(r.quantiles_limit[i]) + "\n";
    }
    report["quantiles"] = q;
    write_file(dir / "limit_quantiles.csv", csv);
    std::string draws = "source,value\n";
    for (double v : r.scaled_errors) draws += "estimator," + format_number(v) + "\n";
    for (double v : r.limit_samples) draws += "limit," + format_number(v) + "\n";
    write_file(dir / "limit_draws.csv", draws);
  }
  write_json(dir / "mc_report.json", report);
  return report;
}

// ---------------------------------------------------------------- limit

Json cmd_limit(const Json& cfg) {
  check_keys(cfg,
             {"rate", "jump_d", "loss", "err", "n_samples", "horizon_cap", "extend_margin", "seed", "threads", "out"},
             "limit config");
  LimitLawSpec spec;
  spec.rate = get_double(cfg, "rate", 1.0);
  spec.jump_d = get_double(cfg, "jump_d", 1.0);
  spec.loss = parse_loss(find(cfg, "loss"));
  if (const Json* e = find(cfg, "err")) spec.err = parse_err(*e);
  spec.horizon_cap = get_double(cfg, "horizon_cap", 0.0);
  spec.extend_margin = get_double(cfg, "extend_margin", spec.extend_margin);
  spec.validate();
  const std::size_t n_samples = get_count(cfg, "n_samples", 10000);
  if (n_samples == 0) throw InvalidArgument("n_samples must be positive");
  const std::uint64_t seed = get_seed(cfg, "seed", 1);

  const LimitSample s = sample_limit_distribution(spec, n_samples, seed, get_threads(cfg));
  std::size_t zeros = 0;
  for (double v : s.values) zeros += v == 0.0 ? 1 : 0;

  Json report = {{"command", "limit"},
                 {"seed", seed},
                 {"spec",
                  {{"rate", spec.rate},
                   {"jump_d", spec.jump_d},
                   {"loss", loss_to_json(spec.loss)},
                   {"err", err_to_json(spec.err)},
                   {"horizon_cap", spec.resolved_cap()},
                   {"initial_horizon", spec.initial_horizon()},
                   {"extend_margin", spec.extend_margin}}},
                 {"n_samples", n_samples},
                 {"censored", s.censored},
                 {"mean_jumps", s.mean_jumps},
                 {"mean_horizon", s.mean_horizon},
                 {"mean", stats::mean(s.values)},
                 {"fraction_zero", static_cast<double>(zeros) / static_cast<double>(n_samples)},
                 {"quantiles", quantile_table(s.values)}};
  const fs::path dir = out_dir(cfg);
  std::string csv = "draw,value\n";
  for (std::size_t i = 0; i < s.values.size(); ++i) csv += std::to_string(i) + "," + format_number(s.values[i]) + "\n";
  write_file(dir / "limit_samples.csv", csv);
  write_json(dir / "limit_report.json", report);
  return report;
}

// ---------------------------------------------------------------- run

namespace {

struct Invocation {
  std::string config;
  Json overrides = Json::object();
  /// Keys whose file value is replaced wholesale rather than merged.
  std::vector<Json::json_pointer> replace;
};

void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--config", inv.config, "JSON configuration file");
  sub->add_option_function<std::uint64_t>("--seed", [&inv](const std::uint64_t& v) { inv.overrides["seed"] = v; },
                                          "Root seed");
  sub->add_option_function<std::string>("--out", [&inv](const std::string& v) { inv.overrides["out"] = v; },
                                        "Output directory");
  sub->add_option_function<unsigned>("--threads", [&inv](const unsigned& v) { inv.overrides["threads"] = v; },
                                     "Worker threads (0 = all cores)");
}

void add_loss_flags(CLI::App* sub, Invocation& inv, const Json::json_pointer& at) {
  sub->add_option_function<std::string>(
         "--loss", [&inv, at](const std::string& v) { inv.overrides[at / "kind"] = v; },
         "squared | absolute | huber")
      ->check(CLI::IsMember({"squared", "absolute", "huber"}));
  sub->add_option_function<double>(
      "--huber-delta", [&inv, at](const double& v) { inv.overrides[at / "delta"] = v; }, "Huber threshold");
}

void add_err_flag(CLI::App* sub, Invocation& inv, const Json::json_pointer& at) {
  sub->add_option_function<std::string>(
      "--err",
      [&inv, at](const std::string& v) {
        inv.overrides[at] = err_flag_to_json(v);
        inv.replace.push_back(at);
      },
      "gaussian:SIGMA | laplace:B | student_t:NU[:SCALE] | degenerate");
}

Json merged_config(const Invocation& inv) {
  Json cfg = inv.config.empty() ? Json::object() : load_config(inv.config);
  for (const auto& p : inv.replace) {
    if (cfg.contains(p)) cfg[p] = nullptr;
  }
  for (const char* key : {"loss"}) {
    if (cfg.contains(key) && cfg[key].is_string()) cfg[key] = Json{{"kind", cfg[key]}};
  }
  for (const auto& [key, value] : inv.overrides.items()) {
    if (value.is_object() && cfg.contains(key) && cfg[key].is_object()) {
      for (const auto& [k2, v2] : value.items()) cfg[key][k2] = v2;
    } else {
      cfg[key] = value;
    }
  }
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-phase M-estimation: change-point fits, simulation and Monte Carlo studies"};
  app.name("mphase");
  app.require_subcommand(1);
  Invocation inv;

  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a K change-point model to an x,y CSV");
  add_common(fit_cmd, inv);
  fit_cmd->add_option_function<std::string>("--input", [&](const std::string& v) { inv.overrides["input"] = v; },
                                            "Input CSV");
  fit_cmd->add_option_function<std::string>("--family", [&](const std::string& v) { inv.overrides["family"] = v; },
                                            "constant | linear | exponential | logistic");
  fit_cmd->add_option_function<int>("--K", [&](const int& v) { inv.overrides["K"] = v; }, "Number of change-points");
  fit_cmd->add_option_function<double>("--level", [&](const double& v) { inv.overrides["level"] = v; },
                                       "Confidence level");
  add_loss_flags(fit_cmd, inv, Json::json_pointer("/loss"));
  add_err_flag(fit_cmd, inv, Json::json_pointer("/err"));

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Draw a dataset from a known multi-phase design");
  add_common(sim_cmd, inv);
  sim_cmd->add_option_function<std::size_t>("--n", [&](const std::size_t& v) { inv.overrides["n"] = v; },
                                            "Sample size");
  add_err_flag(sim_cmd, inv, Json::json_pointer("/design/err"));

  CLI::App* mc_cmd = app.add_subcommand("mc", "Run a Monte Carlo experiment (rate, normality, limitlaw)");
  add_common(mc_cmd, inv);
  mc_cmd->add_option_function<std::string>("--experiment",
                                           [&](const std::string& v) { inv.overrides["experiment"] = v; },
                                           "rate | normality | limitlaw")
      ->check(CLI::IsMember({"rate", "normality", "limitlaw"}));
  mc_cmd->add_option_function<int>("--reps", [&](const int& v) { inv.overrides["reps"] = v; }, "Replications");
  mc_cmd->add_option_function<std::size_t>("--n", [&](const std::size_t& v) { inv.overrides["n"] = v; },
                                           "Sample size (normality, limitlaw)");
  mc_cmd
      ->add_option_function<std::vector<std::size_t>>(
          "--n-grid", [&](const std::vector<std::size_t>& v) { inv.overrides["n_grid"] = v; },
          "Sample sizes for the rate experiment")
      ->delimiter(',');
  mc_cmd->add_option_function<std::size_t>("--n-samples",
                                           [&](const std::size_t& v) { inv.overrides["n_samples"] = v; },
                                           "Limit-law draws (limitlaw)");
  mc_cmd->add_option_function<std::string>("--family", [&](const std::string& v) { inv.overrides["family"] = v; },
                                           "Fitted family (default: the truth's)");
  add_loss_flags(mc_cmd, inv, Json::json_pointer("/loss"));
  add_err_flag(mc_cmd, inv, Json::json_pointer("/design/err"));

  CLI::App* limit_cmd = app.add_subcommand("limit", "Sample the compound Poisson limit law of a change-point");
  add_common(limit_cmd, inv);
  limit_cmd->add_option_function<double>("--rate", [&](const double& v) { inv.overrides["rate"] = v; },
                                         "Design density at the change-point");
  limit_cmd->add_option_function<double>("--jump", [&](const double& v) { inv.overrides["jump_d"] = v; },
                                         "Jump size d");
  limit_cmd->add_option_function<std::size_t>("--n-samples",
                                              [&](const std::size_t& v) { inv.overrides["n_samples"] = v; },
                                              "Number of draws");
  add_loss_flags(limit_cmd, inv, Json::json_pointer("/loss"));
  add_err_flag(limit_cmd, inv, Json::json_pointer("/err"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidationError;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  }

  try {
    const Json cfg = merged_config(inv);
    Json report;
    if (fit_cmd->parsed()) report = cmd_fit(cfg);
    if (sim_cmd->parsed()) report = cmd_simulate(cfg);
    if (mc_cmd->parsed()) report = cmd_mc(cfg);
    if (limit_cmd->parsed()) report = cmd_limit(cfg);
    out << "wrote outputs to " << get_string(cfg, "out", ".") << "\n";
    return kOk;
  } catch (const FailureBudgetError& e) {
    err << "error: " << e.what() << " (failures " << e.failures() << "/" << e.attempts() << ")\n";
    return kFailureBudget;
  } catch (const IdentifiabilityError& e) {
    err << "error: " << e.what() << "\n";
    return kIdentifiability;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const Json::exception& e) {
    err << "error: config: " << e.what() << "\n";
    return kValidationError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace mphase::cli
