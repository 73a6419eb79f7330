#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hbm/checks.hpp"
#include "hbm/config.hpp"
#include "hbm/drift.hpp"
#include "hbm/errors.hpp"
#include "hbm/estimator.hpp"
#include "hbm/kernels.hpp"
#include "hbm/parametrix.hpp"
#include "hbm/payoff.hpp"
#include "hbm/report.hpp"

namespace hbm {

enum ExitCode : int {
  kExitPass = 0,
  kExitFail = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
};

/// Table plus summary produced by one command.
struct CommandOutput {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  int exit_code = kExitPass;
};

inline nlohmann::ordered_json cell_json(const Cell& c) {
  struct V {
    nlohmann::ordered_json operator()(const std::string& s) const { return s; }
    nlohmann::ordered_json operator()(double d) const {
      if (std::isfinite(d)) return d;
      return format_number(d);
    }
    nlohmann::ordered_json operator()(std::int64_t i) const { return i; }
    nlohmann::ordered_json operator()(std::uint64_t u) const { return u; }
    nlohmann::ordered_json operator()(bool b) const { return b; }
  };
  return std::visit(V{}, c);
}

inline nlohmann::ordered_json provenance_json(const CommandOutput& o, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["command"] = o.command;
  j["version"] = kVersion;
  j["seed"] = o.seed;
  j["config_hash"] = cfg.hash_hex();
  return j;
}

/// csv: provenance lines, header and rows on `out`; the summary goes to
/// `summary_out` when given. json: one document with everything on `out`.
inline void emit(const CommandOutput& o, const RunConfig& cfg, const std::string& format,
                 std::ostream& out, std::ostream* summary_out) {
  if (format == "json") {
    nlohmann::ordered_json doc;
    doc["provenance"] = provenance_json(o, cfg);
    doc["columns"] = o.columns;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : o.rows) {
      nlohmann::ordered_json obj;
      for (std::size_t i = 0; i < r.size(); ++i) obj[o.columns[i]] = cell_json(r[i]);
      rows.push_back(obj);
    }
    doc["rows"] = rows;
    doc["summary"] = o.summary;
    doc["exit_code"] = o.exit_code;
    out << doc.dump(2) << '\n';
    return;
  }
  CsvWriter w(out, o.columns);
  w.provenance(o.command, o.seed, cfg);
  w.header();
  for (const auto& r : o.rows) w.row(r);
  if (summary_out) {
    nlohmann::ordered_json doc;
    doc["provenance"] = provenance_json(o, cfg);
    doc["summary"] = o.summary;
    doc["exit_code"] = o.exit_code;
    *summary_out << doc.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config to module types.

inline KernelConfig kernel_config(const RunConfig& cfg) {
  KernelConfig k;
  k.rel_tol = cfg.get_real("kernel", "rel_tol");
  k.b_max_factor = cfg.get_real("kernel", "b_max_factor");
  k.t_min = cfg.get_real("kernel", "t_min");
  k.max_subdivisions = static_cast<int>(cfg.get_int("kernel", "max_subdivisions"));
  try {
    k.validate();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    throw ConfigError("kernel." + e.field(), msg.substr(e.field().size() + 2));
  }
  return k;
}

inline unsigned config_workers(const RunConfig& cfg) {
  const long w = cfg.get_int("run", "workers");
  if (w < 1 || w > 1024) throw ConfigError("run.workers", "must lie in [1, 1024]");
  return static_cast<unsigned>(w);
}

inline DriftSpec make_drift(const std::string& kind, double c, double k0, const std::string& table,
                            const std::string& field) {
  try {
    if (kind == "zero") return DriftSpec::zero(k0);
    if (kind == "linear_y") return DriftSpec::linear_y(c, k0);
    if (kind == "sine_x") return DriftSpec::sine_x(c, k0);
    if (kind == "tanh_x") return DriftSpec::tanh_x(c, k0);
    if (kind == "table") {
      if (table.empty()) throw ConfigError(field, "kind = table needs a table file");
      return DriftSpec::table(load_table_csv(table), k0);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
  throw ConfigError(field, "unknown drift kind '" + kind + "'");
}

inline DriftSpec drift_from_config(const RunConfig& cfg) {
  return make_drift(cfg.get_string("drift", "kind"), cfg.get_real("drift", "c"),
                    cfg.get_real("drift", "k0"), cfg.get_string("drift", "table"), "drift");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

/// "kind:c:k0", e.g. "sine_x:1:1" or "zero:0:1".
inline DriftSpec parse_drift(const std::string& text, const std::string& field) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw ConfigError(field, "drift '" + text + "' must read kind:c:k0");
  double c = 0, k0 = 0;
  try {
    c = std::stod(parts[1]);
    k0 = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw ConfigError(field, "drift '" + text + "': bad number");
  }
  return make_drift(parts[0], c, k0, "", field);
}

inline std::vector<Payoff> parse_payoffs(const std::string& text, const std::string& field) {
  std::vector<Payoff> out;
  for (const auto& item : split(text, '|')) {
    try {
      out.push_back(Payoff::parse(item));
    } catch (const std::exception& e) {
      throw ConfigError(field, e.what());
    }
  }
  if (out.empty()) throw ConfigError(field, "no payoffs");
  return out;
}

inline HyperbolicPoint config_point(const RunConfig& cfg, const std::string& section) {
  const double x = cfg.get_real(section, "x0");
  const double y = cfg.get_real(section, "y0");
  if (!(y > 0.0)) throw ConfigError(section + ".y0", "must be > 0");
  return {x, y};
}

inline double positive(const RunConfig& cfg, const std::string& section, const std::string& key) {
  const double v = cfg.get_real(section, key);
  if (!(v > 0.0)) throw ConfigError(section + "." + key, "must be > 0");
  return v;
}

inline std::uint64_t path_count(const RunConfig& cfg, const std::string& section,
                                const std::string& key) {
  const std::uint64_t n = cfg.get_u64(section, key);
  if (n < 2) throw ConfigError(section + "." + key, "must be >= 2");
  return n;
}

inline ThetaPlacement placement_from(const std::string& s) {
  if (s == "trailing") return ThetaPlacement::kTrailing;
  if (s == "leading") return ThetaPlacement::kLeading;
  throw ConfigError("estimate.placement", "must be trailing or leading");
}

inline void add_diagnostics(nlohmann::ordered_json& j, const EstimateDiagnostics& d) {
  j["max_abs_weight"] = d.max_abs_weight;
  j["mean_events"] = d.mean_events;
  j["clamp_count"] = d.clamp_count;
  j["theta_exceed_count"] = d.theta_exceed_count;
  j["ceiling_violations"] = d.ceiling_violations;
  j["unbounded_f_count"] = d.unbounded_f_count;
  j["retries"] = d.retries;
  j["weight_second_moment"] = d.weight_second_moment;
  j["weight_second_moment_se"] = d.weight_second_moment_se;
}

// ---------------------------------------------------------------------------
// Commands.

inline CommandOutput cmd_kernels(const RunConfig& cfg) {
  const KernelConfig kc = kernel_config(cfg);
  const auto ns = cfg.get_real_list("kernels", "n");
  const auto ts = cfg.get_real_list("kernels", "t");
  const auto rs = cfg.get_real_list("kernels", "r");
  const double tol2 = positive(cfg, "kernels", "tol_p2");
  const double tol4 = positive(cfg, "kernels", "tol_p4");
  for (double n : ns) {
    if (n < 2 || n != std::floor(n)) throw ConfigError("kernels.n", "dimensions must be integers >= 2");
  }
  for (double t : ts) {
    if (t < kc.t_min) {
      throw ConfigError("kernels.t", "t = " + format_number(t) + " is below kernel.t_min");
    }
  }
  for (double r : rs) {
    if (!(r >= 0.0)) throw ConfigError("kernels.r", "radii must be >= 0");
  }
  CommandOutput o;
  o.command = "kernels";
  o.columns = {"n", "t", "r", "p_mckean", "p_gruet", "p_milson", "rel_diff"};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::size_t violations = 0;
  double worst = 0.0;
  for (double nd : ns) {
    const int n = static_cast<int>(nd);
    for (double t : ts) {
      for (double r : rs) {
        const double g = gruet_pn(n, t, r, kc).value;
        double m = nan, mil = nan, rel = nan;
        if (n == 2) {
          m = mckean_p2(t, r, kc).value;
          rel = std::fabs(g - m) / m;
          if (rel > tol2) ++violations;
        } else if (n == 4 && r >= 1e-6) {
          mil = milson_p4(t, r, kc).value;
          rel = std::fabs(g - mil) / mil;
          if (rel > tol4) ++violations;
        }
        if (std::isfinite(rel)) worst = std::max(worst, rel);
        o.rows.push_back({std::int64_t{n}, t, r, m, g, mil, rel});
      }
    }
  }
  o.summary["points"] = o.rows.size();
  o.summary["violations"] = violations;
  o.summary["max_rel_diff"] = worst;
  o.exit_code = violations == 0 ? kExitPass : kExitFail;
  return o;
}

inline CommandOutput cmd_validate_drift(const RunConfig& cfg) {
  const DriftSpec spec = drift_from_config(cfg);
  const Box box{cfg.get_real("validate_drift", "x_lo"), cfg.get_real("validate_drift", "x_hi"),
                cfg.get_real("validate_drift", "y_lo"), cfg.get_real("validate_drift", "y_hi")};
  try {
    box.validate();
  } catch (const std::exception& e) {
    throw ConfigError("validate_drift", e.what());
  }
  const long samples = cfg.get_int("validate_drift", "samples");
  if (samples < 1) throw ConfigError("validate_drift.samples", "must be >= 1");
  CommandOutput o;
  o.command = "validate-drift";
  o.seed = cfg.get_u64("run", "seed");
  const ValidationReport rep =
      validate_drift(spec, box, static_cast<std::size_t>(samples), o.seed);
  o.columns = {"check", "value", "limit", "pass"};
  o.rows.push_back({std::string("growth max|mu|/y"), rep.max_ratio, rep.k0, rep.growth_ok});
  o.rows.push_back({std::string("lipschitz"), rep.lipschitz_estimate, 1e6, rep.lipschitz_ok});
  o.rows.push_back({std::string("bounded in x"), rep.max_abs_over_x,
                    std::numeric_limits<double>::infinity(), rep.bounded_ok});
  o.summary["drift"] = spec.name();
  o.summary["samples"] = rep.samples;
  if (rep.worst_point) {
    o.summary["worst_point"] = {rep.worst_point->x(), rep.worst_point->y()};
  }
  o.summary["passed"] = rep.passed();
  o.exit_code = rep.passed() ? kExitPass : kExitFail;
  return o;
}

inline EstimatorOptions estimator_options(const RunConfig& cfg, const std::string& section) {
  EstimatorOptions opt;
  opt.sampler.kernel = kernel_config(cfg);
  opt.workers = config_workers(cfg);
  if (section == "estimate") {
    opt.sampler.placement = placement_from(cfg.get_string("estimate", "placement"));
    const long sub = cfg.get_int("estimate", "substeps");
    if (sub < 100) throw ConfigError("estimate.substeps", "must be >= 100");
    opt.sampler.substeps_per_unit = static_cast<int>(sub);
    opt.f_cap = positive(cfg, "estimate", "f_cap");
  }
  return opt;
}

inline CommandOutput cmd_estimate(const RunConfig& cfg) {
  const DriftSpec spec = drift_from_config(cfg);
  const double t = positive(cfg, "estimate", "t");
  const HyperbolicPoint z0 = config_point(cfg, "estimate");
  const std::uint64_t n = path_count(cfg, "estimate", "n_paths");
  const double rate = positive(cfg, "estimate", "rate");
  const auto payoffs = parse_payoffs(cfg.get_string("estimate", "payoffs"), "estimate.payoffs");
  const EstimatorOptions opt = estimator_options(cfg, "estimate");
  CommandOutput o;
  o.command = "estimate";
  o.seed = cfg.get_u64("run", "seed");
  const auto res = estimate_many(spec, payoffs, t, z0, n, rate, o.seed, opt);
  o.columns = {"payoff", "mean", "std_error", "n_paths", "seed", "f_sup", "second_moment_bound"};
  for (std::size_t k = 0; k < payoffs.size(); ++k) {
    const double sup = payoffs[k].sup();
    const double bound =
        std::isfinite(sup) ? second_moment_bound(t, spec.k0(), rate, sup) : std::numeric_limits<double>::infinity();
    o.rows.push_back({payoffs[k].name(), res[k].mean, res[k].std_error, res[k].n_paths, o.seed, sup, bound});
  }
  o.summary["drift"] = spec.name();
  o.summary["t"] = t;
  o.summary["rate"] = rate;
  o.summary["weight_second_moment_bound"] = second_moment_bound(t, spec.k0(), rate, 1.0);
  nlohmann::ordered_json diag;
  add_diagnostics(diag, res.front().diagnostics);
  o.summary["diagnostics"] = diag;
  return o;
}

/// E[X_t] for mu = c y: x0 + c y0 t. NaN when no closed form is known.
inline double closed_form_mean(const DriftSpec& spec, const Payoff& f, double t,
                               const HyperbolicPoint& z0) {
  if (f.kind() == Payoff::Kind::kX) {
    if (spec.is_zero()) return z0.x();
    if (spec.name() == "linear_y") return z0.x() + spec.coefficient() * z0.y() * t;
  }
  if (f.kind() == Payoff::Kind::kPolynomial && f.name() == "poly:1") return 1.0;
  return std::numeric_limits<double>::quiet_NaN();
}

inline CommandOutput cmd_compare(const RunConfig& cfg) {
  const auto ts = cfg.get_real_list("compare", "t");
  for (double t : ts) {
    if (!(t > 0.0)) throw ConfigError("compare.t", "times must be > 0");
  }
  const HyperbolicPoint z0 = config_point(cfg, "compare");
  std::vector<DriftSpec> drifts;
  for (const auto& d : split(cfg.get_string("compare", "drifts"), '|')) {
    drifts.push_back(parse_drift(d, "compare.drifts"));
  }
  if (drifts.empty()) throw ConfigError("compare.drifts", "no drifts");
  const auto payoffs = parse_payoffs(cfg.get_string("compare", "payoffs"), "compare.payoffs");
  const std::uint64_t n = path_count(cfg, "compare", "n_paths");
  const std::uint64_t n_euler = path_count(cfg, "compare", "euler_paths");
  const double rate = positive(cfg, "compare", "rate");
  const long steps = cfg.get_int("compare", "euler_steps");
  if (steps < 1) throw ConfigError("compare.euler_steps", "must be >= 1");
  const double z_max = positive(cfg, "compare", "z_max");
  const bool negative = cfg.get_bool("compare", "negative_control");
  const EstimatorOptions opt = estimator_options(cfg, "compare");

  CommandOutput o;
  o.command = "compare";
  o.seed = cfg.get_u64("run", "seed");
  o.columns = {"drift", "c", "t", "payoff", "est_mean", "est_se", "euler_mean", "euler_se",
               "z", "closed_form", "z_closed", "pass"};
  std::size_t failures = 0, detected = 0;
  double max_z = 0.0;
  for (const auto& spec : drifts) {
    const DriftSpec oracle = negative ? spec.scaled(-1.0) : spec;
    for (double t : ts) {
      const auto est = estimate_many(spec, payoffs, t, z0, n, rate, o.seed, opt);
      const auto eul = euler_expectation_many(oracle, payoffs, t, z0, static_cast<int>(steps),
                                              n_euler, o.seed, opt.workers);
      for (std::size_t k = 0; k < payoffs.size(); ++k) {
        const double z = z_score(est[k].mean, est[k].std_error, eul[k].mean, eul[k].std_error);
        const double cf = closed_form_mean(spec, payoffs[k], t, z0);
        const double zc = std::isfinite(cf) ? z_score(est[k].mean, est[k].std_error, cf, 0.0)
                                            : std::numeric_limits<double>::quiet_NaN();
        const bool ok = std::fabs(z) <= z_max && !(std::fabs(zc) > z_max);
        if (!ok) ++failures;
        if (std::fabs(z) > z_max) ++detected;
        if (std::isfinite(z)) max_z = std::max(max_z, std::fabs(z));
        o.rows.push_back({spec.name(), spec.coefficient(), t, payoffs[k].name(), est[k].mean,
                          est[k].std_error, eul[k].mean, eul[k].std_error, z, cf, zc, ok});
      }
    }
  }
  o.summary["rows"] = o.rows.size();
  o.summary["failures"] = failures;
  o.summary["max_abs_z"] = max_z;
  o.summary["negative_control"] = negative;
  if (negative) {
    // The flipped oracle must be caught somewhere.
    o.summary["mismatches_detected"] = detected;
    o.exit_code = detected > 0 ? kExitPass : kExitFail;
  } else {
    o.exit_code = failures == 0 ? kExitPass : kExitFail;
  }
  return o;
}

inline ConvolutionQuadSpec quad_from(const RunConfig& cfg, const std::string& section) {
  const std::string q = cfg.get_string(section, "quadrature");
  ConvolutionQuadSpec spec;
  if (q == "coarse") {
    spec = ConvolutionQuadSpec::coarse();
  } else if (q != "default") {
    throw ConfigError(section + ".quadrature", "must be default or coarse");
  }
  spec.kernel = kernel_config(cfg);
  spec.workers = config_workers(cfg);
  return spec;
}

/// Cell averages of the truncated parametrix density by tensor Gauss rules.
inline std::vector<ParametrixDensity> parametrix_cell_averages(const DriftSpec& spec, double t,
                                                               const HyperbolicPoint& z0,
                                                               const DensityGrid& grid, int n_terms,
                                                               int gauss_points,
                                                               const ConvolutionQuadSpec& quad) {
  const auto gl = gauss_legendre<double>(gauss_points);
  std::vector<HyperbolicPoint> targets;
  std::vector<double> weights;
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      const Box c = grid.cell(i, j);
      for (int a = 0; a < gauss_points; ++a) {
        for (int b = 0; b < gauss_points; ++b) {
          targets.emplace_back(c.x_lo + 0.5 * (c.x_hi - c.x_lo) * (gl.nodes[a] + 1.0),
                               c.y_lo + 0.5 * (c.y_hi - c.y_lo) * (gl.nodes[b] + 1.0));
          weights.push_back(0.25 * gl.weights[a] * gl.weights[b]);
        }
      }
    }
  }
  const auto pts = density_parametrix_many(spec, t, z0, targets, n_terms, quad);
  const std::size_t per_cell = static_cast<std::size_t>(gauss_points) * gauss_points;
  std::vector<ParametrixDensity> cells(static_cast<std::size_t>(grid.nx) * grid.ny);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ParametrixDensity& out = cells[c];
    out.terms.assign(static_cast<std::size_t>(n_terms), 0.0);
    for (std::size_t k = 0; k < per_cell; ++k) {
      const std::size_t idx = c * per_cell + k;
      const double w = weights[idx];
      out.value += w * pts[idx].value;
      out.q2 += w * pts[idx].q2;
      out.remainder_bound += w * pts[idx].remainder_bound;
      for (int n = 0; n < n_terms; ++n) {
        out.terms[static_cast<std::size_t>(n)] += w * pts[idx].terms[static_cast<std::size_t>(n)];
      }
    }
  }
  return cells;
}

inline CommandOutput cmd_density(const RunConfig& cfg) {
  const DriftSpec spec = drift_from_config(cfg);
  const double t = positive(cfg, "density", "t");
  const HyperbolicPoint z0 = config_point(cfg, "density");
  const long n_terms = cfg.get_int("density", "n_terms");
  if (n_terms < 0 || n_terms > 3) throw ConfigError("density.n_terms", "must lie in [0, 3]");
  DensityGrid grid{cfg.get_real("density", "x_lo"), cfg.get_real("density", "x_hi"),
                   cfg.get_real("density", "y_lo"), cfg.get_real("density", "y_hi"),
                   static_cast<int>(cfg.get_int("density", "nx")),
                   static_cast<int>(cfg.get_int("density", "ny"))};
  try {
    grid.validate();
  } catch (const std::exception& e) {
    throw ConfigError("density", e.what());
  }
  const long gp = cfg.get_int("density", "gauss_points");
  if (gp < 1 || gp > 8) throw ConfigError("density.gauss_points", "must lie in [1, 8]");
  const std::uint64_t n = path_count(cfg, "density", "n_paths");
  const double rate = positive(cfg, "density", "rate");
  const double z_max = positive(cfg, "density", "z_max");
  const ConvolutionQuadSpec quad = quad_from(cfg, "density");
  const EstimatorOptions opt = estimator_options(cfg, "density");

  CommandOutput o;
  o.command = "density";
  o.seed = cfg.get_u64("run", "seed");
  const auto par = parametrix_cell_averages(spec, t, z0, grid, static_cast<int>(n_terms),
                                            static_cast<int>(gp), quad);
  const auto mc = estimate_density(spec, t, z0, grid, n, rate, o.seed, opt);
  o.columns = {"i", "j", "x_center", "y_center", "interior", "parametrix", "remainder_bound",
               "mc", "mc_se", "z", "remainder_ratio", "mass_parametrix", "mass_mc"};
  const double area = grid.cell_area();
  double mass_par = 0.0, mass_mc = 0.0, mass_var = 0.0, max_z = 0.0, max_ratio = 0.0;
  std::size_t failures = 0;
  // The cell indicators of one path are exclusive, so the variance of the
  // total mass is sum E[(w 1_cell)^2] - (sum mean)^2 in area units.
  double second = 0.0;
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      const std::size_t c = static_cast<std::size_t>(i) * grid.ny + j;
      const Box b = grid.cell(i, j);
      const bool interior = i > 0 && j > 0 && i + 1 < grid.nx && j + 1 < grid.ny;
      const double comb = std::hypot(mc[c].std_error, par[c].remainder_bound);
      const double z = comb > 0.0 ? (mc[c].mean - par[c].value) / comb : 0.0;
      const double ratio = par[c].remainder_bound / std::fabs(par[c].value);
      if (interior) {
        max_z = std::max(max_z, std::fabs(z));
        max_ratio = std::max(max_ratio, ratio);
        if (std::fabs(z) > z_max) ++failures;
      }
      mass_par += par[c].value * area;
      mass_mc += mc[c].mean * area;
      const double nn = static_cast<double>(mc[c].n_paths);
      second += (mc[c].std_error * mc[c].std_error * nn * (nn - 1.0) / nn + mc[c].mean * mc[c].mean) *
                area * area;
      o.rows.push_back({std::int64_t{i}, std::int64_t{j}, 0.5 * (b.x_lo + b.x_hi),
                        0.5 * (b.y_lo + b.y_hi), interior, par[c].value, par[c].remainder_bound,
                        mc[c].mean, mc[c].std_error, z, ratio, par[c].value * area,
                        mc[c].mean * area});
    }
  }
  mass_var = std::max(0.0, second - mass_mc * mass_mc) / static_cast<double>(n);
  o.summary["drift"] = spec.name();
  o.summary["n_terms"] = n_terms;
  o.summary["mass_parametrix"] = mass_par;
  o.summary["mass_mc"] = mass_mc;
  o.summary["mass_mc_se"] = std::sqrt(mass_var);
  o.summary["max_interior_abs_z"] = max_z;
  o.summary["max_interior_remainder_ratio"] = max_ratio;
  o.summary["interior_failures"] = failures;
  nlohmann::ordered_json diag;
  add_diagnostics(diag, mc.front().diagnostics);
  o.summary["diagnostics"] = diag;
  o.exit_code = failures == 0 ? kExitPass : kExitFail;
  return o;
}

/// Reduced-size run of the invariant checks. Output depends only on the
/// config (no timings), so repeated runs are byte-identical.
inline CommandOutput cmd_selftest(const RunConfig& cfg) {
  const KernelConfig kc = kernel_config(cfg);
  const unsigned workers = config_workers(cfg);
  const std::uint64_t n = path_count(cfg, "selftest", "n_paths");
  const std::uint64_t clocks = path_count(cfg, "selftest", "clocks");
  const long theta_n = cfg.get_int("selftest", "theta_samples");
  if (theta_n < 1) throw ConfigError("selftest.theta_samples", "must be >= 1");
  CommandOutput o;
  o.command = "selftest";
  o.seed = cfg.get_u64("run", "seed");
  o.columns = {"check", "value", "limit", "pass"};
  std::size_t failed = 0;
  auto check = [&](const std::string& name, double value, double limit, bool pass) {
    o.rows.push_back({name, value, limit, pass});
    if (!pass) ++failed;
  };

  for (double t : {0.25, 1.0}) {
    const double err = std::fabs(normalization_integral(t, kc) - 1.0);
    check("normalization t=" + format_number(t), err, 1e-6, err <= 1e-6);
  }
  {
    const HyperbolicPoint z(0.0, 1.0), z2(0.5, 1.2);
    const double rel =
        std::fabs(semigroup_integral(0.5, 0.5, z, z2, kc) / q2_density(1.0, z, z2, kc) - 1.0);
    check("semigroup s=t=0.5", rel, 1e-4, rel <= 1e-4);
  }
  {
    double worst = 0.0;
    for (double t : {0.5, 2.0}) {
      for (double r : {0.5, 2.0}) worst = std::max(worst, heat_residual(t, r).relative);
    }
    check("heat residual", worst, 1e-3, worst <= 1e-3);
  }
  {
    const auto sweep = theta_sweep(theta_sweep_points(static_cast<std::size_t>(theta_n)), kc);
    check("theta bound max|theta|/(1.5 K0)", sweep.max_ratio_to_bound, 1.0 + kThetaClampWindow,
          sweep.over_bound == 0);
  }
  {
    const ClockStats cs = clock_statistics(1.0, 1.0, clocks, o.seed);
    const double z1 = std::fabs(cs.mean_events - 1.0) / cs.mean_se;
    const double z2 = std::fabs(cs.p_zero - std::exp(-1.0)) / cs.p_zero_se;
    check("clock mean events |z|", z1, 4.0, z1 <= 4.0);
    check("clock P(N=0) |z|", z2, 4.0, z2 <= 4.0);
  }
  EstimatorOptions opt;
  opt.sampler.kernel = kc;
  opt.workers = workers;
  {
    const auto r = estimate_expectation(DriftSpec::zero(1.0), Payoff::one(), 1.0,
                                        HyperbolicPoint(0.0, 1.0), n, 1.0, o.seed, opt);
    const double z = std::fabs(r.mean - 1.0) / r.std_error;
    check("driftless mass |z|", z, 4.0, z <= 4.0);
  }
  {
    const DriftSpec spec = DriftSpec::linear_y(1.0, 1.0);
    const auto r = estimate_expectation(spec, Payoff::one(), 1.0, HyperbolicPoint(0.0, 1.0), n,
                                        1.0, o.seed, opt);
    const auto& d = r.diagnostics;
    check("weight ceiling violations", static_cast<double>(d.ceiling_violations), 0.0,
          d.ceiling_violations == 0);
    const double bound = second_moment_bound(1.0, 1.0, 1.0, 1.0);
    const double lower = d.weight_second_moment - 4.0 * d.weight_second_moment_se;
    check("weight second moment (lower 4 SE)", lower, bound, lower <= bound);
  }
  o.summary["checks"] = o.rows.size();
  o.summary["failed"] = failed;
  o.exit_code = failed == 0 ? kExitPass : kExitFail;
  return o;
}

/// Runs a command by name; numerical failures map to exit code 3 and
/// config errors propagate as ConfigError.
inline CommandOutput run_command(const std::string& name, const RunConfig& cfg) {
  if (name == "kernels") return cmd_kernels(cfg);
  if (name == "validate-drift") return cmd_validate_drift(cfg);
  if (name == "estimate") return cmd_estimate(cfg);
  if (name == "compare") return cmd_compare(cfg);
  if (name == "density") return cmd_density(cfg);
  if (name == "selftest") return cmd_selftest(cfg);
  throw ConfigError("command", "unknown command '" + name + "'");
}

}  // namespace hbm
