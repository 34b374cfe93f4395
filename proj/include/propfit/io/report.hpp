#pragma once

// Fit reports (estimate, bias, std. error and bias/sqrt(MSE) per parameter
// and per method) and simulation output, as aligned text and JSON. All
// numbers are rounded to 12 significant digits once; text tables print the
// same rounded values with fewer decimals.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "propfit/asymptotics.hpp"
#include "propfit/equivalent_dose.hpp"
#include "propfit/estimators.hpp"
#include "propfit/io/config.hpp"
#include "propfit/jacobian.hpp"
#include "propfit/simulation.hpp"

namespace propfit::io {

[[nodiscard]] inline double sig12(double v) {
  if (!std::isfinite(v)) return v;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

// NaN and infinities become null.
[[nodiscard]] inline json number(double v) { return std::isfinite(v) ? json(sig12(v)) : json(nullptr); }

struct ParamRow {
  std::string name;
  double estimate = 0.0;
  double bias = 0.0;
  double se = 0.0;
  double bias_over_rmse_pct = 0.0;  // 100 bias / sqrt(bias^2 + se^2)
};

struct MethodReport {
  Method method = Method::ml;
  FitMode mode = FitMode::separate;
  bool fitted = false;
  bool converged = false;
  int iterations = 0;
  std::string message;
  double sigma = 0.0;
  std::string sigma_rule;  // "ml" or "unbiased"
  std::vector<double> sigmas_used;
  std::vector<ParamRow> rows;
  std::optional<double> gamma;      // signed intersection
  std::optional<ParamRow> dose;     // |gamma|
  std::vector<std::string> warnings;
};

struct FitReport {
  std::string model;
  SigmaMode sigma_mode = SigmaMode::common_sigma;
  std::vector<std::string> labels;
  std::vector<std::size_t> sizes;
  std::vector<MethodReport> methods;

  [[nodiscard]] bool any_converged() const {
    for (const auto& m : methods) {
      if (m.converged) return true;
    }
    return false;
  }
};

namespace detail {

inline ParamRow make_row(std::string name, double estimate, double bias, double se) {
  const double rmse = std::sqrt(bias * bias + se * se);
  return {std::move(name), sig12(estimate), sig12(bias), sig12(se), sig12(rmse > 0.0 ? 100.0 * bias / rmse : 0.0)};
}

inline void append_unique(std::vector<std::string>& dst, const std::vector<std::string>& src) {
  for (const auto& w : src) {
    if (std::find(dst.begin(), dst.end(), w) == dst.end()) dst.push_back(w);
  }
}

}  // namespace detail

struct FitRequest {
  explicit FitRequest(ModelFunction m) : model(std::move(m)) {}

  ModelFunction model;
  std::vector<std::string> labels;
  std::vector<Dataset> curves;  // one, or unbleached then bleached
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  SigmaMode sigma_mode = SigmaMode::common_sigma;
  FitOptions fit;
  std::optional<std::pair<double, double>> gamma_bracket;
  bool want_gamma = true;  // two curves only
};

// Bias and std. error are the order-sigma^2 formulae evaluated at (theta_hat,
// sigma_hat); ML uses its own sigma_hat, the others the unbiased one.
[[nodiscard]] inline FitReport build_fit_report(const FitRequest& req) {
  if (req.curves.empty() || req.curves.size() > 2) throw InputError("fit needs one or two curves");
  FitReport rep;
  rep.model = req.model.name();
  rep.sigma_mode = req.sigma_mode;
  rep.labels = req.labels;
  for (const auto& c : req.curves) rep.sizes.push_back(c.size());

  std::vector<Curve> curves;
  for (const auto& d : req.curves) curves.push_back(Curve{req.model, d});
  const bool two = curves.size() == 2;
  const PartialBleachModel pb{req.model, req.model};
  std::vector<std::vector<double>> grids;
  for (const auto& d : req.curves) grids.push_back(d.xs());

  for (Method m : req.methods) {
    MethodReport mr;
    mr.method = m;
    mr.mode = fit_mode_for(m, req.sigma_mode);
    mr.sigma_rule = m == Method::ml ? "ml" : "unbiased";
    try {
      const FitResult fr = fit_curves(std::span<const Curve>(curves), m, mr.mode, req.fit);
      mr.fitted = true;
      mr.converged = fr.converged;
      mr.iterations = fr.iterations;
      mr.message = fr.message;
      mr.sigma = sig12(fr.sigma_hat);
      if (two && req.sigma_mode == SigmaMode::separate) {
        mr.sigmas_used = fr.curve_sigmas;
      } else {
        mr.sigmas_used.assign(curves.size(), fr.sigma_hat);
      }
      Vector bias;
      Matrix cov;
      std::vector<std::string> names;
      if (!two) {
        const JacobianBundle b = build_jacobian_bundle(req.model, req.curves[0], fr.theta_hat);
        detail::append_unique(mr.warnings, b.warnings);
        bias = bias_vector(m, b, mr.sigmas_used[0]);
        cov = m == Method::ml ? cov_ml_exact(b, mr.sigmas_used[0]).cov : cov_order2(b, mr.sigmas_used[0]).cov;
        names = req.model.param_names();
      } else {
        const JointAsymptotics ja = joint_bias_cov(pb, grids[0], grids[1], fr.theta_hat,
                                                   {mr.sigmas_used[0], mr.sigmas_used[1]}, m, mr.mode);
        bias = ja.bias;
        cov = ja.cov;
        names = pb.param_names();
      }
      for (Index j = 0; j < fr.theta_hat.size(); ++j) {
        mr.rows.push_back(detail::make_row(names[static_cast<std::size_t>(j)], fr.theta_hat(j), bias(j),
                                           std::sqrt(std::max(0.0, cov(j, j)))));
      }
      if (two && req.want_gamma) {
        try {
          const DoseEstimate de = gamma_bias_se(pb, grids[0], grids[1], fr.theta_hat,
                                                {mr.sigmas_used[0], mr.sigmas_used[1]}, m, mr.mode, req.gamma_bracket);
          mr.gamma = sig12(de.gamma_hat);
          mr.dose = detail::make_row("equivalent_dose", de.equivalent_dose(), de.equivalent_dose_bias(), de.se);
          detail::append_unique(mr.warnings, de.warnings);
        } catch (const Error& e) {
          mr.warnings.push_back(std::string("equivalent dose unavailable: ") + e.what());
        }
      }
    } catch (const Error& e) {
      mr.message = e.what();
    }
    rep.methods.push_back(std::move(mr));
  }
  return rep;
}

[[nodiscard]] inline json to_json(const ParamRow& r) {
  return {{"name", r.name},
          {"estimate", number(r.estimate)},
          {"bias", number(r.bias)},
          {"se", number(r.se)},
          {"bias_over_rmse_pct", number(r.bias_over_rmse_pct)}};
}

[[nodiscard]] inline json to_json(const FitReport& rep) {
  json curves = json::array();
  for (std::size_t k = 0; k < rep.labels.size(); ++k) curves.push_back({{"label", rep.labels[k]}, {"n", rep.sizes[k]}});
  json methods = json::array();
  for (const auto& m : rep.methods) {
    json params = json::array();
    for (const auto& r : m.rows) params.push_back(to_json(r));
    json sig = json::array();
    for (double s : m.sigmas_used) sig.push_back(number(s));
    methods.push_back({{"method", method_name(m.method)},
                       {"fit_mode", mode_name(m.mode)},
                       {"fitted", m.fitted},
                       {"converged", m.converged},
                       {"iterations", m.iterations},
                       {"message", m.message},
                       {"sigma", number(m.sigma)},
                       {"sigma_rule", m.sigma_rule},
                       {"sigmas_used", sig},
                       {"parameters", params},
                       {"gamma", m.gamma ? number(*m.gamma) : json(nullptr)},
                       {"equivalent_dose", m.dose ? to_json(*m.dose) : json(nullptr)},
                       {"warnings", m.warnings}});
  }
  return {{"kind", "fit"},
          {"model", rep.model},
          {"sigma_mode", sigma_mode_name(rep.sigma_mode)},
          {"curves", curves},
          {"methods", methods}};
}

[[nodiscard]] inline std::string fixed(double v, int decimals) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

[[nodiscard]] inline std::string render_text(const FitReport& rep) {
  constexpr int kTitle = 14;
  constexpr int kLabel = 37;
  constexpr int kCol = 14;
  std::ostringstream os;
  os << "Model: " << rep.model << "   curves:";
  for (std::size_t k = 0; k < rep.labels.size(); ++k) os << " " << rep.labels[k] << " (n=" << rep.sizes[k] << ")";
  os << "   sigma mode: " << sigma_mode_name(rep.sigma_mode) << "\n";
  os << std::left << std::setw(kLabel) << "" << std::right;
  for (const auto& m : rep.methods) os << std::setw(kCol) << method_name(m.method);
  os << "\n";

  auto block = [&](const std::string& title, auto get) {
    const char* labels[] = {"Estimate", "bias", "std. error (se)", "bias/sqrt(MSE) x 100%"};
    for (int line = 0; line < 4; ++line) {
      os << std::left << std::setw(kTitle) << (line == 0 ? title : "") << std::setw(kLabel - kTitle) << labels[line] << std::right;
      for (const auto& m : rep.methods) {
        const ParamRow* r = get(m);
        std::string cell = "-";
        if (r != nullptr) {
          const double v = line == 0 ? r->estimate : line == 1 ? r->bias : line == 2 ? r->se : r->bias_over_rmse_pct;
          cell = fixed(v, 2);
        }
        os << std::setw(kCol) << cell;
      }
      os << "\n";
    }
  };

  std::vector<std::string> names;
  for (const auto& m : rep.methods) {
    if (!m.rows.empty()) {
      for (const auto& r : m.rows) names.push_back(r.name);
      break;
    }
  }
  for (std::size_t j = 0; j < names.size(); ++j) {
    block(names[j], [&](const MethodReport& m) -> const ParamRow* { return j < m.rows.size() ? &m.rows[j] : nullptr; });
  }
  bool any_dose = false;
  for (const auto& m : rep.methods) any_dose = any_dose || m.dose.has_value();
  if (any_dose) {
    block("dose |gamma|", [](const MethodReport& m) -> const ParamRow* { return m.dose ? &*m.dose : nullptr; });
  }
  os << std::left << std::setw(kTitle) << "sigma" << std::setw(kLabel - kTitle) << "Estimate" << std::right;
  for (const auto& m : rep.methods) os << std::setw(kCol) << (m.fitted ? fixed(m.sigma, 3) : "-");
  os << "\n";
  os << std::left << std::setw(kLabel) << "converged" << std::right;
  for (const auto& m : rep.methods) os << std::setw(kCol) << (m.converged ? "yes" : "NO");
  os << "\n";
  for (const auto& m : rep.methods) {
    if (!m.converged) os << method_name(m.method) << ": " << m.message << "\n";
    for (const auto& w : m.warnings) os << method_name(m.method) << " warning: " << w << "\n";
  }
  return os.str();
}

// ---- simulation ----

[[nodiscard]] inline SimSummary rounded(SimSummary s) {
  for (auto& c : s.cells) {
    c.B_s = sig12(c.B_s);
    c.mc_se = sig12(c.mc_se);
    c.B_T = sig12(c.B_T);
    c.sd = sig12(c.sd);
  }
  for (auto& t : s.truth) t = sig12(t);
  return s;
}

[[nodiscard]] inline json to_json(const BiasTable& t) {
  json rows = json::array();
  for (std::size_t si = 0; si < t.rows.size(); ++si) {
    json row = {{"sigma", number(t.sigmas[si])}};
    for (std::size_t mi = 0; mi < t.methods.size(); ++mi) {
      row[std::string(method_name(t.methods[mi]))] = {{"B_T", number(t.rows[si][mi].first)}, {"B_s", number(t.rows[si][mi].second)}};
    }
    rows.push_back(row);
  }
  return {{"quantity", t.quantity}, {"rows", rows}};
}

[[nodiscard]] inline json to_json(const SimSummary& s) {
  json methods = json::array();
  for (Method m : s.methods) methods.push_back(method_name(m));
  json sigmas = json::array();
  for (double v : s.sigmas) sigmas.push_back(number(v));
  json truth = json::array();
  for (double v : s.truth) truth.push_back(number(v));
  json cells = json::array();
  for (std::size_t mi = 0; mi < s.methods.size(); ++mi) {
    for (std::size_t si = 0; si < s.sigmas.size(); ++si) {
      for (std::size_t qi = 0; qi < s.quantities.size(); ++qi) {
        const SimCell& c = s.at(mi, si, qi);
        cells.push_back({{"method", method_name(s.methods[mi])},
                         {"sigma", number(s.sigmas[si])},
                         {"quantity", s.quantities[qi]},
                         {"B_s", number(c.B_s)},
                         {"mc_se", number(c.mc_se)},
                         {"B_T", number(c.B_T)},
                         {"sd", number(c.sd)},
                         {"R_effective", c.R_effective},
                         {"failure_count", c.failure_count},
                         {"rejected_count", c.rejected_count}});
      }
    }
  }
  return {{"kind", "simulation"},
          {"seed", s.seed},
          {"replicates", s.replicates},
          {"antithetic", s.antithetic},
          {"methods", methods},
          {"sigmas", sigmas},
          {"quantities", s.quantities},
          {"truth", truth},
          {"cells", cells},
          {"table", to_json(compare_bias_table(s))}};
}

[[nodiscard]] inline std::string render_text(const SimSummary& s) {
  std::ostringstream os;
  os << "Replicates per sigma: " << s.replicates << "   seed: " << s.seed
     << (s.antithetic ? "   antithetic pairs" : "") << "\n";
  os << render_text(compare_bias_table(s), 4);
  os << "\nMonte Carlo standard errors of B_s and replicate counts (effective/failed/rejected):\n";
  const BiasTable t = compare_bias_table(s);
  const std::size_t qi = t.quantity.empty() ? 0 : s.quantity_index(t.quantity);
  os << std::setw(8) << "sigma";
  for (Method m : s.methods) os << " | " << std::setw(24) << method_name(m);
  os << "\n";
  for (std::size_t si = 0; si < s.sigmas.size(); ++si) {
    os << std::setw(8) << fixed(s.sigmas[si], 3);
    for (std::size_t mi = 0; mi < s.methods.size(); ++mi) {
      if (s.quantities.empty()) {
        os << " | " << std::setw(24) << "-";
        continue;
      }
      const SimCell& c = s.at(mi, si, qi);
      std::ostringstream cell;
      cell << fixed(c.mc_se, 4) << "  " << c.R_effective << "/" << c.failure_count << "/" << c.rejected_count;
      os << " | " << std::setw(24) << cell.str();
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace propfit::io
