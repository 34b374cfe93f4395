#pragma once

// Seeded Monte Carlo studies of estimator bias: generate
// y = f(x, theta0)(1 + sigma eps), fit every requested estimator and compare
// the empirical bias B_s with the small-sigma formula B_T.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "propfit/asymptotics.hpp"
#include "propfit/equivalent_dose.hpp"
#include "propfit/errors.hpp"
#include "propfit/estimators.hpp"
#include "propfit/model.hpp"

namespace propfit {

enum class StartMode { truth, automatic };

// Default dose grids of the partial-bleach design: 16 unbleached and 13
// bleached aliquots.
[[nodiscard]] inline std::vector<double> default_unbleached_grid() {
  return {0, 0, 50, 50, 100, 100, 200, 200, 400, 400, 600, 600, 800, 800, 1000, 1000};
}

[[nodiscard]] inline std::vector<double> default_bleached_grid() {
  return {0, 0, 50, 100, 100, 200, 200, 400, 400, 600, 600, 800, 1000};
}

struct SimDesign {
  std::vector<ModelFunction> curves;       // one curve, or unbleached + bleached
  std::vector<std::vector<double>> grids;  // dose levels per curve
  Vector theta0;                           // concatenated true parameters
  bool track_gamma = false;                // two-curve design: also estimate the intersection
  std::optional<std::pair<double, double>> gamma_bracket;
  std::vector<double> sigmas;
  int replicates = 1000;
  std::uint64_t seed = 1;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  bool reject_nonpositive = true;
  bool antithetic = false;       // pair replicate 2m+1 with -eps of replicate 2m
  bool ml_common_sigma = true;   // two-curve ML: common sigma (else per-curve)
  StartMode start = StartMode::truth;
  FitOptions fit;

  [[nodiscard]] Index p() const {
    Index p = 0;
    for (const auto& c : curves) p += c.p();
    return p;
  }

  [[nodiscard]] std::vector<std::string> quantity_names() const {
    std::vector<std::string> out;
    if (curves.size() == 2 && track_gamma) {
      PartialBleachModel pb{curves[0], curves[1]};
      out = pb.param_names();
      out.emplace_back("gamma");
      return out;
    }
    for (const auto& c : curves) {
      for (const auto& n : c.param_names()) out.push_back(n);
    }
    return out;
  }

  [[nodiscard]] PartialBleachModel partial_bleach() const { return PartialBleachModel{curves.at(0), curves.at(1)}; }

  [[nodiscard]] FitMode mode_for(Method m) const {
    if (curves.size() < 2) return FitMode::separate;
    return (m == Method::ml && ml_common_sigma) ? FitMode::common_sigma : FitMode::separate;
  }

  void validate() const {
    if (curves.empty() || curves.size() > 2) throw InputError("a design has one or two curves");
    if (grids.size() != curves.size()) throw InputError("one dose grid per curve is required");
    for (std::size_t k = 0; k < curves.size(); ++k) {
      if (grids[k].size() <= static_cast<std::size_t>(curves[k].p())) {
        throw InputError("dose grid " + std::to_string(k + 1) + " has too few points for its model");
      }
    }
    if (theta0.size() != p()) throw InputError("theta0 has the wrong length for the design");
    if (track_gamma && curves.size() != 2) throw InputError("gamma tracking needs a two-curve design");
    if (replicates < 1) throw InputError("replicates must be at least 1");
    if (methods.empty()) throw InputError("no methods requested");
    for (double s : sigmas) {
      if (!(s >= 0.0 && s <= 0.5)) throw InputError("sigma values must lie in [0, 0.5]");
    }
    fit.validate();
  }
};

[[nodiscard]] inline SimDesign partial_bleach_design(const PartialBleachReference& ref = {}) {
  SimDesign d;
  d.curves = {models::saturating_exponential(), models::saturating_exponential()};
  d.grids = {default_unbleached_grid(), default_bleached_grid()};
  d.theta0 = reference_theta(ref);
  d.track_gamma = true;
  d.sigmas = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06};
  d.replicates = 10000;
  return d;
}

[[nodiscard]] inline SimDesign single_curve_design(ModelFunction model, std::vector<double> grid, Vector theta0) {
  SimDesign d;
  d.curves = {std::move(model)};
  d.grids = {std::move(grid)};
  d.theta0 = std::move(theta0);
  return d;
}

// Replicate streams are keyed by (seed, sigma index, replicate index) only, so
// results do not depend on which thread ran which replicate.
[[nodiscard]] inline std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint32_t sigma_index,
                                                      std::uint64_t replicate_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), sigma_index,
                    static_cast<std::uint32_t>(replicate_index), static_cast<std::uint32_t>(replicate_index >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

// y_i = f(x_i, theta0)(1 + sigma eps_i) for a supplied eps vector.
[[nodiscard]] inline Dataset generate_dataset_from_eps(const ModelFunction& model, std::span<const double> xs,
                                                       const Vector& theta0, double sigma,
                                                       std::span<const double> eps) {
  if (eps.size() != xs.size()) throw DataError("eps must have one entry per design point");
  std::vector<Observation> obs;
  obs.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) obs.push_back({xs[i], model.value(xs[i], theta0) * (1.0 + sigma * eps[i])});
  return Dataset(std::move(obs));
}

[[nodiscard]] inline bool has_nonpositive_response(const Dataset& d) {
  return std::any_of(d.begin(), d.end(), [](const Observation& o) { return o.y <= 0.0; });
}

// Draws eps from `engine`; std::nullopt signals a rejected replicate (some
// y_i <= 0 while rejection is enabled).
template <class Engine>
[[nodiscard]] std::optional<Dataset> generate_dataset(const ModelFunction& model, std::span<const double> xs,
                                                      const Vector& theta0, double sigma, Engine& engine,
                                                      bool reject_nonpositive = true) {
  std::normal_distribution<double> normal;
  std::vector<double> eps(xs.size());
  for (auto& e : eps) e = normal(engine);
  Dataset d = generate_dataset_from_eps(model, xs, theta0, sigma, eps);
  if (reject_nonpositive && has_nonpositive_response(d)) return std::nullopt;
  return d;
}

struct SimCell {
  double B_s = 0.0;    // mean(estimate) - truth
  double mc_se = 0.0;  // Monte Carlo standard error of B_s
  double B_T = 0.0;    // small-sigma formula
  double sd = 0.0;     // sample sd of the estimates
  int R_effective = 0;
  int failure_count = 0;
  int rejected_count = 0;
};

struct SimSummary {
  std::vector<Method> methods;
  std::vector<double> sigmas;
  std::vector<std::string> quantities;
  std::vector<double> truth;
  int replicates = 0;
  std::uint64_t seed = 0;
  bool antithetic = false;
  std::vector<SimCell> cells;  // [method][sigma][quantity]

  [[nodiscard]] std::size_t index(std::size_t mi, std::size_t si, std::size_t qi) const {
    return (mi * sigmas.size() + si) * quantities.size() + qi;
  }
  [[nodiscard]] const SimCell& at(std::size_t mi, std::size_t si, std::size_t qi) const { return cells[index(mi, si, qi)]; }
  [[nodiscard]] SimCell& at(std::size_t mi, std::size_t si, std::size_t qi) { return cells[index(mi, si, qi)]; }

  [[nodiscard]] std::size_t method_index(Method m) const {
    for (std::size_t i = 0; i < methods.size(); ++i) {
      if (methods[i] == m) return i;
    }
    throw InputError("method not in summary");
  }

  [[nodiscard]] std::size_t quantity_index(const std::string& name) const {
    for (std::size_t i = 0; i < quantities.size(); ++i) {
      if (quantities[i] == name) return i;
    }
    throw InputError("quantity '" + name + "' not in summary");
  }
};

namespace detail {

struct ReplicateOutcome {
  bool rejected = false;
  std::vector<std::uint8_t> ok;  // per method
  std::vector<double> est;       // [method][quantity]
};

inline ReplicateOutcome run_replicate(const SimDesign& d, std::size_t sigma_index, int k, std::size_t nq) {
  ReplicateOutcome out;
  const double sigma = d.sigmas[sigma_index];
  const std::uint64_t stream = d.antithetic ? static_cast<std::uint64_t>(k / 2) : static_cast<std::uint64_t>(k);
  const double sign = (d.antithetic && k % 2 == 1) ? -1.0 : 1.0;
  auto engine = replicate_engine(d.seed, static_cast<std::uint32_t>(sigma_index), stream);
  std::normal_distribution<double> normal;

  std::vector<Curve> curves;
  Index off = 0;
  for (std::size_t c = 0; c < d.curves.size(); ++c) {
    const auto& xs = d.grids[c];
    std::vector<double> eps(xs.size());
    for (auto& e : eps) e = sign * normal(engine);
    const Vector th = d.theta0.segment(off, d.curves[c].p());
    Dataset data = generate_dataset_from_eps(d.curves[c], xs, th, sigma, eps);
    if (d.reject_nonpositive && has_nonpositive_response(data)) out.rejected = true;
    curves.push_back(Curve{d.curves[c], std::move(data)});
    off += d.curves[c].p();
  }
  out.ok.assign(d.methods.size(), 0);
  out.est.assign(d.methods.size() * nq, 0.0);
  if (out.rejected) return out;

  FitOptions opts = d.fit;
  if (d.start == StartMode::truth) {
    opts.start = d.theta0;
  } else {
    opts.start.reset();
  }
  for (std::size_t mi = 0; mi < d.methods.size(); ++mi) {
    const Method m = d.methods[mi];
    try {
      FitResult fr = fit_curves(std::span<const Curve>(curves), m, d.mode_for(m), opts);
      if (!fr.converged) continue;
      for (Index j = 0; j < fr.theta_hat.size(); ++j) out.est[mi * nq + static_cast<std::size_t>(j)] = fr.theta_hat(j);
      if (d.track_gamma) {
        const GammaRoot root = solve_gamma(d.partial_bleach(), fr.theta_hat, d.gamma_bracket);
        out.est[mi * nq + nq - 1] = root.gamma;
      }
      out.ok[mi] = 1;
    } catch (const Error&) {
      // counted as a failure
    }
  }
  return out;
}

template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  const int nt = std::max(1, std::min(threads, count));
  if (nt == 1) {
    for (int k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (int k = next.fetch_add(1); k < count; k = next.fetch_add(1)) fn(k);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// B_T for every quantity at theta0; gamma includes its curvature term.
[[nodiscard]] inline std::vector<double> formula_bias(const SimDesign& d, Method m, double sigma) {
  std::vector<double> out;
  if (d.curves.size() == 1) {
    const JacobianBundle b = build_jacobian_bundle(d.curves[0], std::span<const double>(d.grids[0]), d.theta0);
    const Vector bias = bias_vector(m, b, sigma);
    out.assign(bias.data(), bias.data() + bias.size());
    return out;
  }
  const PartialBleachModel pb = d.partial_bleach();
  const JointAsymptotics ja =
      joint_bias_cov(pb, d.grids[0], d.grids[1], d.theta0, {sigma, sigma}, m, d.mode_for(m));
  out.assign(ja.bias.data(), ja.bias.data() + ja.bias.size());
  if (d.track_gamma) {
    out.push_back(gamma_bias_se(pb, d.grids[0], d.grids[1], d.theta0, sigma, m, d.mode_for(m), d.gamma_bracket).bias);
  }
  return out;
}

[[nodiscard]] inline SimSummary run_study(const SimDesign& design, int threads = 1) {
  design.validate();
  SimSummary s;
  s.methods = design.methods;
  s.sigmas = design.sigmas;
  s.quantities = design.quantity_names();
  s.replicates = design.replicates;
  s.seed = design.seed;
  s.antithetic = design.antithetic;
  const std::size_t nq = s.quantities.size();
  s.truth.assign(design.theta0.data(), design.theta0.data() + design.theta0.size());
  if (design.track_gamma) s.truth.push_back(solve_gamma(design.partial_bleach(), design.theta0, design.gamma_bracket).gamma);
  s.cells.assign(s.methods.size() * s.sigmas.size() * nq, SimCell{});

  const int R = design.replicates;
  for (std::size_t si = 0; si < s.sigmas.size(); ++si) {
    std::vector<detail::ReplicateOutcome> outs(static_cast<std::size_t>(R));
    detail::parallel_for(R, threads, [&](int k) {
      outs[static_cast<std::size_t>(k)] = detail::run_replicate(design, si, k, nq);
    });

    int rejected = 0;
    for (const auto& o : outs) rejected += o.rejected ? 1 : 0;

    for (std::size_t mi = 0; mi < s.methods.size(); ++mi) {
      std::vector<double> bt;
      try {
        bt = formula_bias(design, s.methods[mi], s.sigmas[si]);
      } catch (const Error&) {
        bt.assign(nq, std::numeric_limits<double>::quiet_NaN());
      }
      for (std::size_t qi = 0; qi < nq; ++qi) {
        SimCell& cell = s.at(mi, si, qi);
        cell.B_T = bt[qi];
        cell.rejected_count = rejected;
        // Aggregate in replicate order; antithetic pairs form clusters for
        // the standard error.
        const int group = design.antithetic ? 2 : 1;
        double sum = 0.0;
        int n = 0;
        for (const auto& o : outs) {
          if (o.rejected || !o.ok[mi]) continue;
          sum += o.est[mi * nq + qi] - s.truth[qi];
          ++n;
        }
        cell.R_effective = n;
        cell.failure_count = R - rejected - n;
        if (n == 0) {
          cell.B_s = std::numeric_limits<double>::quiet_NaN();
          cell.mc_se = std::numeric_limits<double>::quiet_NaN();
          cell.sd = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        const double mean = sum / n;
        double ss = 0.0;
        double cluster_ss = 0.0;
        int groups = 0;
        for (int g0 = 0; g0 < R; g0 += group) {
          double gsum = 0.0;
          int gn = 0;
          for (int k = g0; k < std::min(R, g0 + group); ++k) {
            const auto& o = outs[static_cast<std::size_t>(k)];
            if (o.rejected || !o.ok[mi]) continue;
            const double dev = o.est[mi * nq + qi] - s.truth[qi] - mean;
            ss += dev * dev;
            gsum += dev;
            ++gn;
          }
          if (gn > 0) {
            cluster_ss += gsum * gsum;
            ++groups;
          }
        }
        cell.B_s = mean;
        cell.sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        cell.mc_se = groups > 1 ? std::sqrt(cluster_ss * groups / (groups - 1.0)) / n : 0.0;
      }
    }
  }
  return s;
}

// Table of (B_T, B_s) pairs: one row per sigma, one column pair per method.
struct BiasTable {
  std::string quantity;
  std::vector<Method> methods;
  std::vector<double> sigmas;
  std::vector<std::vector<std::pair<double, double>>> rows;  // [sigma][method] -> (B_T, B_s)
};

[[nodiscard]] inline BiasTable compare_bias_table(const SimSummary& s, std::size_t quantity) {
  BiasTable t;
  t.methods = s.methods;
  t.sigmas = s.sigmas;
  if (s.quantities.empty()) return t;
  if (quantity >= s.quantities.size()) throw InputError("quantity index out of range");
  t.quantity = s.quantities[quantity];
  for (std::size_t si = 0; si < s.sigmas.size(); ++si) {
    std::vector<std::pair<double, double>> row;
    for (std::size_t mi = 0; mi < s.methods.size(); ++mi) {
      const SimCell& c = s.at(mi, si, quantity);
      row.emplace_back(c.B_T, c.B_s);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Defaults to gamma when tracked, else the first parameter.
[[nodiscard]] inline BiasTable compare_bias_table(const SimSummary& s) {
  const bool has_gamma = !s.quantities.empty() && s.quantities.back() == "gamma";
  return compare_bias_table(s, has_gamma ? s.quantities.size() - 1 : 0);
}

[[nodiscard]] inline std::string render_text(const BiasTable& t, int decimals = 3) {
  std::ostringstream os;
  os << "Bias of " << (t.quantity.empty() ? "-" : t.quantity) << ": formula (B_T) vs simulation (B_s)\n";
  os << std::setw(8) << "sigma";
  for (Method m : t.methods) os << " | " << std::setw(21) << std::string(method_name(m));
  os << "\n" << std::setw(8) << "";
  for (std::size_t i = 0; i < t.methods.size(); ++i) os << " | " << std::setw(10) << "B_T" << std::setw(11) << "B_s";
  os << "\n";
  os << std::fixed;
  for (std::size_t si = 0; si < t.rows.size(); ++si) {
    os << std::setw(8) << std::setprecision(3) << t.sigmas[si];
    for (const auto& [bt, bs] : t.rows[si]) {
      os << " | " << std::setw(10) << std::setprecision(decimals) << bt << std::setw(11) << std::setprecision(decimals) << bs;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace propfit
