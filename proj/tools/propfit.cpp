// propfit: fit, simulate and self-check proportional-error regression models.
//
// Exit codes: 0 success, 1 check failure, 2 input error, 3 every fit failed.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "propfit/check.hpp"
#include "propfit/io/config.hpp"
#include "propfit/io/csv.hpp"
#include "propfit/io/report.hpp"
#include "propfit/simulation.hpp"

namespace {

using namespace propfit;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kInputError = 2;
constexpr int kAllFitsFailed = 3;

struct CommonFlags {
  std::string config;
  std::vector<std::string> methods;
  std::string mode;
  std::string format;
  std::string out;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + path + "'");
}

// text -> PATH; json -> PATH; both -> text to PATH and JSON to PATH.json.
// Without --out everything goes to stdout.
void emit(io::OutputFormat fmt, const std::string& out, const std::string& text, const io::json& j) {
  const std::string js = j.dump(2) + "\n";
  if (out.empty()) {
    if (fmt != io::OutputFormat::json) std::cout << text;
    if (fmt == io::OutputFormat::both) std::cout << "\n";
    if (fmt != io::OutputFormat::text) std::cout << js;
    return;
  }
  switch (fmt) {
    case io::OutputFormat::text: write_file(out, text); break;
    case io::OutputFormat::json: write_file(out, js); break;
    case io::OutputFormat::both:
      write_file(out, text);
      write_file(out + ".json", js);
      break;
  }
}

io::RunConfig load(const CommonFlags& f) {
  io::RunConfig c = f.config.empty() ? io::RunConfig{} : io::load_config(f.config);
  if (!f.methods.empty()) {
    c.methods.clear();
    for (const auto& m : f.methods) {
      if (m == "all") {
        c.methods.assign(kAllMethods.begin(), kAllMethods.end());
      } else {
        c.methods.push_back(parse_method(m));
      }
    }
  }
  if (!f.mode.empty()) c.fit_mode = io::parse_sigma_mode(f.mode);
  if (!f.format.empty()) c.format = io::parse_format(f.format);
  if (!f.out.empty()) c.output_path = f.out;
  return c;
}

int cmd_fit(const CommonFlags& flags, const std::string& data_path, const std::string& model_flag) {
  io::RunConfig c = load(flags);
  if (!model_flag.empty()) c.model = model_flag;
  const io::InputTable table = io::read_csv_file(data_path);
  const auto labels = table.labels();
  if (labels.size() > 2) throw InputError("at most two curves are supported (found " + std::to_string(labels.size()) + ")");

  io::FitRequest req(ModelRegistry::builtin().make(c.model, -1, c.model_options));
  req.labels = labels;
  req.curves = table.curves();
  req.methods = c.methods;
  req.sigma_mode = c.fit_mode;
  req.fit = c.fit;
  req.gamma_bracket = c.gamma_bracket;
  req.want_gamma = c.model == "saturating_exponential" || c.gamma_bracket.has_value();

  const io::FitReport rep = io::build_fit_report(req);
  emit(c.format, c.output_path, io::render_text(rep), io::to_json(rep));
  if (!rep.any_converged()) {
    std::cerr << "propfit: no method converged\n";
    return kAllFitsFailed;
  }
  return kOk;
}

int cmd_simulate(const CommonFlags& flags, std::optional<std::uint64_t> seed, std::optional<int> replicates,
                 int threads) {
  io::RunConfig c = load(flags);
  if (!c.simulation) c.simulation = io::SimulationConfig{};
  if (seed) c.simulation->seed = *seed;
  if (replicates) c.simulation->replicates = *replicates;
  const SimDesign design = io::design_from_config(c);
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const SimSummary s = io::rounded(run_study(design, threads));
  emit(c.format, c.output_path, io::render_text(s), io::to_json(s));
  return kOk;
}

int cmd_check(const CommonFlags& flags, bool inject) {
  const io::OutputFormat fmt = flags.format.empty() ? io::OutputFormat::text : io::parse_format(flags.format);
  CheckOptions opts;
  opts.inject_wrong_gradient = inject;
  const auto items = run_checks(opts);
  std::string text;
  io::json arr = io::json::array();
  char buf[512];
  for (const auto& i : items) {
    std::snprintf(buf, sizeof buf, "%s  %-52s measured=%.3e  threshold=%.1e%s%s\n", i.passed ? "PASS" : "FAIL",
                  i.name.c_str(), i.measured, i.threshold, i.detail.empty() ? "" : "  ", i.detail.c_str());
    text += buf;
    arr.push_back({{"name", i.name},
                   {"passed", i.passed},
                   {"measured", io::number(i.measured)},
                   {"threshold", io::number(i.threshold)},
                   {"detail", i.detail}});
  }
  const bool ok = all_passed(items);
  text += ok ? "all checks passed\n" : "some checks FAILED\n";
  emit(fmt, flags.out, text, io::json{{"kind", "check"}, {"passed", ok}, {"checks", arr}});
  return ok ? kOk : kCheckFailed;
}

void add_common(CLI::App* sub, CommonFlags& f, bool with_config = true) {
  if (with_config) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--method", f.methods, "ml, ql, wls, dwls or all (repeatable, comma separated)")
        ->delimiter(',')
        ->check(CLI::IsMember({"ml", "ql", "wls", "dwls", "all"}, CLI::ignore_case));
    sub->add_option("--mode", f.mode, "two-curve sigma handling")->check(CLI::IsMember({"separate", "common-sigma"}));
  }
  sub->add_option("--format", f.format, "text, json or both")->check(CLI::IsMember({"text", "json", "both"}));
  sub->add_option("--out", f.out, "output path (both: text to PATH, JSON to PATH.json)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimation, small-sigma bias formulae and simulation for proportional-error regression"};
  app.require_subcommand(1);

  CommonFlags fit_flags;
  std::string data_path;
  std::string model_flag;
  auto* fit_cmd = app.add_subcommand("fit", "fit the requested methods to CSV data and report bias and std. errors");
  add_common(fit_cmd, fit_flags);
  fit_cmd->add_option("--data", data_path, "CSV with columns [curve,]x,y")->required();
  fit_cmd->add_option("--model", model_flag, "model name (overrides the config)");

  CommonFlags sim_flags;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  int threads = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo bias study against the formula biases");
  add_common(sim_cmd, sim_flags);
  sim_cmd->add_option("--seed", seed, "master seed");
  sim_cmd->add_option("--replicates", replicates, "replicates per sigma")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--threads", threads, "worker threads (0 = all cores)")
      ->envname("PROPFIT_THREADS")
      ->check(CLI::NonNegativeNumber);

  CommonFlags check_flags;
  bool inject = false;
  auto* check_cmd = app.add_subcommand("check", "run the invariant and derivative self-checks");
  add_common(check_cmd, check_flags, false);
  check_cmd->add_flag("--inject-wrong-gradient", inject, "negative control")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit_flags, data_path, model_flag);
    if (sim_cmd->parsed()) return cmd_simulate(sim_flags, seed, replicates, threads);
    return cmd_check(check_flags, inject);
  } catch (const Error& e) {
    std::cerr << "propfit: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "propfit: " << e.what() << "\n";
    return kInputError;
  }
}
