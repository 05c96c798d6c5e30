//! `cate` command-line front end.
//!
//!   cate simulate <config.toml> [--output-dir DIR] [--threads N]
//!   cate estimate <config.toml> [--output-dir DIR]
//!   cate kernel-check --order S [--family gaussian|compact] [--dim D]
//!   cate sample --model M --n N [--seed S] --output FILE

#include "cate/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int
main(int argc, char** argv)
{
  using namespace cate::cli;

  CLI::App app{ "Conditional average treatment effect estimation and simulation" };
  app.require_subcommand(1);

  std::string sim_config;
  std::string sim_out;
  unsigned sim_threads = 0;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study of a built-in model");
  sim->add_option("config", sim_config, "TOML file with a [simulate] section")->required()->check(CLI::ExistingFile);
  auto* sim_out_opt = sim->add_option("--output-dir", sim_out, "Directory for report files");
  auto* sim_threads_opt = sim->add_option("--threads", sim_threads, "Worker threads (0 = all cores)");

  std::string est_config;
  std::string est_out;
  auto* est = app.add_subcommand("estimate", "CATE curves from a CSV data file");
  est->add_option("config", est_config, "TOML file with an [estimate] section")->required()->check(CLI::ExistingFile);
  auto* est_out_opt = est->add_option("--output-dir", est_out, "Directory for curve files");

  KernelCheckJob kc;
  std::string family = "gaussian";
  auto* check = app.add_subcommand("kernel-check", "Verify the moments of a kernel by quadrature");
  check->add_option("--order", kc.order, "Kernel order (positive even integer)")->required();
  check->add_option("--family", family, "gaussian or compact")
    ->check(CLI::IsMember({ "gaussian", "compact" }));
  check->add_option("--dim", kc.dim, "Product-kernel dimension");

  SampleJob sj;
  std::string sample_out;
  auto* sample = app.add_subcommand("sample", "Write one draw of a built-in model as CSV");
  sample->add_option("--model", sj.model, "Model 1, 2 or 3")->required();
  sample->add_option("--n", sj.n, "Sample size")->required();
  sample->add_option("--seed", sj.seed, "Random seed");
  sample->add_option("--output", sample_out, "CSV file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_line("usage", kConfigError, e.what()) << '\n';
    return kConfigError;
  }

  if (*sim) {
    Overrides o;
    if (*sim_out_opt)
      o.output_dir = sim_out;
    if (*sim_threads_opt)
      o.threads = sim_threads;
    return cmd_simulate(sim_config, std::cout, std::cerr, o);
  }
  if (*est) {
    Overrides o;
    if (*est_out_opt)
      o.output_dir = est_out;
    return cmd_estimate(est_config, std::cout, std::cerr, o);
  }
  if (*sample) {
    sj.output = sample_out;
    return cmd_sample(sj, std::cout, std::cerr);
  }
  kc.family = family == "compact" ? cate::KernelFamily::compact : cate::KernelFamily::gaussian;
  return cmd_kernel_check(kc, std::cout, std::cerr);
}
