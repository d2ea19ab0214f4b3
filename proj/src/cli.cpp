#include "treelcm/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "treelcm/bundle.hpp"
#include "treelcm/chain_io.hpp"
#include "treelcm/error.hpp"
#include "treelcm/posterior_summary.hpp"
#include "treelcm/report.hpp"
#include "treelcm/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace treelcm {

namespace {

struct SimulateArgs {
  std::string params;
  int rows = 496;
  std::uint64_t seed = 1;
  std::uint64_t seed_response = 1;
  std::string out = ".";
};

struct FitArgs {
  std::string data;
  std::string grouping;
  int K = 2;
  int total_iters = 100;
  std::uint64_t seed = 1;
  int chains = 1;
  bool fix_c = false;
  double initial_c = 1.0;
  std::string initial_tree;
  std::string out = ".";
};

struct SummarizeArgs {
  std::string chain;
  int burnin = 0;
  bool relabel = true;
  double level = 0.95;
  bool quiet = false;
  std::string out;
};

struct ReportArgs {
  std::string summary;
  std::string item_names;
  std::string plot_option = "all";
  std::string out = ".";
};

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("io", "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string join_dims(int rows, int cols) { return std::to_string(rows) + " x " + std::to_string(cols); }

void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  if (a.rows < 1) throw Error("invalid_argument", "N must be at least 1");
  const ParameterBundle b = bundle_from_json(read_json(a.params));
  const auto sim = simulate_lcm_given_tree(b.tree, a.rows, b.class_probability, b.catalog.grouping, b.sigma_by_group,
                                           b.root_location, a.seed, a.seed_response, b.catalog.item_labels);
  const fs::path dir(a.out);
  make_dir(dir);
  write_responses_csv(dir / "responses.csv", sim.responses);
  write_text(dir / "tree.nwk", to_newick(sim.tree) + "\n");
  write_json(dir / "grouping.json", catalog_to_json(b.catalog));

  json theta = json::array();
  for (int k = 0; k < sim.theta.rows(); ++k) {
    std::vector<double> row(sim.theta.cols());
    for (int j = 0; j < sim.theta.cols(); ++j) row[j] = sim.theta(k, j);
    theta.push_back(row);
  }
  std::vector<int> z(sim.memberships);
  for (int& k : z) ++k;
  json truth{{"schema_version", kSchemaVersion},
             {"tree", to_newick(sim.tree)},
             {"class_probability", std::vector<double>(sim.pi.data(), sim.pi.data() + sim.pi.size())},
             {"item_response_probability", theta},
             {"memberships", z},
             {"seed_parameter", a.seed},
             {"seed_response", a.seed_response}};
  write_json(dir / "truth.json", truth);
  out << "Simulated " << join_dims(sim.responses.rows(), sim.responses.cols()) << " responses for "
      << sim.tree.leaf_count() << " latent classes in " << b.catalog.grouping.group_count() << " major groups\n";
}

void cmd_fit(const FitArgs& a, std::ostream& out) {
  if (a.chains < 1) throw Error("invalid_argument", "--chains must be at least 1");
  const ResponseMatrix data = read_responses_csv(a.data);
  const ItemCatalog catalog =
      a.grouping.empty() ? single_group_catalog(data.item_labels()) : catalog_from_json(read_json(a.grouping));
  if (catalog.item_count() != data.cols())
    throw Error("dimension_mismatch", "grouping lists " + std::to_string(catalog.item_count()) + " items but data has " +
                                          std::to_string(data.cols()));
  if (catalog.item_labels != data.item_labels())
    throw Error("dimension_mismatch", "grouping item labels differ from the data header");

  SamplerConfig config;
  config.K = a.K;
  config.total_iters = a.total_iters;
  config.fix_c = a.fix_c;
  config.initial_c = a.initial_c;
  if (!a.initial_tree.empty()) config.initial_tree = parse_newick(read_text(a.initial_tree));
  if (a.K > data.rows())
    throw Error("invalid_argument", "K = " + std::to_string(a.K) + " latent classes exceeds the " +
                                        std::to_string(data.rows()) + " observations");
  validate(config);

  const fs::path dir(a.out);
  make_dir(dir);
  auto run_one = [&](std::uint64_t seed, const fs::path& where) {
    SamplerConfig c = config;
    c.seed = seed;
    PosteriorChain chain = ddtlcm_fit(data, catalog.grouping, c, nullptr);
    chain.meta.group_names = catalog.group_names;
    make_dir(where);
    write_chain(where, chain);
  };

  if (a.chains == 1) {
    run_one(a.seed, dir);
  } else {
    unsigned cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TREELCM_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) cap = static_cast<unsigned>(v);
    }
    std::vector<std::exception_ptr> failures(a.chains);
    for (int start = 0; start < a.chains; start += static_cast<int>(cap)) {
      std::vector<std::thread> workers;
      for (int i = start; i < std::min(a.chains, start + static_cast<int>(cap)); ++i)
        workers.emplace_back([&, i] {
          try {
            run_one(derive_seed(a.seed, static_cast<std::uint64_t>(i) + 1),
                    dir / ("chain_" + std::to_string(i + 1)));
          } catch (...) {
            failures[i] = std::current_exception();
          }
        });
      for (auto& w : workers) w.join();
    }
    for (auto& f : failures)
      if (f) std::rethrow_exception(f);
  }
  out << run_header(a.K, data.rows(), data.cols(), catalog.grouping.group_count(), a.total_iters) << '\n';
}

void cmd_summarize(const SummarizeArgs& a, std::ostream& out) {
  const PosteriorChain chain = read_chain(a.chain);
  SummaryConfig config;
  config.burnin = a.burnin;
  config.relabel = a.relabel;
  config.level = a.level;
  config.quiet = a.quiet;
  const PosteriorSummary summary = summarize(chain, config);
  const fs::path dir = a.out.empty() ? fs::path(a.chain) : fs::path(a.out);
  make_dir(dir);
  write_json(dir / "summary.json", summary_to_json(summary));
  write_text(dir / "map_tree.nwk", summary.map_tree + "\n");
  if (!config.quiet) out << format_summary(summary);
  out << "Summarized " << summary.retained << " retained iterations into " << (dir / "summary.json").string() << '\n';
}

std::vector<std::string> read_item_names(const fs::path& path) {
  if (path.extension() == ".json") {
    const json j = read_json(path);
    if (j.is_array()) return j.get<std::vector<std::string>>();
    return catalog_from_json(j).item_labels;
  }
  std::vector<std::string> names;
  std::istringstream is(read_text(path));
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

void cmd_report(const ReportArgs& a, std::ostream& out) {
  const PlotOption option = parse_plot_option(a.plot_option);
  PosteriorSummary summary = summary_from_json(read_json(a.summary));
  if (!a.item_names.empty()) {
    auto names = read_item_names(a.item_names);
    if (static_cast<int>(names.size()) != summary.J)
      throw Error("dimension_mismatch", "item names file lists " + std::to_string(names.size()) + " names, summary has " +
                                            std::to_string(summary.J) + " items");
    summary.item_labels = std::move(names);
  }
  const json plot = build_plot_data(summary, option);
  const fs::path dir(a.out);
  make_dir(dir);
  write_json(dir / "plot_data.json", plot);
  write_text(dir / "report.svg", render_svg(plot));
  out << "Wrote " << (dir / "report.svg").string() << " and " << (dir / "plot_data.json").string() << '\n';
}

int exit_code_for(const std::string& code) {
  if (code == "usage") return kExitUsage;
  if (code == "io" || code == "schema" || code == "input" || code == "non_binary" || code == "newick_syntax" ||
      code == "invalid_tree" || code == "dimension_mismatch" || code == "invalid_argument" || code == "unknown_leaf")
    return kExitInput;
  return kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian latent class models with a tree-structured prior over classes", "treelcm"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate responses from a parameter bundle");
  simulate->add_option("--params", sim.params, "Parameter bundle JSON")->required();
  simulate->add_option("-N,--rows", sim.rows, "Number of observations");
  simulate->add_option("--seed", sim.seed, "Seed for the node locations");
  simulate->add_option("--seed-response", sim.seed_response, "Seed for memberships and responses");
  simulate->add_option("--out", sim.out, "Output directory");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run the Gibbs sampler");
  fit_cmd->add_option("--data", fit.data, "Response CSV")->required();
  fit_cmd->add_option("--grouping", fit.grouping, "Item grouping JSON (default: one group)");
  fit_cmd->add_option("-K", fit.K, "Number of latent classes")->required();
  fit_cmd->add_option("--total-iters", fit.total_iters, "Iterations");
  fit_cmd->add_option("--seed", fit.seed, "Random seed");
  fit_cmd->add_option("--chains", fit.chains, "Independent chains (written to chain_<i>/)");
  fit_cmd->add_flag("--fix-c", fit.fix_c, "Hold the divergence parameter at --initial-c");
  fit_cmd->add_option("--initial-c", fit.initial_c, "Starting divergence parameter");
  fit_cmd->add_option("--initial-tree", fit.initial_tree, "Newick file with the starting tree");
  fit_cmd->add_option("--out", fit.out, "Output directory");

  SummarizeArgs sum;
  auto* summarize_cmd = app.add_subcommand("summarize", "Summarize a posterior chain");
  summarize_cmd->add_option("--chain", sum.chain, "Chain directory")->required();
  summarize_cmd->add_option("--burnin", sum.burnin, "Iterations to discard");
  summarize_cmd->add_flag("--relabel,!--no-relabel", sum.relabel, "ECR relabeling (default on)");
  summarize_cmd->add_option("--level", sum.level, "Credible level");
  summarize_cmd->add_flag("--quiet", sum.quiet, "Suppress the console report");
  summarize_cmd->add_option("--out", sum.out, "Output directory (default: chain directory)");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Export the MAP tree and class profiles");
  report_cmd->add_option("--summary", rep.summary, "summary.json")->required();
  report_cmd->add_option("--item-names", rep.item_names, "Item names: one per line, or JSON");
  report_cmd->add_option("--plot-option", rep.plot_option, "all, tree or profile");
  report_cmd->add_option("--out", rep.out, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) cmd_simulate(sim, out);
    if (fit_cmd->parsed()) cmd_fit(fit, out);
    if (summarize_cmd->parsed()) cmd_summarize(sum, out);
    if (report_cmd->parsed()) cmd_report(rep, out);
  } catch (const Error& e) {
    err << "error[" << e.code() << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace treelcm
