// fdtlab command-line driver: one JSON config in, a JSON report and CSV files out.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdtlab/cli/config.hpp"
#include "fdtlab/cli/run.hpp"
#include "fdtlab/parallel.hpp"
#include "fdtlab/version.hpp"

namespace {

using fdtlab::cli::json;

int fail(int code, const std::string& kind, const std::string& msg) {
  std::cerr << "fdtlab: " << kind << ": " << msg << "\n";
  return code;
}

int run_main(const std::string& config_path, const std::optional<std::string>& output,
             const std::optional<std::uint64_t>& seed) {
  using namespace fdtlab;
  using namespace fdtlab::cli;

  std::ifstream in(config_path);
  if (!in) return fail(exit_config, "config error", "cannot read '" + config_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    return fail(exit_config, "config error", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) return fail(exit_config, "config error", "the config document must be a JSON object");
  if (seed) doc["master_seed"] = *seed;

  try {
    RunConfig cfg = load_config(doc);
    if (output) {
      cfg.output = *output;
      cfg.resolved["output"] = *output;
    }
    const std::string prefix = cfg.output.empty() ? default_prefix(cfg.command) : cfg.output;
    const auto started = std::chrono::system_clock::now();
    RunResult res = run(cfg, prefix);
    // Not content-hashable: depends on the machine and the clock.
    res.report["run"] = {{"workers", worker_count()},
                         {"started_unix", std::chrono::duration_cast<std::chrono::seconds>(started.time_since_epoch()).count()},
                         {"elapsed_seconds", std::chrono::duration<double>(std::chrono::system_clock::now() - started).count()}};
    res.artifacts.add(".json", report_text(res.report));
    res.artifacts.commit();
    for (const auto& f : res.artifacts.files()) std::cout << f.first << "\n";
    if (res.exit_code == exit_assumption) std::cerr << "fdtlab: assumption check failed (see report)\n";
    return res.exit_code;
  } catch (const ConfigError& e) {
    return fail(exit_config, "config error", e.what());
  } catch (const UnsupportedMethodError& e) {
    return fail(exit_config, "unsupported method", e.what());
  } catch (const AssumptionError& e) {
    return fail(exit_assumption, "assumption failed", e.what());
  } catch (const DivergenceError& e) {
    std::ostringstream msg;
    msg << e.what() << " (stream " << e.stream() << ", step " << e.step() << ", last finite state ["
        << e.last_finite_state().transpose() << "])";
    return fail(exit_divergence, "divergence", msg.str());
  } catch (const NumericError& e) {
    return fail(exit_divergence, "numeric failure", e.what());
  } catch (const std::exception& e) {
    return fail(exit_config, "error", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fdtlab: linear response laboratory"};
  app.set_version_flag("--version", std::string(fdtlab::version));
  std::string config_path;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  app.add_option("-c,--config", config_path, "JSON config document")->required();
  app.add_option("-o,--output", output, "output path prefix (overrides the document)");
  app.add_option("-s,--seed", seed, "master seed (overrides the document)");
  app.add_option("-t,--threads", threads, "worker threads (default: FDTLAB_THREADS, then hardware)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : fdtlab::cli::exit_config;
  }
  if (threads > 0) fdtlab::set_worker_count(threads);
  return run_main(config_path, output, seed);
}
