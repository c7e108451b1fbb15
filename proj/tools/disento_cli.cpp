#include <CLI11.hpp>
#include <iostream>

#include "disento/pipeline.hpp"

using namespace disento;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string output;
  std::string task;
  std::string learner;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("-c,--config", a.config, "experiment config (key = value lines)");
  cmd->add_option("-s,--set", a.sets, "override a config key, e.g. --set gcn.tau=0.9")->take_all();
  cmd->add_option("-o,--output", a.output, "output directory");
  cmd->add_option("--task", a.task, "imgc or kgc");
  cmd->add_option("--learner", a.learner, "gcn or gan");
  cmd->add_option("--seed", a.seed, "root seed");
}

ExperimentConfig build_config(const CommonArgs& a) {
  ConfigFile cf;
  if (!a.config.empty()) cf = load_config_file(a.config);
  ExperimentConfig c;
  for (const auto& [k, v] : cf.entries) set_config_value(c, k, v, cf.base_dir);
  const auto cwd = fs::current_path();
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    set_config_value(c, std::string(trim(s.substr(0, eq))), std::string(trim(s.substr(eq + 1))), cwd);
  }
  if (!a.task.empty()) set_config_value(c, "task", a.task);
  if (!a.learner.empty()) set_config_value(c, "learner", a.learner);
  if (!a.output.empty()) set_config_value(c, "output", a.output, cwd);
  if (a.seed) c.seed = *a.seed;
  validate(c);
  return c;
}

void print_metrics(const MetricsRecord& m) {
  for (const auto& [k, v] : m.values) std::cout << k << " = " << format_double(v) << '\n';
}

void print_warnings(const std::vector<std::string>& w) {
  for (const auto& s : w) std::cerr << "warning: " << s << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"disentangled ontology embeddings for zero-shot learning"};
  app.require_subcommand(1);

  CommonArgs a;
  std::vector<std::string> grid;
  std::size_t neighbors = 2;
  bool echo = false;

  auto* ingest = app.add_subcommand("ingest", "parse and validate ontology, split and features");
  auto* synth = app.add_subcommand("synth-data", "write a synthetic benchmark and its dataset.cfg");
  auto* enc = app.add_subcommand("train-encoder", "train the disentangled ontology encoder");
  auto* gan = app.add_subcommand("train-gan", "train the conditional feature generator");
  auto* gcn = app.add_subcommand("train-gcn", "train the multi-graph GCN classifier propagator");
  auto* eval = app.add_subcommand("evaluate", "score the trained learner on the test split");
  auto* sweep = app.add_subcommand("sweep", "run the full pipeline over a parameter grid");
  auto* cs = app.add_subcommand("export-case-study", "export 2-D coordinates and neighbors per component");
  auto* run = app.add_subcommand("run", "train-encoder, train the learner, evaluate");
  for (auto* cmd : {ingest, synth, enc, gan, gcn, eval, sweep, cs, run}) {
    add_common(cmd, a);
    cmd->add_flag("--echo-config", echo, "print the effective config before running");
  }
  sweep->add_option("-g,--grid", grid, "grid axis key=v1,v2,... (repeatable)")->take_all();
  cs->add_option("--neighbors", neighbors, "nearest neighbors listed per class");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string stage = cmd->get_name();
  try {
    ExperimentConfig c;
    try {
      c = build_config(a);
    } catch (const std::exception& e) {
      throw StageError("config", e.what());
    }
    if (echo) std::cout << config_echo(c);

    if (cmd == ingest) {
      const auto s = stage_ingest(c);
      print_warnings(s.warnings);
      std::cout << "concepts = " << s.concepts << "\nproperties = " << s.properties << "\ntriples = " << s.triples
                << "\nseen = " << s.seen << "\nunseen = " << s.unseen << '\n';
    } else if (cmd == synth) {
      run_stage("synth-data", [&] {
        write_synthetic_dataset(make_synthetic_dataset(c), c.output);
        std::cout << "wrote " << (fs::path(c.output) / "dataset.cfg").string() << '\n';
        return 0;
      });
    } else if (cmd == enc) {
      const auto t = stage_train_encoder(c);
      std::cout << "embedded " << t.size() << " concepts, " << t.num_components() << " components of size " << t.dim
                << '\n';
    } else if (cmd == gan) {
      const auto m = stage_train_gan(c);
      std::cout << "final loss_d = " << format_double(m.history.loss_d.back())
                << "\nfinal loss_g = " << format_double(m.history.loss_g.back()) << '\n';
    } else if (cmd == gcn) {
      const auto r = stage_train_gcn(c);
      std::cout << "final loss = " << format_double(r.loss_history.back()) << '\n';
    } else if (cmd == eval) {
      const auto ev = stage_evaluate(c);
      print_warnings(ev.warnings);
      print_metrics(ev.metrics);
    } else if (cmd == run) {
      const auto r = run_experiment(c);
      print_warnings(r.evaluation.warnings);
      print_metrics(r.evaluation.metrics);
    } else if (cmd == sweep) {
      const auto cells = run_stage("sweep", [&] {
        std::vector<GridAxis> axes;
        for (const auto& g : grid) axes.push_back(parse_grid_axis(g));
        return run_sweep(c, axes);
      });
      std::size_t failed = 0;
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i].status != "ok") {
          ++failed;
          std::cerr << "cell " << i << ": " << cells[i].status << '\n';
        }
      std::cout << cells.size() - failed << "/" << cells.size() << " cells ok; see "
                << (fs::path(c.output) / "sweep.csv").string() << '\n';
      if (failed == cells.size()) throw StageError("sweep", "every cell failed");
    } else if (cmd == cs) {
      const auto r = stage_export_case_study(c, neighbors);
      if (r.report)
        for (std::size_t k = 0; k < r.report->purity.size(); ++k)
          for (std::size_t l = 0; l < r.report->purity[k].size(); ++l)
            std::cout << "component " << k << " purity vs aspect " << l << " labels = "
                      << format_double(r.report->purity[k][l]) << " (chance " << format_double(r.report->chance[l])
                      << ")\n";
    }
  } catch (const StageError& e) {
    std::cerr << "error " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "] " << e.what() << '\n';
    return 2;
  }
  return 0;
}
