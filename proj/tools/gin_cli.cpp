#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gin/clicklog.hpp"
#include "gin/cograph.hpp"
#include "gin/ctrmodel.hpp"
#include "gin/error.hpp"
#include "gin/eval.hpp"
#include "gin/syndata.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct SeedOpt {
  std::uint64_t value = 1;
};

void add_seed_option(CLI::App* cmd, SeedOpt& seed) {
  cmd->add_option("--seed", seed.value, "RNG seed (falls back to $GIN_SEED)")
      ->envname("GIN_SEED")
      ->capture_default_str();
}

void add_config_option(CLI::App* cmd) {
  cmd->set_config("--config", "", "key = value config file; flags override it");
  cmd->allow_config_extras(false);
}

struct TrainOpts {
  gin::ctr::TrainConfig cfg;
  std::string aggregator = "gin";
};

void add_model_options(CLI::App* cmd, TrainOpts& o) {
  cmd->add_option("--depth", o.cfg.depth, "diffusion depth K")->capture_default_str();
  cmd->add_option("--neighbors", o.cfg.neighbors, "top-N neighbors per node")->capture_default_str();
  cmd->add_option("--dim", o.cfg.dim, "embedding dimension")->capture_default_str();
  cmd->add_option("--clicks", o.cfg.clicks, "pre-click history length L")->capture_default_str();
  cmd->add_option("--aggregator", o.aggregator, "gin | sumpool-base")->capture_default_str();
}

int run_gen_data(const gin::syndata::SynConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const gin::syndata::SynOutput data = gin::syndata::generate(cfg);
  gin::syndata::write_lines((fs::path(out_dir) / "clicks.tsv").string(), data.clicklog_lines);
  gin::syndata::write_samples((fs::path(out_dir) / "train.tsv").string(), data.train);
  gin::syndata::write_samples((fs::path(out_dir) / "test.tsv").string(), data.test);
  std::cout << "clicklog lines: " << data.clicklog_lines.size() << "\n"
            << "train samples: " << data.train.size() << "\n"
            << "test samples: " << data.test.size() << "\n";
  return 0;
}

int run_build_graph(const std::string& input, const std::string& output, int window,
                    double jaccard, std::int64_t gap_secs, int max_age_days) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw gin::DataError("cannot open click log '" + input + "'");
  auto events = gin::clicklog::parse_click_log(in);
  if (max_age_days > 0) events = gin::clicklog::filter_max_age(events, max_age_days);
  gin::clicklog::sort_events(events);
  const gin::clicklog::SessionConfig scfg{jaccard, gap_secs};
  const auto sessions = gin::clicklog::segment_sessions(events, scfg);
  const auto graph = gin::cograph::build_graph(sessions, window);
  gin::cograph::save_graph_file(graph, output);
  std::cout << "events: " << events.size() << "\nsessions: " << sessions.size()
            << "\nnodes: " << graph.num_nodes() << "\nedges: " << graph.num_edges() << "\n";
  return 0;
}

int run_train(const gin::ctr::TrainConfig& cfg, const std::string& input, const std::string& graph_path,
              const std::string& output) {
  const auto samples = gin::ctr::load_samples_file(input, cfg.clicks);
  const auto graph = gin::cograph::load_graph_file(graph_path);
  gin::ctr::TrainOutput result = gin::ctr::train(samples, graph, cfg);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu loss %.6f (%.2f s)", e + 1, result.epoch_loss[e],
                  result.epoch_seconds[e]);
    std::cout << line << "\n";
  }
  std::cout << "final_train_logloss\t" << fmt17(result.final_train_logloss) << "\n";
  std::cout << "final_train_auc\t" << fmt17(result.final_train_auc) << "\n";
  gin::ctr::save_checkpoint_file(result.params, cfg, output);
  std::cout << "checkpoint written to " << output << "\n";
  return 0;
}

struct EvalChecks {
  std::optional<int> depth, neighbors, dim, clicks;
  std::optional<gin::ctr::Aggregator> aggregator;

  // Explicit eval flags assert properties of the checkpoint.
  void apply(const gin::ctr::TrainConfig& ck) const {
    gin::ctr::TrainConfig want = ck;
    if (depth) want.depth = *depth;
    if (neighbors) want.neighbors = *neighbors;
    if (dim) want.dim = *dim;
    if (clicks) want.clicks = *clicks;
    if (aggregator) want.aggregator = *aggregator;
    gin::ctr::require_compatible(ck, want);
  }
};

int run_eval(const std::vector<std::string>& checkpoints, const std::string& input,
             const std::string& graph_path, const std::string& output, const EvalChecks& checks) {
  std::vector<gin::ctr::Checkpoint> loaded;
  for (const auto& path : checkpoints) {
    loaded.push_back(gin::ctr::load_checkpoint_file(path));
    checks.apply(loaded.back().config);
  }
  for (const auto& ck : loaded)
    if (ck.config.clicks != loaded.front().config.clicks)
      throw gin::DataError("eval: checkpoints disagree on the click length L");

  const auto samples = gin::ctr::load_samples_file(input, loaded.front().config.clicks);
  const auto graph = gin::cograph::load_graph_file(graph_path);

  std::vector<gin::eval::ModelScores> scored;
  std::vector<std::string> used_names;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    std::string name = fs::path(checkpoints[i]).stem().string();
    while (std::find(used_names.begin(), used_names.end(), name) != used_names.end()) name += "+";
    used_names.push_back(name);
    scored.push_back({name, gin::ctr::score_samples(samples, loaded[i].params, graph,
                                                    loaded[i].config)});
  }

  const gin::eval::EvalReport report = gin::eval::bucket_report(samples, scored);
  gin::eval::print_report(report, std::cout);
  if (!output.empty()) {
    std::ofstream out(output, std::ios::binary);
    if (!out) throw gin::DataError("cannot open report '" + output + "' for writing");
    gin::eval::write_report_kv(report, out);
  }
  return 0;
}

int run_gradcheck(const gin::ctr::GradCheckConfig& cfg) {
  const gin::ad::GradCheckReport report = gin::ctr::gradcheck_model(cfg);
  for (const auto& entry : report.per_param)
    std::cout << entry.name << "\tmax_rel_err\t" << fmt17(entry.max_rel_err) << "\n";
  std::cout << "max relative error " << fmt17(report.max_rel_err) << " (tol " << fmt17(cfg.tol)
            << ")\n";
  std::cout << (report.pass ? "PASS" : "FAIL") << "\n";
  return report.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph Intention Network: co-occurrence graph CTR pipeline"};
  app.require_subcommand(1);

  // gen-data
  gin::syndata::SynConfig syn;
  SeedOpt gen_seed;
  std::string gen_out;
  int len_min = syn.session_len_range.first, len_max = syn.session_len_range.second;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic click log and CTR samples");
  add_config_option(gen);
  gen->add_option("--output", gen_out, "output directory (clicks.tsv, train.tsv, test.tsv)")
      ->required();
  gen->add_option("--items", syn.num_items)->capture_default_str();
  gen->add_option("--clusters", syn.num_clusters)->capture_default_str();
  gen->add_option("--users", syn.num_users)->capture_default_str();
  gen->add_option("--sessions-per-user", syn.sessions_per_user)->capture_default_str();
  gen->add_option("--session-len-min", len_min)->capture_default_str();
  gen->add_option("--session-len-max", len_max)->capture_default_str();
  gen->add_option("--bridge-prob", syn.bridge_prob)->capture_default_str();
  gen->add_option("--sparsity-mix", syn.sparsity_mix)->capture_default_str();
  gen->add_option("--ctr-signal", syn.ctr_signal)->capture_default_str();
  gen->add_option("--samples-per-user", syn.samples_per_user)->capture_default_str();
  gen->add_option("--test-user-fraction", syn.test_user_fraction)->capture_default_str();
  add_seed_option(gen, gen_seed);

  // build-graph
  std::string bg_input, bg_output;
  int window = 1, max_age_days = 0;
  double jaccard = 0.3;
  std::int64_t gap_secs = 1800;
  auto* bg = app.add_subcommand("build-graph", "sessionize a click log and build the co-occurrence graph");
  add_config_option(bg);
  bg->add_option("--input", bg_input, "click-log TSV")->required();
  bg->add_option("--output", bg_output, "graph file to write")->required();
  bg->add_option("--window", window, "co-click window size")->capture_default_str();
  bg->add_option("--jaccard", jaccard, "session similarity threshold")->capture_default_str();
  bg->add_option("--session-gap-secs", gap_secs, "session time gap limit")->capture_default_str();
  bg->add_option("--max-age-days", max_age_days, "drop events older than this many days (0 = keep all)")
      ->capture_default_str();

  // train
  TrainOpts tr;
  SeedOpt tr_seed;
  std::string tr_input, tr_graph, tr_output;
  auto* trc = app.add_subcommand("train", "train the CTR model end to end");
  add_config_option(trc);
  trc->add_option("--input", tr_input, "training samples TSV")->required();
  trc->add_option("--graph", tr_graph, "graph file")->required();
  trc->add_option("--output", tr_output, "checkpoint file to write")->required();
  add_model_options(trc, tr);
  trc->add_option("--lr", tr.cfg.lr)->capture_default_str();
  trc->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  trc->add_option("--batch", tr.cfg.batch)->capture_default_str();
  trc->add_option("--threads", tr.cfg.threads)->capture_default_str();
  add_seed_option(trc, tr_seed);

  // eval
  TrainOpts ev;
  std::vector<std::string> ev_checkpoints;
  std::string ev_input, ev_graph, ev_output;
  auto* evc = app.add_subcommand("eval", "score samples with one or more checkpoints");
  add_config_option(evc);
  evc->add_option("--input", ev_input, "samples TSV")->required();
  evc->add_option("--graph", ev_graph, "graph file")->required();
  evc->add_option("--checkpoint", ev_checkpoints, "checkpoint file (repeatable)")
      ->required()
      ->take_all();
  evc->add_option("--output", ev_output, "report file (metric<TAB>value lines)");
  add_model_options(evc, ev);

  // gradcheck
  gin::ctr::GradCheckConfig gc;
  SeedOpt gc_seed;
  gc_seed.value = gc.seed;
  auto* gcc = app.add_subcommand("gradcheck", "finite-difference check of the full loss gradient");
  add_config_option(gcc);
  gcc->add_option("--dim", gc.dim)->capture_default_str();
  gcc->add_option("--depth", gc.depth)->capture_default_str();
  gcc->add_option("--neighbors", gc.neighbors)->capture_default_str();
  gcc->add_option("--batch", gc.batch)->capture_default_str();
  gcc->add_option("--eps", gc.eps)->capture_default_str();
  gcc->add_option("--tol", gc.tol)->capture_default_str();
  add_seed_option(gcc, gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 1;
  }

  try {
    if (gen->parsed()) {
      syn.seed = gen_seed.value;
      syn.session_len_range = {len_min, len_max};
      return run_gen_data(syn, gen_out);
    }
    if (bg->parsed()) return run_build_graph(bg_input, bg_output, window, jaccard, gap_secs, max_age_days);
    if (trc->parsed()) {
      tr.cfg.seed = tr_seed.value;
      tr.cfg.aggregator = gin::ctr::parse_aggregator(tr.aggregator);
      tr.cfg.validate();
      return run_train(tr.cfg, tr_input, tr_graph, tr_output);
    }
    if (evc->parsed()) {
      EvalChecks checks;
      if (evc->count("--depth")) checks.depth = ev.cfg.depth;
      if (evc->count("--neighbors")) checks.neighbors = ev.cfg.neighbors;
      if (evc->count("--dim")) checks.dim = ev.cfg.dim;
      if (evc->count("--clicks")) checks.clicks = ev.cfg.clicks;
      if (evc->count("--aggregator")) checks.aggregator = gin::ctr::parse_aggregator(ev.aggregator);
      return run_eval(ev_checkpoints, ev_input, ev_graph, ev_output, checks);
    }
    if (gcc->parsed()) {
      gc.seed = gc_seed.value;
      return run_gradcheck(gc);
    }
  } catch (const gin::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
