#include <cklab/experiments.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace cklab;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

// "family:k=v,..." or "@file.json"
SupportPattern load_pattern(const std::string& arg) {
  if (!arg.empty() && arg.front() == '@') {
    try {
      return read_json_file(arg.substr(1)).get<SupportPattern>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("pattern file: ") + e.what());
    }
  }
  return make_pattern(arg);
}

// "" is the trivial group, otherwise comma-separated exponents such as "2,1".
PGroup parse_group(std::uint64_t p, const std::string& parts) {
  std::vector<int> out;
  std::stringstream ss(parts);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ValidationError("group parts must be integers: " + parts);
    }
  }
  return PGroup(p, out);
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

void emit_report(const McReport& r, bool csv) {
  if (csv) std::cout << to_csv(r);
  else emit(to_json_value(r));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cokernels of random matrices over Z/p^e with fixed zero entries"};
  app.require_subcommand(1);
  std::function<void()> action;

  // pattern
  auto* pattern = app.add_subcommand("pattern", "Generate or validate support patterns");
  pattern->require_subcommand(1);
  std::string pat_spec, pat_file;
  std::uint64_t pat_p = 2;
  auto* pgen = pattern->add_subcommand("gen", "Build a pattern from a family spec");
  pgen->add_option("spec", pat_spec, "family:key=value,... (families: full, diagonal, block, stairs-unit, ...)")->required();
  pgen->add_option("--p", pat_p, "prime used for the log_p gauge");
  pgen->callback([&] {
    action = [&] {
      const auto s = make_pattern(pat_spec);
      emit({{"pattern", s}, {"report", validate(s, pat_p)}});
    };
  });
  auto* pval = pattern->add_subcommand("validate", "Check a JSON pattern file");
  pval->add_option("file", pat_file, "pattern JSON")->required();
  pval->add_option("--p", pat_p, "prime used for the log_p gauge");
  pval->callback([&] {
    action = [&] {
      const auto rep = validate(load_pattern("@" + pat_file), pat_p);
      emit(rep);
      if (!rep.valid) throw ValidationError("pattern has empty columns or uncovered rows");
    };
  });

  // moment
  auto* moment = app.add_subcommand("moment", "Exact Z/p^e moments of patterned Haar matrices");
  moment->require_subcommand(1);
  std::string mom_pattern, mom_parts = "1";
  std::uint64_t mom_p = 2, mom_cap = kBruteForceCap;
  unsigned mom_threads = 0;
  auto* mexact = moment->add_subcommand("exact", "E_n(G) by enumeration, split into d_n0 and the residual");
  mexact->add_option("--pattern", mom_pattern, "pattern spec or @file.json")->required();
  mexact->add_option("--p", mom_p, "prime");
  mexact->add_option("--group", mom_parts, "exponents of G, e.g. 1 or 2,1");
  mexact->add_option("--cap", mom_cap, "maximum number of maps to enumerate");
  mexact->add_option("--threads", mom_threads, "worker threads (0: CKLAB_THREADS or hardware)");
  mexact->callback([&] {
    action = [&] {
      const auto s = d_split(load_pattern(mom_pattern), parse_group(mom_p, mom_parts), mom_cap, mom_threads);
      emit({{"moment", to_string(s.moment)}, {"d_n0", to_string(s.d_n0)}, {"residual", to_string(s.residual)}});
    };
  });
  auto* mbound = moment->add_subcommand("bound", "1 + c(G_Sigma), an upper bound for the Z/p moment");
  mbound->add_option("--pattern", mom_pattern, "pattern spec or @file.json")->required();
  mbound->add_option("--p", mom_p, "prime");
  mbound->callback([&] {
    action = [&] {
      const auto b = moment_upper_bound_exact(load_pattern(mom_pattern), mom_p);
      emit({{"bound", to_string(b)}, {"value", to_double(b)}});
    };
  });

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo estimates");
  sim->require_subcommand(1);
  std::string sim_pattern = "full:n=20", sim_dist = "haar";
  std::vector<std::string> sim_targets;
  std::string sim_group = "1";
  std::uint64_t sim_p = 2;
  int sim_e = 4;
  std::size_t sim_n = 20, sim_r = 1;
  McOptions sim_opt{10000, 1, 0};
  bool sim_csv = false;
  auto common = [&](CLI::App* c) {
    c->add_option("--p", sim_p, "prime");
    c->add_option("--trials", sim_opt.trials, "number of trials");
    c->add_option("--seed", sim_opt.seed, "master seed");
    c->add_option("--threads", sim_opt.threads, "worker threads (0: CKLAB_THREADS or hardware)");
    c->add_flag("--csv", sim_csv, "emit CSV instead of JSON");
  };
  auto* scok = sim->add_subcommand("cokernel", "Cokernel type frequencies against Cohen-Lenstra");
  common(scok);
  scok->add_option("--pattern", sim_pattern, "pattern spec or @file.json");
  scok->add_option("--dist", sim_dist, "haar | rademacher | pmf:v=p,... | pmf:file.json");
  scok->add_option("--e", sim_e, "working precision");
  scok->add_option("--target", sim_targets, "target group exponents, repeatable; '' is the trivial group");
  scok->callback([&] {
    action = [&] {
      std::vector<PGroup> targets;
      for (const auto& t : sim_targets) targets.push_back(parse_group(sim_p, t));
      if (targets.empty()) targets = {PGroup::trivial(sim_p), PGroup::cyclic(sim_p, 1)};
      emit_report(mc_cokernel_dist(load_pattern(sim_pattern), parse_distribution(sim_dist), sim_p, sim_e, targets, sim_opt),
                  sim_csv);
    };
  });
  auto* scor = sim->add_subcommand("corank", "Corank of a Haar n x n matrix over F_p");
  common(scor);
  scor->add_option("--n", sim_n, "matrix size");
  scor->callback([&] { action = [&] { emit_report(mc_corank_dist(sim_n, sim_p, sim_opt), sim_csv); }; });
  auto* smom = sim->add_subcommand("moment", "Sample mean of #Sur(cok, G)");
  common(smom);
  smom->add_option("--pattern", sim_pattern, "pattern spec or @file.json");
  smom->add_option("--dist", sim_dist, "entry distribution");
  smom->add_option("--group", sim_group, "exponents of G");
  smom->callback([&] {
    action = [&] {
      emit_report(mc_moment(load_pattern(sim_pattern), parse_distribution(sim_dist), sim_p, parse_group(sim_p, sim_group),
                            sim_opt),
                  sim_csv);
    };
  });
  auto* sfull = sim->add_subcommand("fullrank", "Full-rank probability of a random n x r matrix over F_p");
  common(sfull);
  sfull->add_option("--n", sim_n, "rows");
  sfull->add_option("--r", sim_r, "columns");
  sfull->callback([&] { action = [&] { emit_report(mc_full_rank_prob(sim_n, sim_r, sim_p, sim_opt), sim_csv); }; });

  // expander
  auto* exp = app.add_subcommand("expander", "Configuration-model bipartite multigraphs and the c functional");
  exp->require_subcommand(1);
  std::size_t ex_n = 12, ex_d = 8, ex_samples = 2000;
  std::uint64_t ex_p = 2, ex_seed = 1;
  double ex_delta = 0.5;
  std::string ex_file;
  McOptions ex_opt{200, 1, 0};
  auto* esample = exp->add_subcommand("sample", "Sample a d-regular bipartite multigraph");
  esample->add_option("--n", ex_n, "vertices per side");
  esample->add_option("--d", ex_d, "degree");
  esample->add_option("--seed", ex_seed, "seed");
  esample->callback([&] { action = [&] { emit(project(sample_configuration(ex_n, ex_d, ex_seed))); }; });
  auto* ec = exp->add_subcommand("c", "Exact c(G) of a graph file");
  ec->add_option("file", ex_file, "graph JSON")->required();
  ec->add_option("--p", ex_p, "prime");
  ec->callback([&] {
    action = [&] {
      const auto g = read_json_file(ex_file).get<BipartiteMultigraph>();
      const auto c = c_value_exact(g, ex_p);
      emit({{"c", to_string(c)}, {"value", to_double(c)}, {"duality", duality_check(g)}});
    };
  });
  auto* eprof = exp->add_subcommand("profile", "Minimum neighbourhood sizes per subset size");
  eprof->add_option("file", ex_file, "graph JSON")->required();
  eprof->add_option("--p", ex_p, "prime");
  eprof->add_option("--samples", ex_samples, "random subsets per size when n > 20");
  eprof->add_option("--seed", ex_seed, "seed");
  eprof->callback([&] {
    action = [&] {
      emit(to_json_value(expansion_profile(read_json_file(ex_file).get<BipartiteMultigraph>(), ex_p, ex_samples, ex_seed)));
    };
  });
  auto* emc = exp->add_subcommand("mc", "Empirical P(c < delta)");
  emc->add_option("--n", ex_n, "vertices per side");
  emc->add_option("--d", ex_d, "degree");
  emc->add_option("--p", ex_p, "prime");
  emc->add_option("--delta", ex_delta, "threshold");
  emc->add_option("--trials", ex_opt.trials, "graphs to sample");
  emc->add_option("--seed", ex_opt.seed, "master seed");
  emc->add_option("--threads", ex_opt.threads, "worker threads");
  emc->callback([&] { action = [&] { emit(to_json_value(mc_c_distribution(ex_n, ex_d, ex_p, ex_delta, ex_opt))); }; });

  // experiment
  auto* ex = app.add_subcommand("experiment", "Named experiments");
  ex->require_subcommand(1);
  auto* elist = ex->add_subcommand("list", "Print the catalog");
  elist->callback([&] { action = [&] { emit(list_experiments()); }; });
  std::string run_name, run_config, run_output;
  std::optional<std::uint64_t> run_trials, run_seed;
  std::optional<unsigned> run_threads;
  bool run_smoke = false;
  auto* erun = ex->add_subcommand("run", "Run an experiment from a config file or by name");
  erun->add_option("name", run_name, "experiment name");
  erun->add_option("--config", run_config, "JSON config file");
  erun->add_option("--trials", run_trials, "override trials");
  erun->add_option("--seed", run_seed, "override seed");
  erun->add_option("--threads", run_threads, "override threads");
  erun->add_option("--output", run_output, "output prefix for .json, .csv and .meta.json");
  erun->add_flag("--smoke", run_smoke, "use the quick smoke-scale settings");
  erun->callback([&] {
    action = [&] {
      json cfg = run_config.empty() ? json::object() : read_json_file(run_config);
      if (!run_name.empty()) cfg["experiment"] = run_name;
      if (run_trials) cfg["trials"] = *run_trials;
      if (run_seed) cfg["seed"] = *run_seed;
      if (run_threads) cfg["threads"] = *run_threads;
      if (!run_output.empty()) cfg["output"] = run_output;
      const auto rec = run_experiment(cfg, run_smoke);
      emit(to_json_value(rec));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (action) action();
  } catch (const CapExceeded& e) {
    std::cerr << "cap exceeded: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
