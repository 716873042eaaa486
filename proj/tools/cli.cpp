#include "cli.hpp"

#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "spikegrad/spikegrad.hpp"

namespace spikegrad::cli {
namespace {

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  return f;
}

Precision pick_precision(const std::string& flag, std::optional<Precision> configured) {
  if (!flag.empty()) return parse_precision(flag);
  return configured.value_or(precision_from_env(Precision::f32));
}

struct BenchArgs {
  std::string spec;
  std::string out;
  std::string precision;
};

int do_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  BenchSpec spec = load_bench_spec(a.spec);
  if (!a.precision.empty()) spec.precision = parse_precision(a.precision);
  const BenchReport report = bench(spec);
  {
    auto f = open_output(a.out);
    write_bench_csv(f, report.rows);
  }
  out << "precision " << to_string(report.precision) << ", max output difference across plans "
      << format_number(report.max_output_diff) << "\n";
  write_bench_csv(out, report.rows);
  if (!report.outputs_equivalent) {
    err << "error: schedulers disagree on the forward outputs\n";
    return kExitNumerical;
  }
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data = "toy";
  std::string metrics;
  std::string model_out;
  std::string precision;
};

template <typename T>
int do_train_as(const TrainJob& job, const TrainArgs& a, std::ostream& out) {
  Model<T> model = job.graph_path
                       ? load_model<T>(*job.graph_path)
                       : [&] {
                           std::vector<std::size_t> widths = job.hidden;
                           widths.push_back(job.toy.classes);
                           return make_model<T>(
                               make_lif_mlp(job.toy.n_in, widths, job.lif, job.model_seed));
                         }();
  const Dataset<T> data =
      a.data == "toy" ? gen_toy<T>(job.toy.classes, job.toy.n_in, job.toy.steps,
                                   job.toy.samples_per_class, job.toy.seed)
                      : load_dataset<T>(a.data, model.graph.input_shape());

  auto metrics_file = open_output(a.metrics);
  write_metrics_header(metrics_file);
  auto result = train(model.graph, model.params, data, job.config, [&](const EpochMetrics& m) {
    write_metrics_row(metrics_file, m);
    metrics_file.flush();
  });
  const EpochMetrics& last = result.metrics.back();
  out << "trained " << result.metrics.size() << " epochs on " << data.size()
      << " samples: loss " << format_number(last.mean_loss) << ", accuracy "
      << format_number(last.accuracy) << "\n";
  if (!a.model_out.empty()) {
    auto f = open_output(a.model_out);
    f << model_to_json(Model<T>{model.graph, std::move(result.params)}) << "\n";
  }
  return kExitOk;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  const TrainJob job = load_train_job(a.config);
  return pick_precision(a.precision, job.precision) == Precision::f64 ? do_train_as<double>(job, a, out)
                                                                      : do_train_as<float>(job, a, out);
}

int do_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  const GradcheckSuite suite = run_gradcheck_suite(options);
  out << "AD vs central differences (f64, eps " << format_number(options.eps) << ")\n";
  for (const auto& c : suite.cases) {
    out << "  " << (c.report.pass() ? "ok  " : "FAIL") << "  max_rel "
        << format_number(c.report.max_rel_error()) << "  mean_rel "
        << format_number(c.report.mean_rel_error()) << "  " << c.description << "\n";
    for (const auto& e : c.report.entries) {
      out << "          " << e.name << ": max_rel " << format_number(e.max_rel_error)
          << ", mean_rel " << format_number(e.mean_rel_error) << "\n";
    }
  }
  out << "hard-threshold chain-rule oracle: max abs error " << format_number(suite.oracle_error)
      << " (threshold " << format_number(suite.oracle_threshold) << ")\n";
  out << "max relative error: " << format_number(suite.max_rel_error()) << " (threshold "
      << format_number(options.threshold) << ")\n";
  if (!suite.pass()) {
    err << "gradcheck FAILED\n";
    return kExitNumerical;
  }
  out << "gradcheck passed\n";
  return kExitOk;
}

struct SimulateArgs {
  std::string graph;
  std::string input;
  std::string trace;
  std::string scheduler = "step_by_step";
  std::size_t unroll = 1;
  std::string precision;
};

template <typename T>
int do_simulate_as(const SimulateArgs& a, std::ostream& out) {
  const Model<T> model = load_model<T>(a.graph);
  std::ifstream in(a.input);
  if (!in) throw ValidationError("cannot open " + a.input);
  const Tensor<T> input = read_input_csv<T>(in, model.graph.input_shape());
  const ExecutionPlan plan{parse_scheduler(a.scheduler), a.unroll, std::nullopt};
  const auto states = init_states<T>(model.graph, StateInit::zeros(), 0);
  const RunOptions options{!a.trace.empty()};
  const RunResult<T> r = run(model.graph, model.params, plan, input, states, options);
  if (!a.trace.empty()) {
    // Spike rasters only; stateless layers carry currents, not spikes.
    SpikeRecord<T> raster;
    for (const auto& [id, rec] : r.record.hidden) {
      if (model.graph.node(id).stateful()) raster.hidden.emplace(id, rec);
    }
    auto f = open_output(a.trace);
    write_trace_csv(f, raster.hidden.empty() ? r.record : raster);
  }
  out << "simulated " << input.dim(0) << " steps\n";
  for (const auto& [id, rec] : r.record.outputs) {
    double total = 0.0;
    for (T v : rec.data()) total += static_cast<double>(v);
    out << "  output " << model.graph.node(id).name << ": " << format_number(total) << " spikes\n";
  }
  return kExitOk;
}

int do_simulate(const SimulateArgs& a, std::ostream& out) {
  return pick_precision(a.precision, std::nullopt) == Precision::f64 ? do_simulate_as<double>(a, out)
                                                                    : do_simulate_as<float>(a, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking network simulation, training and benchmarking", "spikegrad"};
  app.require_subcommand(1);

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Time both schedulers on a benchmark spec");
  bench_cmd->add_option("--spec", bench_args.spec, "BenchSpec JSON file")->required();
  bench_cmd->add_option("--out", bench_args.out, "Timing CSV to write")->required();
  bench_cmd->add_option("--precision", bench_args.precision, "f32 or f64");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a network and write per-epoch metrics");
  train_cmd->add_option("--config", train_args.config, "TrainConfig JSON file")->required();
  train_cmd->add_option("--data", train_args.data, "'toy' or a dataset JSON file")
      ->capture_default_str();
  train_cmd->add_option("--metrics", train_args.metrics, "Metrics CSV to write")->required();
  train_cmd->add_option("--model-out", train_args.model_out, "Write the trained model as JSON");
  train_cmd->add_option("--precision", train_args.precision, "f32 or f64");

  GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Run the gradient oracle suite (f64)");
  gc_cmd->add_option("--eps", gc.eps, "Finite-difference step")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "Seed for the random architectures")->capture_default_str();
  gc_cmd->add_option("--architectures", gc.architectures, "Number of random networks")
      ->capture_default_str();
  gc_cmd->add_option("--threshold", gc.threshold, "Maximum relative error")->capture_default_str();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a graph on an input CSV");
  sim_cmd->add_option("--graph", sim_args.graph, "Graph JSON file")->required();
  sim_cmd->add_option("--input", sim_args.input, "Input CSV, one line per time step")->required();
  sim_cmd->add_option("--trace", sim_args.trace, "Spike trace CSV to write");
  sim_cmd->add_option("--scheduler", sim_args.scheduler, "step_by_step or layer_by_layer")
      ->capture_default_str();
  sim_cmd->add_option("--unroll", sim_args.unroll, "Unroll factor")->capture_default_str();
  sim_cmd->add_option("--precision", sim_args.precision, "f32 or f64");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }

  try {
    if (*bench_cmd) return do_bench(bench_args, out, err);
    if (*train_cmd) return do_train(train_args, out);
    if (*gc_cmd) return do_gradcheck(gc, out, err);
    if (*sim_cmd) return do_simulate(sim_args, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace spikegrad::cli
