#include "spikegrad/config.hpp"

#include <cstdlib>
#include <filesystem>

#include "json_util.hpp"

namespace spikegrad {

Precision parse_precision(std::string_view name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw ValidationError("unknown precision '" + std::string(name) + "' (expected f32 or f64)");
}

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_env(Precision fallback) {
  const char* v = std::getenv("SPIKEGRAD_PRECISION");
  if (v == nullptr || *v == '\0') return fallback;
  return parse_precision(v);
}

using detail::get;
using detail::get_or;
using detail::get_size;
using detail::get_size_or;
using detail::Json;

namespace {

ExecutionPlan plan_from_json(const Json& j) {
  detail::check_keys(j, {"scheduler", "unroll", "checkpoint_every"}, "plan");
  ExecutionPlan plan;
  plan.scheduler = parse_scheduler(get_or<std::string>(j, "scheduler", "step_by_step", "plan"));
  plan.unroll = get_size_or(j, "unroll", 1, "plan");
  if (j.contains("checkpoint_every") && !j["checkpoint_every"].is_null()) {
    plan.checkpoint_every = get_size(j, "checkpoint_every", "plan");
  }
  if (plan.unroll == 0) throw ValidationError("plan: unroll must be at least 1");
  if (plan.checkpoint_every && *plan.checkpoint_every == 0) {
    throw ValidationError("plan: checkpoint_every must be at least 1");
  }
  return plan;
}

StateInit state_init_from_json(const Json& j) {
  detail::check_keys(j, {"mode", "lo", "hi"}, "state_init");
  const auto mode = get_or<std::string>(j, "mode", "zeros", "state_init");
  if (mode == "zeros") return StateInit::zeros();
  if (mode != "uniform") throw ValidationError("state_init: unknown mode '" + mode + "'");
  const double lo = get_or(j, "lo", 0.0, "state_init");
  const double hi = get_or(j, "hi", 1.0, "state_init");
  if (!(lo < hi)) throw ValidationError("state_init: lo must be below hi");
  return StateInit::uniform(lo, hi);
}

std::optional<Precision> precision_field(const Json& j, const char* where) {
  if (!j.contains("precision")) return std::nullopt;
  return parse_precision(get<std::string>(j, "precision", where));
}

}  // namespace

BenchSpec bench_spec_from_json(std::string_view text) {
  const Json j = detail::parse_json(text, "bench spec");
  constexpr const char* where = "bench spec";
  detail::check_keys(j, {"version", "arch", "n_in", "width", "depth", "in_channels", "channels",
                         "image", "kernel", "stride", "T", "batch_size", "repeats", "warmup",
                         "schedulers", "unroll", "phases", "input_rate", "seed", "precision"},
                     where);
  detail::check_version(j, where);
  BenchSpec s;
  s.arch = parse_arch(get_or<std::string>(j, "arch", "mlp", where));
  s.n_in = get_size_or(j, "n_in", s.n_in, where);
  s.width = get_size_or(j, "width", s.width, where);
  s.depth = get_size_or(j, "depth", s.depth, where);
  s.in_channels = get_size_or(j, "in_channels", s.in_channels, where);
  s.channels = get_size_or(j, "channels", s.channels, where);
  s.image = get_size_or(j, "image", s.image, where);
  s.kernel = get_size_or(j, "kernel", s.kernel, where);
  s.stride = get_size_or(j, "stride", s.stride, where);
  s.steps = get_size_or(j, "T", s.steps, where);
  s.batch_size = get_size_or(j, "batch_size", s.batch_size, where);
  s.repeats = get_size_or(j, "repeats", s.repeats, where);
  s.warmup = get_size_or(j, "warmup", s.warmup, where);
  if (j.contains("schedulers")) {
    s.schedulers.clear();
    for (const auto& name : get<std::vector<std::string>>(j, "schedulers", where)) {
      s.schedulers.push_back(parse_scheduler(name));
    }
  }
  if (j.contains("unroll")) {
    const auto u = get<std::vector<long long>>(j, "unroll", where);
    s.unrolls.clear();
    for (long long v : u) {
      if (v <= 0) throw ValidationError("bench spec: unroll factors must be positive");
      s.unrolls.push_back(static_cast<std::size_t>(v));
    }
  }
  if (j.contains("phases")) {
    s.phases.clear();
    for (const auto& name : get<std::vector<std::string>>(j, "phases", where)) {
      s.phases.push_back(parse_phase(name));
    }
  }
  s.input_rate = get_or(j, "input_rate", s.input_rate, where);
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed, where);
  s.precision = precision_field(j, where);
  s.validate();
  return s;
}

BenchSpec load_bench_spec(const std::string& path) {
  return bench_spec_from_json(detail::read_text_file(path));
}

TrainJob train_job_from_json(std::string_view text, const std::string& base_dir) {
  const Json j = detail::parse_json(text, "train config");
  constexpr const char* where = "train config";
  detail::check_keys(j, {"version", "epochs", "batch_size", "learning_rate", "optimizer", "adam",
                         "seed", "plan", "state_init", "threads", "stop_at_accuracy", "precision",
                         "model", "toy"},
                     where);
  detail::check_version(j, where);
  TrainJob job;
  TrainConfig& c = job.config;
  c.epochs = get_size_or(j, "epochs", c.epochs, where);
  c.batch_size = get_size_or(j, "batch_size", c.batch_size, where);
  c.optimizer.learning_rate = get_or(j, "learning_rate", c.optimizer.learning_rate, where);
  c.optimizer.kind = parse_optimizer(get_or<std::string>(j, "optimizer", "adam", where));
  if (j.contains("adam")) {
    const Json& a = j["adam"];
    detail::check_keys(a, {"beta1", "beta2", "eps"}, "adam");
    c.optimizer.beta1 = get_or(a, "beta1", c.optimizer.beta1, "adam");
    c.optimizer.beta2 = get_or(a, "beta2", c.optimizer.beta2, "adam");
    c.optimizer.eps = get_or(a, "eps", c.optimizer.eps, "adam");
  }
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, where);
  if (j.contains("plan")) c.plan = plan_from_json(j["plan"]);
  if (j.contains("state_init")) c.state_init = state_init_from_json(j["state_init"]);
  c.threads = get_size_or(j, "threads", c.threads, where);
  if (j.contains("stop_at_accuracy") && !j["stop_at_accuracy"].is_null()) {
    c.stop_at_accuracy = get<double>(j, "stop_at_accuracy", where);
  }
  job.precision = precision_field(j, where);

  if (j.contains("model")) {
    const Json& m = j["model"];
    detail::check_keys(m, {"hidden", "alpha", "beta", "thr", "surrogate", "slope", "reset",
                           "seed", "graph"},
                       "model");
    job.hidden = get_or(m, "hidden", job.hidden, "model");
    job.lif.alpha = get_or(m, "alpha", job.lif.alpha, "model");
    job.lif.beta = get_or(m, "beta", job.lif.beta, "model");
    job.lif.thr = get_or(m, "thr", job.lif.thr, "model");
    job.lif.surrogate = make_surrogate(get_or<std::string>(m, "surrogate", "superspike", "model"),
                                       get_or(m, "slope", 10.0, "model"));
    const auto reset = get_or<std::string>(m, "reset", "subtract", "model");
    if (reset != "subtract" && reset != "to_zero") {
      throw ValidationError("model: unknown reset mode '" + reset + "'");
    }
    job.lif.reset = reset == "subtract" ? ResetMode::subtract : ResetMode::to_zero;
    job.lif.validate();
    job.model_seed = get_or<std::uint64_t>(m, "seed", job.model_seed, "model");
    if (m.contains("graph")) {
      std::filesystem::path p = get<std::string>(m, "graph", "model");
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      job.graph_path = p.string();
    }
  }
  if (j.contains("toy")) {
    const Json& t = j["toy"];
    detail::check_keys(t, {"classes", "n_in", "T", "samples_per_class", "seed"}, "toy");
    job.toy.classes = get_size_or(t, "classes", job.toy.classes, "toy");
    job.toy.n_in = get_size_or(t, "n_in", job.toy.n_in, "toy");
    job.toy.steps = get_size_or(t, "T", job.toy.steps, "toy");
    job.toy.samples_per_class = get_size_or(t, "samples_per_class", job.toy.samples_per_class, "toy");
    job.toy.seed = get_or<std::uint64_t>(t, "seed", job.toy.seed, "toy");
  }
  c.validate();
  return job;
}

TrainJob load_train_job(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  return train_job_from_json(detail::read_text_file(path), dir.empty() ? "." : dir.string());
}

}  // namespace spikegrad
