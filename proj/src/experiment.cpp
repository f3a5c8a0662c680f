#include "radixlm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "radixlm/oracles.hpp"

namespace radixlm {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ValidationError(where + " must be an object");
  }
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      throw ValidationError(where + ": unknown key '" + key + "'");
    }
  }
}

json scheduler_json(const SchedulerConfig& c) {
  return {{"pool_capacity", c.pool_capacity},
          {"policy", policy_name(c.policy)},
          {"policy_seed", c.policy_seed},
          {"model_seed", c.model_seed},
          {"cache_enabled", c.cache_enabled},
          {"tree_structure", c.tree_structure},
          {"hit_cap", c.hit_cap},
          {"in_batch_deferral", c.in_batch_deferral},
          {"max_running", c.max_running},
          {"compressed_fsm", c.compressed_fsm},
          {"constraint_reuse", c.constraint_reuse},
          {"eos_probability", c.eos_probability},
          {"step_overhead", c.step_overhead}};
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) {
    return 0.0;
  }
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

EngineConfig EngineConfig::from_json(const json& j) {
  check_keys(j, "engine config", {"vocab", "scheduler", "interpreter", "router", "ablation"});
  EngineConfig c;
  if (j.contains("vocab")) {
    const json& v = j.at("vocab");
    check_keys(v, "vocab", {"seed", "merges"});
    c.vocab_seed = v.value("seed", c.vocab_seed);
    c.vocab_merges = v.value("merges", c.vocab_merges);
  }
  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    check_keys(s, "scheduler",
               {"pool_capacity", "policy", "policy_seed", "model_seed", "cache_enabled", "tree_structure", "hit_cap",
                "in_batch_deferral", "max_running", "compressed_fsm", "constraint_reuse", "eos_probability",
                "step_overhead"});
    auto& sc = c.scheduler;
    sc.pool_capacity = s.value("pool_capacity", sc.pool_capacity);
    if (s.contains("policy")) {
      sc.policy = parse_policy(s.at("policy").get<std::string>());
    }
    sc.policy_seed = s.value("policy_seed", sc.policy_seed);
    sc.model_seed = s.value("model_seed", sc.model_seed);
    sc.cache_enabled = s.value("cache_enabled", sc.cache_enabled);
    sc.tree_structure = s.value("tree_structure", sc.tree_structure);
    sc.hit_cap = s.value("hit_cap", sc.hit_cap);
    sc.in_batch_deferral = s.value("in_batch_deferral", sc.in_batch_deferral);
    sc.max_running = s.value("max_running", sc.max_running);
    sc.compressed_fsm = s.value("compressed_fsm", sc.compressed_fsm);
    sc.constraint_reuse = s.value("constraint_reuse", sc.constraint_reuse);
    sc.eos_probability = s.value("eos_probability", sc.eos_probability);
    sc.step_overhead = s.value("step_overhead", sc.step_overhead);
  }
  if (j.contains("interpreter")) {
    const json& i = j.at("interpreter");
    check_keys(i, "interpreter", {"fork_hints", "parallel", "image_tokens"});
    c.interpreter.fork_hints = i.value("fork_hints", c.interpreter.fork_hints);
    c.interpreter.parallel = i.value("parallel", c.interpreter.parallel);
    c.interpreter.image_tokens = i.value("image_tokens", c.interpreter.image_tokens);
  }
  if (j.contains("router") && !j.at("router").is_null()) {
    const json& r = j.at("router");
    check_keys(r, "router", {"workers", "policy", "load_penalty", "sync_threshold", "sync_when_idle"});
    RouterConfig rc;
    rc.workers = r.value("workers", rc.workers);
    if (r.contains("policy")) {
      rc.policy = parse_route_policy(r.at("policy").get<std::string>());
    }
    rc.load_penalty = r.value("load_penalty", rc.load_penalty);
    rc.sync_threshold = r.value("sync_threshold", rc.sync_threshold);
    rc.sync_when_idle = r.value("sync_when_idle", rc.sync_when_idle);
    if (rc.workers < 1) {
      throw ValidationError("router needs at least one worker");
    }
    c.router = rc;
  }
  c.ablation = j.value("ablation", c.ablation);
  const auto names = ablation_names();
  if (std::find(names.begin(), names.end(), c.ablation) == names.end()) {
    throw ValidationError("unknown ablation '" + c.ablation + "'");
  }
  return c;
}

json EngineConfig::to_json() const {
  json j = {{"vocab", {{"seed", vocab_seed}, {"merges", vocab_merges}}},
            {"scheduler", scheduler_json(scheduler)},
            {"interpreter",
             {{"fork_hints", interpreter.fork_hints},
              {"parallel", interpreter.parallel},
              {"image_tokens", interpreter.image_tokens}}},
            {"ablation", ablation}};
  if (router) {
    j["router"] = {{"workers", router->workers},
                   {"policy", route_policy_name(router->policy)},
                   {"load_penalty", router->load_penalty},
                   {"sync_threshold", router->sync_threshold},
                   {"sync_when_idle", router->sync_when_idle}};
  }
  return j;
}

std::vector<std::string> ablation_names() {
  return {"full", "no_tree", "fcfs", "random", "no_parallelism", "no_hint", "no_cache"};
}

EngineConfig EngineConfig::effective() const {
  EngineConfig c = *this;
  if (ablation == "no_tree") {
    c.scheduler.tree_structure = false;
  } else if (ablation == "fcfs") {
    c.scheduler.policy = SchedulePolicy::kFcfs;
  } else if (ablation == "random") {
    c.scheduler.policy = SchedulePolicy::kRandom;
  } else if (ablation == "no_parallelism") {
    c.interpreter.parallel = false;
  } else if (ablation == "no_hint") {
    c.interpreter.fork_hints = false;
  } else if (ablation == "no_cache") {
    c.scheduler.cache_enabled = false;
  } else if (ablation != "full") {
    throw ValidationError("unknown ablation '" + ablation + "'");
  }
  return c;
}

RequestId RecordingRuntime::submit(RequestSpec spec) {
  TokenSequence prompt = spec.prompt;
  const RequestId id = inner_->submit(std::move(spec));
  index_[id] = prompts_.size();
  prompts_.push_back(std::move(prompt));
  outputs_.emplace_back();
  return id;
}

std::vector<Completion> RecordingRuntime::step() {
  auto done = inner_->step();
  for (const auto& c : done) {
    const auto it = index_.find(c.id);
    if (it != index_.end()) {
      outputs_[it->second] = c.output;
      index_.erase(it);
    }
  }
  return done;
}

ExperimentReport run_programs_experiment(const std::vector<Program>& programs, const EngineConfig& config,
                                         std::shared_ptr<const Vocabulary> vocab) {
  const EngineConfig eff = config.effective();
  ExperimentReport report;
  std::unique_ptr<Scheduler> single;
  std::unique_ptr<Router> router;
  Runtime* runtime = nullptr;
  SchedulerConfig sc = eff.scheduler;
  sc.profile_tree_ops = true;
  if (eff.router) {
    router = std::make_unique<Router>(vocab, sc, *eff.router);
    runtime = router.get();
  } else {
    single = std::make_unique<Scheduler>(vocab, sc);
    runtime = single.get();
  }
  RecordingRuntime recorder(*runtime);

  const auto t0 = std::chrono::steady_clock::now();
  report.results = run_programs(programs, recorder, eff.interpreter);
  if (router) {
    router->drain();
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<const Scheduler*> workers;
  if (router) {
    for (std::size_t w = 0; w < router->worker_count(); ++w) {
      workers.push_back(&router->worker(w));
    }
  } else {
    workers.push_back(single.get());
  }
  std::int64_t cached = 0;
  std::int64_t total = 0;
  std::int64_t prefill = 0;
  std::int64_t decode = 0;
  std::int64_t evicted = 0;
  std::int64_t steps = 0;
  std::int64_t batch_sum = 0;
  std::int64_t peak = 0;
  std::ostringstream csv;
  csv << "worker,step,batch_size\n";
  for (std::size_t w = 0; w < workers.size(); ++w) {
    const auto& m = workers[w]->metrics();
    cached += m.cached_prompt_tokens;
    total += m.total_prompt_tokens;
    prefill += m.prefill_compute_tokens;
    decode += m.decode_steps;
    evicted += m.evicted_tokens;
    steps += m.steps;
    peak = std::max(peak, m.peak_running);
    for (std::size_t s = 0; s < m.batch_sizes.size(); ++s) {
      csv << w << ',' << s << ',' << m.batch_sizes[s] << '\n';
      batch_sum += m.batch_sizes[s];
    }
    report.tree_op_seconds += workers[w]->tree_op_seconds();
  }
  report.batch_csv = csv.str();

  std::vector<double> latencies;
  std::int64_t failed = 0;
  for (const auto& r : report.results) {
    latencies.push_back(static_cast<double>(r.finish_time - r.start_time));
    failed += r.error.empty() ? 0 : 1;
  }
  const std::int64_t makespan = router ? router->makespan() : single->now();
  const double mean_latency =
      latencies.empty() ? 0.0 : std::accumulate(latencies.begin(), latencies.end(), 0.0) / static_cast<double>(latencies.size());

  json m;
  m["programs"] = programs.size();
  m["failed_programs"] = failed;
  m["requests"] = recorder.prompts().size();
  m["hit_rate"] = total > 0 ? static_cast<double>(cached) / static_cast<double>(total) : 0.0;
  m["optimal_hit_rate"] = total > 0 ? optimal_hit_rate(recorder.prompts(), recorder.outputs()) : 0.0;
  m["cached_prompt_tokens"] = cached;
  m["total_prompt_tokens"] = total;
  m["prefill_compute"] = prefill;
  m["decode_steps"] = decode;
  m["evicted_tokens"] = evicted;
  m["steps"] = steps;
  m["makespan"] = makespan;
  m["throughput_programs_per_kilostep"] =
      makespan > 0 ? 1000.0 * static_cast<double>(programs.size()) / static_cast<double>(makespan) : 0.0;
  m["mean_batch_size"] = steps > 0 ? static_cast<double>(batch_sum) / static_cast<double>(steps) : 0.0;
  m["peak_batch_size"] = peak;
  m["latency_mean"] = mean_latency;
  m["latency_p50"] = percentile(latencies, 0.5);
  m["latency_p95"] = percentile(latencies, 0.95);
  m["config"] = eff.to_json();
  if (router) {
    m["router"] = router->metrics_json();
    m["router"]["meta_tree_consistent"] = router->consistent_with_workers();
  }
  report.metrics = std::move(m);
  return report;
}

ExperimentReport run_experiment(const WorkloadSpec& spec, const EngineConfig& config) {
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::build(config.vocab_seed, config.vocab_merges));
  const auto programs = generate_workload(spec, *vocab);
  ExperimentReport report = run_programs_experiment(programs, config, vocab);
  report.metrics["workload"] = spec.to_json();
  return report;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw PreconditionError("spearman needs two equally sized samples of at least 2");
  }
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
        ++j;
      }
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) {
        r[idx[k]] = avg;
      }
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace radixlm
