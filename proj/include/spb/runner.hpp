#pragma once

// Schedules judge units for a paradigm, calls the chat endpoint with bounded
// concurrency and retries, parses responses and appends records to the store.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "spb/chat_client.hpp"
#include "spb/diagnostics.hpp"
#include "spb/hashing.hpp"
#include "spb/parsers.hpp"
#include "spb/prompts.hpp"
#include "spb/store.hpp"

namespace spb {

struct RetryPolicy {
  int max_attempts = 3;
  double base_delay_seconds = 1.0;
  double max_delay_seconds = 30.0;
  double jitter = 0.25;  // +/- fraction of the delay

  // Delay before attempt `attempt` (1-based retry count), given u in [0, 1).
  std::chrono::milliseconds delay(int attempt, double u) const {
    double d = std::min(max_delay_seconds, base_delay_seconds * std::pow(2.0, attempt - 1));
    d *= 1.0 + jitter * (2.0 * u - 1.0);
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::max(0.0, d) * 1000.0));
  }
};

struct ParadigmPlan {
  Paradigm paradigm = Paradigm::SR;
  TemplateStyle style = TemplateStyle::objective;
  std::vector<ModelId> judges;
  Roster generators;
  SamplingParams sampling;
  RetryPolicy retry;
  int concurrency = 4;

  void validate() const {
    if (judges.empty()) throw ConfigError("plan has no judges");
    if (generators.empty()) throw ConfigError("plan has no generators");
    if (paradigm == Paradigm::PWC && generators.size() < 2) throw ConfigError("PWC plan needs two generators");
    if (style == TemplateStyle::health && paradigm != Paradigm::SR)
      throw ConfigError("the health template style exists only for SR");
    if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  }
};

// One request to a judge. Its records share the request's prompt and response.
struct WorkUnit {
  Paradigm paradigm = Paradigm::SR;
  ModelId judge;
  std::vector<ModelId> generators;  // presentation order; two for PWC
  std::size_t instance = 0;
  std::optional<std::size_t> rubric;  // SR only
  std::vector<LogRecord> skeletons;   // one per produced record, payload keys only
};

struct Plan {
  std::vector<WorkUnit> units;
  std::size_t missing_outputs = 0;
};

namespace runner_detail {

inline LogRecord rubric_skeleton(Paradigm p, const ModelId& judge, const ModelId& gen, const BenchmarkInstance& inst,
                                 const Rubric& r) {
  return {RubricVerdict{judge, gen, inst.instance_id, r.rubric_id, false, p, std::nullopt}, {}};
}

}  // namespace runner_detail

using OutputIndex = std::map<std::pair<std::string, ModelId>, const GeneratorOutput*>;

inline OutputIndex index_outputs(std::span<const GeneratorOutput> outputs) {
  OutputIndex idx;
  for (const auto& o : outputs) idx[{o.instance_id, o.generator}] = &o;
  return idx;
}

// SR: judge x generator x instance x rubric; AR/DA: judge x generator x
// instance; PWC: judge x unordered pair x instance x both orders.
inline Plan plan_units(const ParadigmPlan& plan, const Dataset& dataset, const OutputIndex& outputs) {
  plan.validate();
  Plan out;
  auto has = [&](const std::string& x, const ModelId& g) { return outputs.count({x, g}) != 0; };
  for (const auto& judge : plan.judges) {
    if (plan.paradigm == Paradigm::PWC) {
      for (std::size_t a = 0; a < plan.generators.size(); ++a)
        for (std::size_t b = a + 1; b < plan.generators.size(); ++b)
          for (std::size_t i = 0; i < dataset.size(); ++i) {
            const auto& inst = dataset[i];
            const auto& ga = plan.generators[a];
            const auto& gb = plan.generators[b];
            if (!has(inst.instance_id, ga) || !has(inst.instance_id, gb)) {
              out.missing_outputs += 2;
              continue;
            }
            for (const auto& order : {std::pair{ga, gb}, std::pair{gb, ga}}) {
              WorkUnit u{Paradigm::PWC, judge, {order.first, order.second}, i, std::nullopt, {}};
              u.skeletons.push_back(
                  {PairwiseRun{judge, order.first, order.second, inst.instance_id, RunOutcome::tie}, {}});
              out.units.push_back(std::move(u));
            }
          }
      continue;
    }
    for (const auto& gen : plan.generators)
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& inst = dataset[i];
        if (!has(inst.instance_id, gen)) {
          out.missing_outputs += plan.paradigm == Paradigm::SR ? inst.rubrics.size() : 1;
          continue;
        }
        switch (plan.paradigm) {
          case Paradigm::SR:
            for (std::size_t r = 0; r < inst.rubrics.size(); ++r) {
              WorkUnit u{Paradigm::SR, judge, {gen}, i, r, {}};
              u.skeletons.push_back(runner_detail::rubric_skeleton(Paradigm::SR, judge, gen, inst, inst.rubrics[r]));
              out.units.push_back(std::move(u));
            }
            break;
          case Paradigm::AR: {
            WorkUnit u{Paradigm::AR, judge, {gen}, i, std::nullopt, {}};
            for (const auto& r : inst.rubrics)
              u.skeletons.push_back(runner_detail::rubric_skeleton(Paradigm::AR, judge, gen, inst, r));
            out.units.push_back(std::move(u));
            break;
          }
          case Paradigm::DA: {
            WorkUnit u{Paradigm::DA, judge, {gen}, i, std::nullopt, {}};
            u.skeletons.push_back(
                {InstanceScore{judge, gen, inst.instance_id, Fraction{0, 1}, ScoreSource::DA}, {}});
            out.units.push_back(std::move(u));
            break;
          }
          case Paradigm::PWC: break;
        }
      }
  }
  return out;
}

inline std::string render_unit(const WorkUnit& u, const Dataset& dataset, const OutputIndex& outputs,
                               TemplateStyle style) {
  const auto& inst = dataset[u.instance];
  std::vector<std::string> completions;
  for (const auto& g : u.generators) completions.push_back(outputs.at({inst.instance_id, g})->completion);
  if (u.rubric) {
    const auto& r = inst.rubrics[*u.rubric];
    return render_prompt(u.paradigm, inst, completions, std::span<const Rubric>(&r, 1), style);
  }
  return render_prompt(u.paradigm, inst, completions, inst.rubrics, style);
}

// Relative path for a dry-run prompt file.
inline std::string prompt_file_name(const WorkUnit& u, const Dataset& dataset) {
  auto clean = [](std::string s) {
    for (auto& c : s)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    return s;
  };
  const auto& inst = dataset[u.instance];
  std::string name = clean(u.judge) + "/" + std::string(to_string(u.paradigm)) + "/" + clean(u.generators[0]);
  if (u.generators.size() > 1) name += "__vs__" + clean(u.generators[1]);
  name += "__" + clean(inst.instance_id);
  if (u.rubric) name += "__" + clean(inst.rubrics[*u.rubric].rubric_id);
  return name + ".txt";
}

// Fills the skeleton payloads from a raw response; throws ParseError/SchemaError.
inline std::vector<LogRecord> parse_unit_response(const WorkUnit& u, const Dataset& dataset,
                                                  const std::string& response) {
  const auto& inst = dataset[u.instance];
  std::vector<LogRecord> recs = u.skeletons;
  switch (u.paradigm) {
    case Paradigm::SR: std::get<RubricVerdict>(recs[0].payload).met = parse_sr_response(response); break;
    case Paradigm::AR: {
      const auto met = parse_ar_response(response, inst.rubrics.size());
      for (std::size_t i = 0; i < recs.size(); ++i) std::get<RubricVerdict>(recs[i].payload).met = met[i];
      break;
    }
    case Paradigm::DA:
      std::get<InstanceScore>(recs[0].payload).score = parse_da_response(response, inst.rubrics.size());
      break;
    case Paradigm::PWC: std::get<PairwiseRun>(recs[0].payload).outcome = parse_pwc_response(response); break;
  }
  return recs;
}

struct RunOptions {
  bool deterministic = false;               // blank timestamps
  const std::atomic<bool>* stop = nullptr;  // checked before each unit
  std::uint64_t jitter_seed = 0;
  std::function<void(std::chrono::milliseconds)> sleep = [](auto d) { std::this_thread::sleep_for(d); };
};

struct RunSummary {
  std::size_t planned = 0;
  std::size_t skipped = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  std::size_t not_started = 0;  // left over after a stop request
  std::size_t missing_outputs = 0;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline RunSummary run_judging(const ParadigmPlan& plan, const Dataset& dataset,
                              std::span<const GeneratorOutput> outputs, const EndpointConfig& endpoint,
                              ChatClient& client, VerdictStore& store, const RunOptions& options = {}) {
  plan.validate();
  endpoint.validate(plan.judges);
  const auto out_idx = index_outputs(outputs);
  auto planned = plan_units(plan, dataset, out_idx);

  RunSummary summary;
  summary.planned = planned.units.size();
  summary.missing_outputs = planned.missing_outputs;
  if (planned.missing_outputs) warn(std::to_string(planned.missing_outputs) + " planned units lack a generator output");

  std::vector<const WorkUnit*> todo;
  for (const auto& u : planned.units) {
    const bool complete = std::all_of(u.skeletons.begin(), u.skeletons.end(),
                                      [&](const LogRecord& r) { return store.has_success(unit_key(r)); });
    if (complete)
      ++summary.skipped;
    else
      todo.push_back(&u);
  }

  std::atomic<std::size_t> next{0}, done{0}, failed{0}, transport_failures{0};
  std::mutex rng_mu;
  std::mt19937_64 jitter_rng(options.jitter_seed);

  auto run_unit = [&](const WorkUnit& u) {
    const auto prompt = render_unit(u, dataset, out_idx, plan.style);
    RecordMeta meta;
    meta.template_version = std::string(template_version(u.paradigm, plan.style));
    meta.prompt_hash = sha256_hex(prompt);
    const ChatRequest req{endpoint.model_for(u.judge), prompt, plan.sampling};

    std::string last_error;
    bool last_was_transport = false;
    for (int attempt = 1; attempt <= plan.retry.max_attempts; ++attempt) {
      if (attempt > 1) {
        double jitter_u;
        {
          std::lock_guard lock(rng_mu);
          jitter_u = static_cast<double>(jitter_rng() >> 11) * 0x1.0p-53;
        }
        options.sleep(plan.retry.delay(attempt - 1, jitter_u));
      }
      meta.raw_response.clear();
      try {
        meta.raw_response = client.complete(req);
        auto recs = parse_unit_response(u, dataset, meta.raw_response);
        meta.timestamp = options.deterministic ? "" : utc_timestamp();
        for (auto& r : recs) {
          if (store.has_success(unit_key(r))) continue;  // partially logged AR unit
          r.meta = meta;
          store.append(std::move(r));
        }
        ++done;
        return;
      } catch (const TransportError& e) {
        last_error = e.what();
        last_was_transport = true;
        if (!e.retryable()) break;
      } catch (const DataError& e) {
        last_error = e.what();
        last_was_transport = false;
      }
    }
    meta.timestamp = options.deterministic ? "" : utc_timestamp();
    meta.error = last_error;
    for (auto r : u.skeletons) {
      if (store.has_success(unit_key(r))) continue;
      r.meta = meta;
      store.append(std::move(r));
    }
    ++failed;
    if (last_was_transport) ++transport_failures;
  };

  auto worker = [&] {
    while (true) {
      if (options.stop && options.stop->load()) return;
      const auto i = next.fetch_add(1);
      if (i >= todo.size()) return;
      run_unit(*todo[i]);
    }
  };

  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(plan.concurrency), todo.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  summary.done = done;
  summary.failed = failed;
  summary.not_started = todo.size() - summary.done - summary.failed;
  if (!todo.empty() && summary.done == 0 && summary.failed == todo.size()) {
    const std::string msg = "all " + std::to_string(summary.failed) + " dispatched units failed";
    if (transport_failures > 0) throw TransportError(msg);
    throw DataError(msg);
  }
  return summary;
}

}  // namespace spb
