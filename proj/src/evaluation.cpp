#include "gridprompt/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

#include "gridprompt/errors.hpp"
#include "gridprompt/scenario_gen.hpp"

namespace gridprompt {

using nlohmann::json;

namespace {

template <typename Entry>
std::map<int, const Entry*> index_by_id(const std::vector<Entry>& entries, const char* what) {
    std::map<int, const Entry*> out;
    for (const auto& e : entries) {
        if (!out.emplace(e.id, &e).second) {
            throw ScoringError(std::string("duplicate ") + what + " id " + std::to_string(e.id));
        }
    }
    return out;
}

template <typename Pred, typename Truth, typename Fn>
double mean_sq(const std::vector<Pred>& pred, const std::vector<Truth>& truth, const char* what, Fn diff) {
    const auto by_id = index_by_id(pred, what);
    if (by_id.size() != truth.size()) {
        throw ScoringError(std::string(what) + " count " + std::to_string(by_id.size()) + ", expected " +
                           std::to_string(truth.size()));
    }
    if (truth.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& t : truth) {
        auto it = by_id.find(t.id);
        if (it == by_id.end()) throw ScoringError(std::string(what) + " id " + std::to_string(t.id) + " missing");
        const auto [a, b] = diff(*it->second, t);
        sum += a * a + b * b;
    }
    return sum / (2.0 * static_cast<double>(truth.size()));
}

std::optional<double> opt_number(const json& doc, const char* key) {
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

MseTriple score(const SolutionDoc& pred, const OpfSolution& truth, double base_mva) {
    if (!(base_mva > 0.0)) throw ScoringError("base_mva must be positive");
    auto power = [&](const SolutionGenEntry& p, const GenOutput& t) {
        return std::pair{(p.p_mw - t.p_mw) / base_mva, (p.q_mvar - t.q_mvar) / base_mva};
    };
    MseTriple out;
    out.gen = mean_sq(pred.gen, truth.gen, "gen", power);
    out.slack = mean_sq(pred.slack, std::vector<GenOutput>{truth.slack}, "slack", power);
    out.bus = mean_sq(pred.bus, truth.bus, "bus", [](const SolutionBusEntry& p, const BusOutput& t) {
        return std::pair{p.vm_pu - t.vm_pu, (p.va_deg - t.va_deg) * std::numbers::pi / 180.0};
    });
    return out;
}

json trial_to_json(const TrialRecord& rec) {
    json doc = {{"schema", kTrialSchema},
                {"trial_id", rec.trial_id},
                {"query_index", rec.query_index},
                {"valid", rec.valid},
                {"mse_gen", opt_json(rec.mse_gen)},
                {"mse_slack", opt_json(rec.mse_slack)},
                {"mse_bus", opt_json(rec.mse_bus)},
                {"prompt_chars", rec.prompt_chars},
                {"response_chars", rec.response_chars},
                {"latency_ms", rec.latency_ms},
                {"attempts", rec.attempts},
                {"retries", rec.retries}};
    if (!rec.valid) doc["reason"] = rec.reason;
    return doc;
}

TrialRecord trial_from_json(const json& doc) {
    if (doc.value("schema", "") != kTrialSchema) throw ParseError("trial record has wrong or missing schema");
    TrialRecord rec;
    try {
        rec.trial_id = doc.at("trial_id").get<int>();
        rec.query_index = doc.at("query_index").get<int>();
        rec.valid = doc.at("valid").get<bool>();
        rec.reason = doc.value("reason", "");
        rec.mse_gen = opt_number(doc, "mse_gen");
        rec.mse_slack = opt_number(doc, "mse_slack");
        rec.mse_bus = opt_number(doc, "mse_bus");
        rec.prompt_chars = doc.at("prompt_chars").get<std::size_t>();
        rec.response_chars = doc.at("response_chars").get<std::size_t>();
        rec.latency_ms = doc.at("latency_ms").get<double>();
        rec.attempts = doc.at("attempts").get<int>();
        rec.retries = doc.at("retries").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed trial record: ") + e.what());
    }
    if (rec.valid != (rec.mse_gen && rec.mse_slack && rec.mse_bus)) {
        throw ParseError("trial " + std::to_string(rec.trial_id) + ": mse values must be present iff valid");
    }
    return rec;
}

EvalReport aggregate(std::vector<TrialRecord> records, json config) {
    std::sort(records.begin(), records.end(),
              [](const TrialRecord& a, const TrialRecord& b) { return a.trial_id < b.trial_id; });
    EvalReport report;
    report.config = std::move(config);
    report.n_trials = static_cast<int>(records.size());
    double gen = 0.0, slack = 0.0, bus = 0.0, latency = 0.0;
    for (const auto& r : records) {
        report.total_retries += r.retries;
        latency += r.latency_ms;
        if (!r.valid) continue;
        ++report.n_valid;
        gen += *r.mse_gen;
        slack += *r.mse_slack;
        bus += *r.mse_bus;
    }
    if (report.n_trials > 0) {
        report.valid_fraction = static_cast<double>(report.n_valid) / report.n_trials;
        report.invalid_fraction = static_cast<double>(report.n_trials - report.n_valid) / report.n_trials;
        report.mean_latency_ms = latency / report.n_trials;
    }
    if (report.n_valid > 0) {
        report.mse_gen = gen / report.n_valid;
        report.mse_slack = slack / report.n_valid;
        report.mse_bus = bus / report.n_valid;
    }
    return report;
}

json report_to_json(const EvalReport& report) {
    return {{"schema", kReportSchema},
            {"config", report.config},
            {"n_trials", report.n_trials},
            {"n_valid", report.n_valid},
            {"valid_fraction", report.valid_fraction},
            {"invalid_fraction", report.invalid_fraction},
            {"mse_gen", opt_json(report.mse_gen)},
            {"mse_slack", opt_json(report.mse_slack)},
            {"mse_bus", opt_json(report.mse_bus)},
            {"total_retries", report.total_retries},
            {"mean_latency_ms", report.mean_latency_ms}};
}

EvalReport report_from_log(std::istream& log, json config) {
    std::vector<TrialRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(log, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(trial_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("log line is not JSON: ") + e.what(), line_no);
        }
    }
    return aggregate(std::move(records), std::move(config));
}

// ---------------------------------------------------------------------------

void validate(const BenchSettings& s) {
    if (s.trials < 1) throw ConfigError("trials must be at least 1");
    if (s.context_size < 0) throw ConfigError("context size must be >= 0");
    if (s.concurrency < 1) throw ConfigError("concurrency must be at least 1");
}

std::vector<std::vector<std::size_t>> partition_trials(std::size_t n_items, const BenchSettings& s) {
    validate(s);
    const std::size_t per_trial = static_cast<std::size_t>(s.context_size) + 1;
    const std::size_t needed = per_trial * static_cast<std::size_t>(s.trials);
    if (n_items < needed) {
        throw SizingError("dataset has " + std::to_string(n_items) + " entries; " + std::to_string(s.trials) +
                          " trials with " + std::to_string(s.context_size) + " context pairs need " +
                          std::to_string(needed));
    }
    std::vector<std::size_t> order(n_items);
    for (std::size_t i = 0; i < n_items; ++i) order[i] = i;
    const CounterRng rng(s.seed);
    for (std::size_t i = n_items - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.unit(0x5eed, i) * static_cast<double>(i + 1));
        std::swap(order[i], order[std::min(j, i)]);
    }
    std::vector<std::vector<std::size_t>> trials;
    for (std::size_t t = 0; t < static_cast<std::size_t>(s.trials); ++t) {
        trials.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(t * per_trial),
                            order.begin() + static_cast<std::ptrdiff_t>((t + 1) * per_trial));
    }
    return trials;
}

namespace {

TrialRecord run_trial(int trial_id, const std::vector<std::size_t>& draw, const std::vector<BenchItem>& items,
                      double base_mva, ChatBackend& backend, const BenchSettings& s) {
    const BenchItem& query = items[draw.back()];
    std::vector<ContextPair> context;
    context.reserve(draw.size() - 1);
    for (std::size_t k = 0; k + 1 < draw.size(); ++k) {
        context.push_back({items[draw[k]].grid_text, items[draw[k]].solution_text});
    }
    const PromptSequence seq = build_sequence(context, query.grid_text);
    if (const auto problem = check_sequence(seq); !problem.empty()) {
        throw GridError("trial " + std::to_string(trial_id) + ": malformed prompt: " + problem);
    }

    TrialRecord rec;
    rec.trial_id = trial_id;
    rec.query_index = query.index;
    rec.prompt_chars = seq.total_chars();
    if (s.max_prompt_chars > 0 && rec.prompt_chars > s.max_prompt_chars) {
        rec.reason = "prompt of " + std::to_string(rec.prompt_chars) + " chars exceeds budget of " +
                     std::to_string(s.max_prompt_chars);
        return rec;
    }

    TrialRequest request{seq, std::nullopt};
    if (backend.needs_reference()) request.reference_solution = encode_solution(query.truth, kExactDecimals);
    CompletionResult reply;
    try {
        reply = backend.complete(request);
    } catch (const TransportError& e) {
        rec.reason = std::string("endpoint error: ") + e.what();
        return rec;
    } catch (const ProtocolError& e) {
        rec.reason = std::string("endpoint error: ") + e.what();
        return rec;
    }
    rec.response_chars = reply.text.size();
    rec.latency_ms = reply.latency_ms;
    rec.attempts = reply.attempts;
    rec.retries = reply.retries;

    const SolutionParse parsed = parse_solution_doc(reply.text);
    if (!parsed.valid()) {
        rec.reason = parsed.reason;
        return rec;
    }
    try {
        const MseTriple mse = score(*parsed.doc, query.truth, base_mva);
        rec.valid = true;
        rec.mse_gen = mse.gen;
        rec.mse_slack = mse.slack;
        rec.mse_bus = mse.bus;
    } catch (const ScoringError& e) {
        rec.reason = std::string("missing or invalid values: ") + e.what();
    }
    return rec;
}

}  // namespace

EvalReport run_benchmark(const std::vector<BenchItem>& items, double base_mva, ChatBackend& backend,
                         const BenchSettings& s, json config, std::ostream* log) {
    const auto draws = partition_trials(items.size(), s);
    const int n = s.trials;

    std::vector<std::optional<TrialRecord>> done(static_cast<std::size_t>(n));
    std::mutex commit_mutex;
    int next_commit = 0;
    std::atomic<int> next_trial{0};
    std::atomic<bool> abort{false};
    std::exception_ptr failure;

    auto commit = [&](TrialRecord rec) {
        std::lock_guard lock(commit_mutex);
        done[static_cast<std::size_t>(rec.trial_id)] = std::move(rec);
        while (next_commit < n && done[static_cast<std::size_t>(next_commit)]) {
            if (log) *log << trial_to_json(*done[static_cast<std::size_t>(next_commit)]).dump() << '\n' << std::flush;
            ++next_commit;
        }
    };
    auto worker = [&] {
        for (int t = next_trial++; t < n && !abort; t = next_trial++) {
            try {
                commit(run_trial(t, draws[static_cast<std::size_t>(t)], items, base_mva, backend, s));
            } catch (...) {
                std::lock_guard lock(commit_mutex);
                if (!failure) failure = std::current_exception();
                abort = true;
            }
        }
    };

    const int workers = std::min(s.concurrency, n);
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<TrialRecord> records;
    records.reserve(done.size());
    for (auto& r : done) records.push_back(std::move(*r));
    return aggregate(std::move(records), std::move(config));
}

}  // namespace gridprompt
