#include "pmrl/conformance.hpp"

#include <cstdio>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace pmrl {

namespace {

struct ModelIndex {
    std::unordered_map<std::string, std::uint32_t> activity;
    std::unordered_set<std::uint64_t> edges;

    explicit ModelIndex(const ProcessModel& model) {
        activity.reserve(model.alphabet.size());
        for (std::size_t i = 0; i < model.alphabet.size(); ++i) {
            activity[model.alphabet[i]] = static_cast<std::uint32_t>(i);
        }
        edges.reserve(model.edges.size());
        for (const auto& e : model.edges) {
            edges.insert((static_cast<std::uint64_t>(e.src) << 32) | e.dst);
        }
    }

    bool has_edge(const std::string& a, const std::string& b) const {
        auto ia = activity.find(a);
        auto ib = activity.find(b);
        if (ia == activity.end() || ib == activity.end()) return false;
        return edges.count((static_cast<std::uint64_t>(ia->second) << 32) | ib->second) != 0;
    }
};

TraceFitness replay_trace(const Trace& trace, const ModelIndex& index) {
    if (trace.events.empty()) {
        throw std::invalid_argument("trace_fitness: trace has no events");
    }
    TraceFitness tf;
    tf.case_id = trace.case_id;
    tf.total = trace.events.size() - 1;
    for (std::size_t k = 0; k + 1 < trace.events.size(); ++k) {
        if (index.has_edge(trace.events[k].activity, trace.events[k + 1].activity)) ++tf.matched;
    }
    tf.fitness = tf.total == 0 ? 1.0
                               : static_cast<double>(tf.matched) / static_cast<double>(tf.total);
    return tf;
}

}  // namespace

double trace_fitness(const Trace& trace, const ProcessModel& model) {
    return replay_trace(trace, ModelIndex(model)).fitness;
}

FitnessReport log_fitness(const EventLog& log, const ProcessModel& model) {
    ModelIndex index(model);
    FitnessReport report;
    std::size_t matched = 0, total = 0;
    for (const auto& trace : log.traces) {
        TraceFitness tf = replay_trace(trace, index);
        matched += tf.matched;
        total += tf.total;
        report.per_trace.push_back(std::move(tf));
    }
    report.vacuous = log.traces.empty();
    report.log_fitness =
        total == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(total);
    return report;
}

std::string format_fitness_report(const FitnessReport& report) {
    std::string out = "case_id,trace_fitness,matched,total\n";
    char buf[64];
    for (const auto& tf : report.per_trace) {
        std::snprintf(buf, sizeof buf, ",%.6f,%zu,%zu\n", tf.fitness, tf.matched, tf.total);
        out += tf.case_id;
        out += buf;
    }
    return out;
}

}  // namespace pmrl
