#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pmrl/discovery.hpp"
#include "pmrl/eventlog.hpp"

namespace pmrl {

struct TraceFitness {
    std::string case_id;
    double fitness = 1.0;
    std::size_t matched = 0;
    std::size_t total = 0;  // adjacent pairs in the trace
};

struct FitnessReport {
    double log_fitness = 1.0;
    std::vector<TraceFitness> per_trace;
    bool vacuous = false;  // empty log scored by convention
};

// Fraction of adjacent activity pairs that are edges of the model. Single-event
// traces score 1. Activities absent from the model alphabet never match.
double trace_fitness(const Trace& trace, const ProcessModel& model);

// Pair-weighted aggregate over all traces; 1.0 when no trace contributes pairs.
FitnessReport log_fitness(const EventLog& log, const ProcessModel& model);

std::string format_fitness_report(const FitnessReport& report);

}  // namespace pmrl
