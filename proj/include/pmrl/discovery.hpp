#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pmrl/eventlog.hpp"

namespace pmrl {

struct DirectlyFollowsMatrix {
    std::vector<std::string> alphabet;
    std::vector<std::uint64_t> counts;  // row-major, counts[i*n+j] = |i directly followed by j|

    std::size_t size() const { return alphabet.size(); }
    std::uint64_t at(std::size_t i, std::size_t j) const { return counts[i * size() + j]; }
    std::uint64_t& at(std::size_t i, std::size_t j) { return counts[i * size() + j]; }
    std::uint64_t total() const;
};

struct DependencyMatrix {
    std::vector<std::string> alphabet;
    std::vector<double> dep;  // row-major

    std::size_t size() const { return alphabet.size(); }
    double at(std::size_t i, std::size_t j) const { return dep[i * size() + j]; }
    double& at(std::size_t i, std::size_t j) { return dep[i * size() + j]; }
};

struct ModelEdge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    double dep = 0.0;
};

struct ProcessModel {
    std::vector<std::string> alphabet;
    std::vector<ModelEdge> edges;  // sorted by (src, dst)
    double threshold = 0.0;
    ColumnMapping mapping;
};

DirectlyFollowsMatrix directly_follows_counts(const EventLog& log);

// dep(i,j) = (c_ij - c_ji) / (c_ij + c_ji + 1) off the diagonal; the diagonal
// keeps the self-loop strength c_ii / (2*c_ii + 1).
DependencyMatrix dependency_matrix(const DirectlyFollowsMatrix& df);

// Keeps every cell with dep >= threshold as an edge. threshold in [0, 1].
ProcessModel discover_model(const DependencyMatrix& dep, double threshold,
                            const ColumnMapping& mapping = ColumnMapping{});

// Relative significance of each cell against its row and column mass; a term
// whose denominator is zero contributes zero. Row-major n*n result.
std::vector<double> fuzzy_relative_significance(const DirectlyFollowsMatrix& df);

// Counts scaled by the global maximum cell; all-zero input stays zero.
std::vector<double> max_normalized_correlation(const DirectlyFollowsMatrix& df);

using CorrelationMatrixFn = std::function<std::vector<double>(const DirectlyFollowsMatrix&)>;

// util = ur * sig + (1 - ur) * cor, ur in [0, 1].
double fuzzy_utility(double sig, double cor, double utility_ratio);

std::vector<double> fuzzy_utility_matrix(const DirectlyFollowsMatrix& df, double utility_ratio,
                                         const CorrelationMatrixFn& correlation = max_normalized_correlation);

// Deterministic text: nodes in alphabet order, then edges sorted by (src, dst)
// with the dependency value as a 3-decimal label.
std::string export_dot(const ProcessModel& model);

// Accepts only the subset export_dot emits. Errors carry the offending line number.
ProcessModel parse_dot(const std::string& text);
ProcessModel load_dot(const std::string& path);

}  // namespace pmrl
