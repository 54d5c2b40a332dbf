#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pmrl {

struct EventTable {
    std::vector<std::string> column_names;
    std::vector<std::vector<std::string>> rows;

    std::size_t n_columns() const { return column_names.size(); }
};

struct ColumnMapping {
    std::size_t case_col = 0;
    std::size_t activity_col = 1;
    std::size_t resource_col = 2;
    std::optional<std::size_t> timestamp_col;
};

struct Event {
    std::string activity;
    std::string resource;
    std::optional<std::string> timestamp;
};

struct Trace {
    std::string case_id;
    std::vector<Event> events;
};

struct EventLog {
    std::vector<Trace> traces;     // case first-occurrence order
    std::vector<std::string> alphabet;  // activity first-occurrence order
};

// Plain delimiter-separated text, no quoting. Rows must all have the width of
// the header (or of the first row when has_header is false).
EventTable load_table(const std::string& path, char delimiter = ',', bool has_header = true);
EventTable parse_table(std::istream& in, char delimiter, bool has_header,
                       const std::string& origin);
void write_table(const EventTable& table, const std::string& path, char delimiter = ',');

void validate_mapping(const ColumnMapping& mapping, std::size_t n_columns);

// Groups rows into traces by the case column. Events keep row order unless a
// timestamp column is mapped, in which case they are stable-sorted by its
// lexicographic value.
EventLog build_log(const EventTable& table, const ColumnMapping& mapping);

struct SynthSpec {
    std::size_t n_cases = 1;
    std::vector<std::string> sequence;     // ground-truth activity order
    std::vector<double> branch_probs;      // per-activity inclusion; empty = always
    std::size_t n_noise_columns = 0;
    double noise_rate = 0.0;               // chance an emitted activity is swapped
    std::size_t resource_pool = 4;
    std::size_t noise_pool = 8;            // distinct values per noise column
};

// Columns: case, activity, resource, then noise columns. The (0,1,2) mapping
// replays the ground truth; everything else is generator noise.
EventTable generate_synthetic_table(const SynthSpec& spec, std::uint64_t seed);

ColumnMapping planted_mapping();

}  // namespace pmrl
