#include "pmrl/eventlog.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "pmrl/rng.hpp"

namespace pmrl {

namespace {

std::vector<std::string> split(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == delimiter) {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

}  // namespace

EventTable parse_table(std::istream& in, char delimiter, bool has_header,
                       const std::string& origin) {
    EventTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_width = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split(line, delimiter);
        if (!have_width) {
            have_width = true;
            if (has_header) {
                table.column_names = std::move(fields);
                continue;
            }
            table.column_names.resize(fields.size());
            for (std::size_t i = 0; i < fields.size(); ++i) {
                table.column_names[i] = "col_" + std::to_string(i);
            }
        }
        if (fields.size() != table.n_columns()) {
            throw std::runtime_error(origin + ": row at line " + std::to_string(line_no) +
                                     " has " + std::to_string(fields.size()) +
                                     " values, expected " + std::to_string(table.n_columns()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (table.n_columns() < 3) {
        throw std::runtime_error(origin + ": table needs at least 3 columns, found " +
                                 std::to_string(table.n_columns()));
    }
    return table;
}

EventTable load_table(const std::string& path, char delimiter, bool has_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_table: cannot open " + path);
    return parse_table(in, delimiter, has_header, path);
}

void write_table(const EventTable& table, const std::string& path, char delimiter) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_table: cannot open " + path);
    auto emit_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            const std::string& v = row[i];
            if (v.find(delimiter) != std::string::npos || v.find('\n') != std::string::npos) {
                throw std::runtime_error("write_table: value contains delimiter or newline: " + v);
            }
            if (i) out << delimiter;
            out << v;
        }
        out << '\n';
    };
    emit_row(table.column_names);
    for (const auto& row : table.rows) emit_row(row);
    if (!out) throw std::runtime_error("write_table: write failed for " + path);
}

void validate_mapping(const ColumnMapping& mapping, std::size_t n_columns) {
    const std::size_t cols[3] = {mapping.case_col, mapping.activity_col, mapping.resource_col};
    for (std::size_t c : cols) {
        if (c >= n_columns) {
            throw std::invalid_argument("column index " + std::to_string(c) +
                                        " out of range for " + std::to_string(n_columns) +
                                        " columns");
        }
    }
    if (cols[0] == cols[1] || cols[0] == cols[2] || cols[1] == cols[2]) {
        throw std::invalid_argument("case, activity and resource columns must be distinct");
    }
    if (mapping.timestamp_col && *mapping.timestamp_col >= n_columns) {
        throw std::invalid_argument("timestamp column index " +
                                    std::to_string(*mapping.timestamp_col) +
                                    " out of range for " + std::to_string(n_columns) +
                                    " columns");
    }
}

EventLog build_log(const EventTable& table, const ColumnMapping& mapping) {
    validate_mapping(mapping, table.n_columns());
    EventLog log;
    std::unordered_map<std::string, std::size_t> trace_of_case;
    for (const auto& row : table.rows) {
        const std::string& case_id = row[mapping.case_col];
        auto [it, inserted] = trace_of_case.try_emplace(case_id, log.traces.size());
        if (inserted) log.traces.push_back(Trace{case_id, {}});
        Event ev;
        ev.activity = row[mapping.activity_col];
        ev.resource = row[mapping.resource_col];
        if (mapping.timestamp_col) ev.timestamp = row[*mapping.timestamp_col];
        log.traces[it->second].events.push_back(std::move(ev));
    }
    if (mapping.timestamp_col) {
        for (auto& trace : log.traces) {
            std::stable_sort(trace.events.begin(), trace.events.end(),
                             [](const Event& a, const Event& b) {
                                 return *a.timestamp < *b.timestamp;
                             });
        }
    }
    std::unordered_map<std::string, bool> seen;
    for (const auto& trace : log.traces) {
        for (const auto& ev : trace.events) {
            if (seen.try_emplace(ev.activity, true).second) log.alphabet.push_back(ev.activity);
        }
    }
    return log;
}

ColumnMapping planted_mapping() { return ColumnMapping{0, 1, 2, std::nullopt}; }

EventTable generate_synthetic_table(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.n_cases == 0) throw std::invalid_argument("synthetic table needs n_cases >= 1");
    if (spec.sequence.empty()) throw std::invalid_argument("synthetic table needs a non-empty sequence");
    if (!spec.branch_probs.empty() && spec.branch_probs.size() != spec.sequence.size()) {
        throw std::invalid_argument("branch_probs length must match sequence length");
    }
    for (double p : spec.branch_probs) {
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("branch_probs values must be in [0, 1]");
    }
    if (spec.noise_rate < 0.0 || spec.noise_rate > 1.0) {
        throw std::invalid_argument("noise_rate must be in [0, 1]");
    }
    if (spec.resource_pool == 0 || spec.noise_pool == 0) {
        throw std::invalid_argument("resource_pool and noise_pool must be >= 1");
    }

    std::vector<std::string> distinct;
    for (const auto& a : spec.sequence) {
        if (std::find(distinct.begin(), distinct.end(), a) == distinct.end()) distinct.push_back(a);
    }

    Rng root(seed);
    Rng branch_rng = root.child("branch");
    Rng swap_rng = root.child("swap");
    Rng resource_rng = root.child("resource");
    Rng noise_rng = root.child("noise");

    EventTable table;
    table.column_names = {"case", "activity", "resource"};
    for (std::size_t c = 0; c < spec.n_noise_columns; ++c) {
        table.column_names.push_back("noise_" + std::to_string(c));
    }

    std::size_t digits = std::to_string(spec.n_cases).size();
    for (std::size_t k = 0; k < spec.n_cases; ++k) {
        std::string id = std::to_string(k + 1);
        std::string case_id = "C" + std::string(digits - id.size(), '0') + id;

        std::vector<std::string> realized;
        for (std::size_t i = 0; i < spec.sequence.size(); ++i) {
            if (spec.branch_probs.empty() || branch_rng.uniform() < spec.branch_probs[i]) {
                realized.push_back(spec.sequence[i]);
            }
        }
        if (realized.empty()) realized.push_back(spec.sequence.front());

        for (const std::string& planned : realized) {
            std::string activity = planned;
            if (spec.noise_rate > 0.0 && distinct.size() > 1 &&
                swap_rng.uniform() < spec.noise_rate) {
                // swap in one of the other ground-truth activities
                std::size_t pick = swap_rng.uniform_index(distinct.size() - 1);
                for (std::size_t d = 0; d < distinct.size(); ++d) {
                    if (distinct[d] == planned) continue;
                    if (pick == 0) {
                        activity = distinct[d];
                        break;
                    }
                    --pick;
                }
            }
            std::vector<std::string> row;
            row.reserve(table.n_columns());
            row.push_back(case_id);
            row.push_back(activity);
            row.push_back("R" + std::to_string(resource_rng.uniform_index(spec.resource_pool) + 1));
            for (std::size_t c = 0; c < spec.n_noise_columns; ++c) {
                row.push_back("v" + std::to_string(noise_rng.uniform_index(spec.noise_pool)));
            }
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

}  // namespace pmrl
