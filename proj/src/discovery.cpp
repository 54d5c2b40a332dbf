#include "pmrl/discovery.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace pmrl {

std::uint64_t DirectlyFollowsMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

DirectlyFollowsMatrix directly_follows_counts(const EventLog& log) {
    DirectlyFollowsMatrix df;
    df.alphabet = log.alphabet;
    const std::size_t n = df.alphabet.size();
    df.counts.assign(n * n, 0);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[df.alphabet[i]] = i;
    for (const auto& trace : log.traces) {
        for (std::size_t k = 0; k + 1 < trace.events.size(); ++k) {
            std::size_t a = index.at(trace.events[k].activity);
            std::size_t b = index.at(trace.events[k + 1].activity);
            ++df.at(a, b);
        }
    }
    return df;
}

DependencyMatrix dependency_matrix(const DirectlyFollowsMatrix& df) {
    DependencyMatrix dep;
    dep.alphabet = df.alphabet;
    const std::size_t n = df.size();
    dep.dep.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double fwd = static_cast<double>(df.at(i, j));
            const double rev = static_cast<double>(df.at(j, i));
            if (i == j) {
                dep.at(i, j) = fwd / (2.0 * fwd + 1.0);
            } else {
                dep.at(i, j) = (fwd - rev) / (fwd + rev + 1.0);
            }
        }
    }
    return dep;
}

ProcessModel discover_model(const DependencyMatrix& dep, double threshold,
                            const ColumnMapping& mapping) {
    if (threshold < 0.0 || threshold > 1.0) {
        throw std::invalid_argument("discover_model: threshold must be in [0, 1]");
    }
    ProcessModel model;
    model.alphabet = dep.alphabet;
    model.threshold = threshold;
    model.mapping = mapping;
    const std::size_t n = dep.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (dep.at(i, j) >= threshold) {
                model.edges.push_back(ModelEdge{static_cast<std::uint32_t>(i),
                                               static_cast<std::uint32_t>(j), dep.at(i, j)});
            }
        }
    }
    return model;
}

std::vector<double> fuzzy_relative_significance(const DirectlyFollowsMatrix& df) {
    const std::size_t n = df.size();
    std::vector<double> row_sum(n, 0.0), col_sum(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double c = static_cast<double>(df.at(i, j));
            row_sum[i] += c;
            col_sum[j] += c;
        }
    }
    std::vector<double> rel(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double c = static_cast<double>(df.at(i, j));
            double v = 0.0;
            if (row_sum[i] > 0.0) v += 0.5 * c / row_sum[i];
            if (col_sum[j] > 0.0) v += 0.5 * c / col_sum[j];
            rel[i * n + j] = v;
        }
    }
    return rel;
}

std::vector<double> max_normalized_correlation(const DirectlyFollowsMatrix& df) {
    const std::size_t n = df.size();
    std::uint64_t max_cell = 0;
    for (std::uint64_t c : df.counts) max_cell = std::max(max_cell, c);
    std::vector<double> cor(n * n, 0.0);
    if (max_cell == 0) return cor;
    for (std::size_t k = 0; k < df.counts.size(); ++k) {
        cor[k] = static_cast<double>(df.counts[k]) / static_cast<double>(max_cell);
    }
    return cor;
}

double fuzzy_utility(double sig, double cor, double utility_ratio) {
    if (utility_ratio < 0.0 || utility_ratio > 1.0) {
        throw std::invalid_argument("fuzzy_utility: utility_ratio must be in [0, 1]");
    }
    return utility_ratio * sig + (1.0 - utility_ratio) * cor;
}

std::vector<double> fuzzy_utility_matrix(const DirectlyFollowsMatrix& df, double utility_ratio,
                                         const CorrelationMatrixFn& correlation) {
    std::vector<double> sig = fuzzy_relative_significance(df);
    std::vector<double> cor = correlation(df);
    if (cor.size() != sig.size()) {
        throw std::invalid_argument("fuzzy_utility_matrix: correlation size mismatch");
    }
    std::vector<double> util(sig.size());
    for (std::size_t k = 0; k < sig.size(); ++k) {
        util[k] = fuzzy_utility(sig[k], cor[k], utility_ratio);
    }
    return util;
}

namespace {

std::string escape_dot(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

// Reads a quoted name starting at pos (which must point at '"'). Returns the
// unescaped value and leaves pos one past the closing quote.
std::string read_quoted(const std::string& line, std::size_t& pos, std::size_t line_no) {
    if (pos >= line.size() || line[pos] != '"') {
        throw std::runtime_error("parse_dot: line " + std::to_string(line_no) +
                                 ": expected quoted name");
    }
    ++pos;
    std::string out;
    while (pos < line.size()) {
        char c = line[pos];
        if (c == '\\') {
            if (pos + 1 >= line.size()) break;
            out.push_back(line[pos + 1]);
            pos += 2;
            continue;
        }
        if (c == '"') {
            ++pos;
            return out;
        }
        out.push_back(c);
        ++pos;
    }
    throw std::runtime_error("parse_dot: line " + std::to_string(line_no) +
                             ": unterminated quoted name");
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool consume(const std::string& s, std::size_t& pos, const std::string& token) {
    if (s.compare(pos, token.size(), token) == 0) {
        pos += token.size();
        return true;
    }
    return false;
}

}  // namespace

std::string export_dot(const ProcessModel& model) {
    std::string out = "digraph model {\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "  // threshold %.6f\n", model.threshold);
    out += buf;
    out += "  rankdir=LR;\n";
    for (const auto& name : model.alphabet) {
        out += "  \"" + escape_dot(name) + "\";\n";
    }
    for (const auto& e : model.edges) {
        std::snprintf(buf, sizeof buf, "%.3f", e.dep);
        out += "  \"" + escape_dot(model.alphabet[e.src]) + "\" -> \"" +
               escape_dot(model.alphabet[e.dst]) + "\" [label=\"" + buf + "\"];\n";
    }
    out += "}\n";
    return out;
}

ProcessModel parse_dot(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    ProcessModel model;
    std::unordered_map<std::string, std::uint32_t> node_index;
    bool saw_header = false, saw_close = false;

    auto fail = [&](const std::string& what) -> std::runtime_error {
        return std::runtime_error("parse_dot: line " + std::to_string(line_no) + ": " + what);
    };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty()) continue;
        if (saw_close) throw fail("content after closing brace");
        if (!saw_header) {
            std::size_t pos = 0;
            if (!consume(line, pos, "digraph ")) throw fail("expected digraph header");
            std::size_t brace = line.find('{', pos);
            if (brace == std::string::npos || trim(line.substr(pos, brace - pos)).empty() ||
                trim(line.substr(brace + 1)) != "") {
                throw fail("expected digraph header");
            }
            saw_header = true;
            continue;
        }
        if (line == "}") {
            saw_close = true;
            continue;
        }
        if (line.rfind("//", 0) == 0) {
            std::istringstream cs(line.substr(2));
            std::string key;
            double value;
            if (cs >> key >> value && key == "threshold") model.threshold = value;
            continue;
        }
        if (line == "rankdir=LR;") continue;
        if (line[0] == '"') {
            std::size_t pos = 0;
            std::string src = read_quoted(line, pos, line_no);
            while (pos < line.size() && line[pos] == ' ') ++pos;
            if (pos < line.size() && line[pos] == ';') {
                if (trim(line.substr(pos + 1)) != "") throw fail("trailing content after node");
                if (node_index.count(src)) throw fail("duplicate node \"" + src + "\"");
                node_index[src] = static_cast<std::uint32_t>(model.alphabet.size());
                model.alphabet.push_back(src);
                continue;
            }
            if (!consume(line, pos, "-> ")) throw fail("expected node or edge statement");
            std::string dst = read_quoted(line, pos, line_no);
            while (pos < line.size() && line[pos] == ' ') ++pos;
            if (!consume(line, pos, "[label=")) throw fail("expected edge label");
            std::string label = read_quoted(line, pos, line_no);
            if (!consume(line, pos, "];") || trim(line.substr(pos)) != "") {
                throw fail("malformed edge statement");
            }
            auto si = node_index.find(src);
            auto di = node_index.find(dst);
            if (si == node_index.end() || di == node_index.end()) {
                throw fail("edge references undeclared node");
            }
            std::size_t used = 0;
            double dep = 0.0;
            try {
                dep = std::stod(label, &used);
            } catch (const std::exception&) {
                throw fail("edge label is not a number");
            }
            if (used != label.size()) throw fail("edge label is not a number");
            model.edges.push_back(ModelEdge{si->second, di->second, dep});
            continue;
        }
        throw fail("unsupported statement");
    }
    if (!saw_header) throw std::runtime_error("parse_dot: line 1: expected digraph header");
    if (!saw_close) throw std::runtime_error("parse_dot: missing closing brace");
    return model;
}

ProcessModel load_dot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dot: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dot(ss.str());
}

}  // namespace pmrl
