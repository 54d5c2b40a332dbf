#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pmrl/eventlog.hpp"

namespace testutil {

// Builds a log directly from activity sequences; case ids t0, t1, ...
inline pmrl::EventLog make_log(const std::vector<std::vector<std::string>>& traces) {
    pmrl::EventLog log;
    std::size_t i = 0;
    for (const auto& acts : traces) {
        pmrl::Trace trace;
        trace.case_id = "t" + std::to_string(i++);
        for (const auto& a : acts) {
            pmrl::Event ev;
            ev.activity = a;
            ev.resource = "r";
            trace.events.push_back(std::move(ev));
            bool seen = false;
            for (const auto& known : log.alphabet) {
                if (known == a) {
                    seen = true;
                    break;
                }
            }
            if (!seen) log.alphabet.push_back(a);
        }
        log.traces.push_back(std::move(trace));
    }
    return log;
}

template <class E, class Fn>
std::string catch_message(Fn&& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    } catch (...) {
        return "<wrong exception type>";
    }
    return "<no exception>";
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("pmrl_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace testutil
