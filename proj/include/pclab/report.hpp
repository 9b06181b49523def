#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace pclab {

inline constexpr const char* kVersion = "0.1.0";

// With PCLAB_DETERMINISTIC_TIME set (non-empty, not "0"), elapsed_ms is pinned
// to 0 so identical configs produce byte-identical reports.
inline bool deterministic_time() {
    const char* v = std::getenv("PCLAB_DETERMINISTIC_TIME");
    return v != nullptr && v[0] != '\0' && std::string(v) != "0";
}

class Stopwatch {
  public:
    std::int64_t elapsed_ms() const {
        if (deterministic_time()) return 0;
        return std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t0_)
            .count();
    }

  private:
    using clock = std::chrono::steady_clock;
    clock::time_point t0_ = clock::now();
};

inline nlohmann::json make_report(const std::string& experiment, nlohmann::json params,
                                  nlohmann::json estimate, nlohmann::json stderr_value,
                                  std::int64_t samples, std::uint64_t seed,
                                  std::int64_t elapsed_ms) {
    return nlohmann::json{{"experiment", experiment},
                          {"params", std::move(params)},
                          {"estimate", std::move(estimate)},
                          {"stderr", std::move(stderr_value)},
                          {"samples", samples},
                          {"seed", seed},
                          {"elapsed_ms", elapsed_ms},
                          {"version", kVersion}};
}

namespace detail {

inline void flatten_json(const nlohmann::json& j, const std::string& prefix,
                         std::vector<std::pair<std::string, std::string>>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten_json(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            flatten_json(j[i], prefix + "[" + std::to_string(i) + "]", out);
    } else {
        out.emplace_back(prefix, j.is_string() ? j.get<std::string>() : j.dump());
    }
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string r = "\"";
    for (char c : s) {
        if (c == '"') r += '"';
        r += c;
    }
    r += "\"";
    return r;
}

}  // namespace detail

// One row per report: columns are the flattened JSON keys.
inline std::string report_to_csv(const nlohmann::json& report) {
    std::vector<std::pair<std::string, std::string>> cells;
    detail::flatten_json(report, "", cells);
    std::ostringstream head, row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) {
            head << ',';
            row << ',';
        }
        head << detail::csv_escape(cells[i].first);
        row << detail::csv_escape(cells[i].second);
    }
    head << '\n' << row.str() << '\n';
    return head.str();
}

}  // namespace pclab
