#pragma once

// Flat-key JSON configuration files. Every key is optional; unknown keys
// are rejected by name.

#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "fedbud/common.hpp"
#include "fedbud/config.hpp"

namespace fedbud {

namespace detail {

using json = nlohmann::json;

template <class T>
T read_as(const json& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(key, "expected a boolean");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError(key, "expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(key, "expected a number");
        }
        return v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

inline std::optional<double> read_optional(const json& v, const std::string& key) {
    if (v.is_null() || (v.is_string() && v.get<std::string>() == "auto")) return std::nullopt;
    return read_as<double>(v, key);
}

template <class T>
std::vector<T> read_list(const json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError(key, "expected an array");
    std::vector<T> out;
    for (const auto& item : v) out.push_back(read_as<T>(item, key));
    return out;
}

using Setter = std::function<void(SystemConfig&, const json&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
    static const std::map<std::string, Setter> setters = {
        {"horizon", [](auto& c, const auto& v, const auto& k) { c.horizon = read_as<int>(v, k); }},
        {"nodes", [](auto& c, const auto& v, const auto& k) { c.nodes = read_as<int>(v, k); }},
        {"eta", [](auto& c, const auto& v, const auto& k) { c.lc.eta = read_as<double>(v, k); }},
        {"big_c", [](auto& c, const auto& v, const auto& k) { c.lc.big_c = read_as<double>(v, k); }},
        {"rho", [](auto& c, const auto& v, const auto& k) { c.lc.rho = read_as<double>(v, k); }},
        {"mu", [](auto& c, const auto& v, const auto& k) { c.lc.mu = read_as<double>(v, k); }},
        {"dim", [](auto& c, const auto& v, const auto& k) { c.lc.dim = read_as<int>(v, k); }},
        {"gamma1", [](auto& c, const auto& v, const auto& k) { c.gamma1 = read_optional(v, k); }},
        {"gamma1_target_volume",
         [](auto& c, const auto& v, const auto& k) { c.gamma1_target_volume = read_as<double>(v, k); }},
        {"gamma2", [](auto& c, const auto& v, const auto& k) { c.gamma2 = read_as<double>(v, k); }},
        {"alpha_min", [](auto& c, const auto& v, const auto& k) { c.alpha_min = read_as<double>(v, k); }},
        {"alpha_max", [](auto& c, const auto& v, const auto& k) { c.alpha_max = read_as<double>(v, k); }},
        {"beta_min", [](auto& c, const auto& v, const auto& k) { c.beta_min = read_as<double>(v, k); }},
        {"beta_max", [](auto& c, const auto& v, const auto& k) { c.beta_max = read_as<double>(v, k); }},
        {"n_cap", [](auto& c, const auto& v, const auto& k) { c.n_cap = read_optional(v, k); }},
        {"m_cap", [](auto& c, const auto& v, const auto& k) { c.m_cap = read_optional(v, k); }},
        {"budget_stiffness",
         [](auto& c, const auto& v, const auto& k) { c.budget_stiffness = read_as<double>(v, k); }},
        {"tol", [](auto& c, const auto& v, const auto& k) { c.eq.tol = read_as<double>(v, k); }},
        {"max_iters", [](auto& c, const auto& v, const auto& k) { c.eq.max_iters = read_as<int>(v, k); }},
        {"damping", [](auto& c, const auto& v, const auto& k) { c.eq.damping = read_as<double>(v, k); }},
        {"adaptive_damping",
         [](auto& c, const auto& v, const auto& k) { c.eq.adaptive_damping = read_as<bool>(v, k); }},
        {"phi_min", [](auto& c, const auto& v, const auto& k) { c.eq.phi_min = read_as<double>(v, k); }},
        {"phi0", [](auto& c, const auto& v, const auto& k) { c.eq.phi0 = read_optional(v, k); }},
        {"warm_start", [](auto& c, const auto& v, const auto& k) { c.warm_start = read_as<bool>(v, k); }},
        {"pool_size", [](auto& c, const auto& v, const auto& k) { c.pool_size = read_as<int>(v, k); }},
        {"shift", [](auto& c, const auto& v, const auto& k) { c.shift = read_as<double>(v, k); }},
        {"label_noise", [](auto& c, const auto& v, const auto& k) { c.label_noise = read_as<double>(v, k); }},
        {"steps", [](auto& c, const auto& v, const auto& k) { c.steps = read_as<int>(v, k); }},
        {"dp_noise", [](auto& c, const auto& v, const auto& k) { c.dp_noise = read_as<bool>(v, k); }},
        {"policy",
         [](auto& c, const auto& v, const auto& k) {
             if (!v.is_string()) throw ConfigError(k, "expected \"abort\" or \"carry-forward\"");
             const auto s = v.template get<std::string>();
             if (s == "abort")
                 c.policy = FailurePolicy::abort;
             else if (s == "carry-forward")
                 c.policy = FailurePolicy::carry_forward;
             else
                 throw ConfigError(k, "unknown policy \"" + s + "\"");
         }},
        {"seed", [](auto& c, const auto& v, const auto& k) { c.seed = read_as<std::uint64_t>(v, k); }},
        {"threads", [](auto& c, const auto& v, const auto& k) { c.threads = read_as<int>(v, k); }},
        {"sweep_gamma1_factors",
         [](auto& c, const auto& v, const auto& k) { c.sweep_gamma1_factors = read_list<double>(v, k); }},
        {"sweep_nodes", [](auto& c, const auto& v, const auto& k) { c.sweep_nodes = read_list<int>(v, k); }},
        {"sweep_seeds", [](auto& c, const auto& v, const auto& k) { c.sweep_seeds = read_as<int>(v, k); }},
        {"baseline_constant_factors",
         [](auto& c, const auto& v, const auto& k) { c.baseline_constant_factors = read_list<double>(v, k); }},
        {"verify_instances",
         [](auto& c, const auto& v, const auto& k) { c.verify_instances = read_as<int>(v, k); }},
        {"write_task_snapshot",
         [](auto& c, const auto& v, const auto& k) { c.write_task_snapshot = read_as<bool>(v, k); }},
    };
    return setters;
}

}  // namespace detail

inline SystemConfig parse_config(const std::string& text) {
    detail::json doc;
    try {
        doc = detail::json::parse(text);
    } catch (const detail::json::parse_error& e) {
        throw ConfigError("<file>", std::string("parse error: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("<file>", "top level must be an object");
    SystemConfig cfg;
    const auto& setters = detail::config_setters();
    for (const auto& [key, value] : doc.items()) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError(key, "unknown configuration key");
        it->second(cfg, value, key);
    }
    cfg.validate();
    return cfg;
}

inline SystemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

inline std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : detail::config_setters()) keys.push_back(k);
    return keys;
}

}  // namespace fedbud
