#include "spikerep/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace spikerep {

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw std::invalid_argument("config: top-level document must be an object");
    PipelineConfig cfg;
    std::set<std::string> known;
    cfg.for_each_field([&](const char* key, auto& field) {
        known.insert(key);
        auto it = j.find(key);
        if (it != j.end()) field = it->get<std::decay_t<decltype(field)>>();
    });
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    const_cast<PipelineConfig*>(this)->for_each_field(
        [&](const char* key, auto& field) { j[key] = field; });
    return j;
}

}  // namespace spikerep
