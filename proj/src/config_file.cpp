#include "ingra/config_file.hpp"

#include <charconv>
#include <fstream>

#include "ingra/error.hpp"

namespace ingra {
namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ConfigError("config key '" + key + "': cannot parse value '" + value + "'");
    return out;
}

} // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path);
    std::map<std::string, std::string> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string stripped = trim(line);
        if (stripped.empty()) continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
        if (!entries.emplace(key, value).second)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");
    }
    return entries;
}

void apply_model_config(const std::map<std::string, std::string>& entries, ModelConfig& cfg) {
    for (const auto& [key, value] : entries) {
        if (key == "num_variables") cfg.num_variables = parse_number<Index>(key, value);
        else if (key == "target_index") cfg.target_index = parse_number<Index>(key, value);
        else if (key == "window_length") cfg.window_length = parse_number<Index>(key, value);
        else if (key == "hidden_size") cfg.hidden_size = parse_number<Index>(key, value);
        else if (key == "num_prototypes") cfg.num_prototypes = parse_number<Index>(key, value);
        else if (key == "alpha") cfg.alpha = parse_number<double>(key, value);
        else if (key == "tau") cfg.tau = parse_number<double>(key, value);
        else if (key == "lambda1") cfg.lambda1 = parse_number<double>(key, value);
        else if (key == "lambda2") cfg.lambda2 = parse_number<double>(key, value);
        else if (key == "gamma") cfg.gamma = parse_number<double>(key, value);
        else if (key == "batch_size") cfg.batch_size = parse_number<Index>(key, value);
        else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
        else if (key == "pretrain_epochs") cfg.pretrain_epochs = parse_number<Index>(key, value);
        else if (key == "train_epochs") cfg.train_epochs = parse_number<Index>(key, value);
        else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
        else throw ConfigError("unknown config key '" + key + "'");
    }
}

} // namespace ingra
