#include "began/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace began {

void RunConfig::validate() const {
    arch.validate();
    if (gamma < 0.0 || gamma > 1.0) {
        throw std::invalid_argument("gamma must be in [0,1], got " + std::to_string(gamma));
    }
    if (!(lambda_k > 0.0)) throw std::invalid_argument("lambda_k must be > 0");
    if (eta != 1 && eta != 2) throw std::invalid_argument("eta must be 1 or 2");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (checkpoint_interval < 0) throw std::invalid_argument("checkpoint_interval must be >= 0");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (dataset.empty()) throw std::invalid_argument("dataset must not be empty");
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, int line) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + v + "'", line);
}

std::string fmt_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value, int line) {
    try {
        if (key == "image_size") cfg.arch.image_size = std::stoi(value);
        else if (key == "channels") cfg.arch.channels = std::stoi(value);
        else if (key == "filters") cfg.arch.base_filters = std::stoi(value);
        else if (key == "repeats") cfg.arch.repeats_per_block = std::stoi(value);
        else if (key == "nh") cfg.arch.n_h = std::stoi(value);
        else if (key == "nz") cfg.arch.n_z = std::stoi(value);
        else if (key == "skip_connections") cfg.arch.use_skip_connections = parse_bool(value, line);
        else if (key == "vanishing_residuals") cfg.arch.use_vanishing_residuals = parse_bool(value, line);
        else if (key == "carry_steps") cfg.arch.carry_decay_steps = std::stoi(value);
        else if (key == "gamma") cfg.gamma = std::stod(value);
        else if (key == "lambda_k") cfg.lambda_k = std::stod(value);
        else if (key == "eta") cfg.eta = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "lr") cfg.lr = std::stod(value);
        else if (key == "steps") cfg.steps = std::stol(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "checkpoint_interval") cfg.checkpoint_interval = std::stol(value);
        else if (key == "patience") cfg.patience = std::stol(value);
        else if (key == "dataset") cfg.dataset = value;
        else if (key == "out") cfg.out_dir = value;
        else throw ConfigError("unknown key '" + key + "'", line);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("invalid value '" + value + "' for key '" + key + "'", line);
    }
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config file " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        apply_config_line(cfg, key, value, lineno);
    }
    return cfg;
}

std::string dump_config(const RunConfig& c) {
    std::ostringstream os;
    os << "image_size = " << c.arch.image_size << '\n';
    os << "channels = " << c.arch.channels << '\n';
    os << "filters = " << c.arch.base_filters << '\n';
    os << "repeats = " << c.arch.repeats_per_block << '\n';
    os << "nh = " << c.arch.n_h << '\n';
    os << "nz = " << c.arch.n_z << '\n';
    os << "skip_connections = " << (c.arch.use_skip_connections ? 1 : 0) << '\n';
    os << "vanishing_residuals = " << (c.arch.use_vanishing_residuals ? 1 : 0) << '\n';
    os << "carry_steps = " << c.arch.carry_decay_steps << '\n';
    os << "gamma = " << fmt_exact(c.gamma) << '\n';
    os << "lambda_k = " << fmt_exact(c.lambda_k) << '\n';
    os << "eta = " << c.eta << '\n';
    os << "batch_size = " << c.batch_size << '\n';
    os << "lr = " << fmt_exact(c.lr) << '\n';
    os << "steps = " << c.steps << '\n';
    os << "seed = " << c.seed << '\n';
    os << "checkpoint_interval = " << c.checkpoint_interval << '\n';
    os << "patience = " << c.patience << '\n';
    os << "dataset = " << c.dataset << '\n';
    if (!c.out_dir.empty()) os << "out = " << c.out_dir << '\n';
    return os.str();
}

void write_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write config " + path);
    os << dump_config(cfg);
    if (!os) throw std::runtime_error("config write failed: " + path);
}

}  // namespace began
