#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "began/nn.hpp"

namespace began {

// Everything a training run needs. Defaults follow the reference setup:
// gamma 0.5, lambda_k 0.001, eta 1, batch 16, lr 1e-4, N_h = N_z = 64.
struct RunConfig {
    ArchConfig arch;

    double gamma = 0.5;
    double lambda_k = 0.001;
    int eta = 1;
    int batch_size = 16;
    double lr = 0.0001;
    long steps = 3000;
    uint64_t seed = 1;
    long checkpoint_interval = 1000;
    long patience = 2000;

    // "<family>:<count>" for synthetic corpora or "dir:<path>"
    std::string dataset = "ellipses:2000";
    std::string out_dir = "";

    void validate() const;
};

struct ConfigError : std::runtime_error {
    ConfigError(const std::string& msg, int line) : std::runtime_error(msg), line_number(line) {}
    int line_number;
};

// Line-oriented `key = value` UTF-8 file; '#' starts a comment. Unknown keys
// raise ConfigError carrying the offending line number.
RunConfig parse_config_file(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value, int line_number);

// Dump that reparses to the identical configuration.
std::string dump_config(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::string& path);

}  // namespace began
