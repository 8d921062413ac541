#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "educe/train.hpp"

namespace educe {

// Flat key = value run configuration. Unknown keys are rejected; referenced
// input paths must exist at parse time.
struct RunConfig {
    TrainConfig train;

    std::string train_path;
    std::string val_path;
    std::string test_path;
    std::string embeddings_path = "none";  // "none" = seeded random vectors
    double embedding_scale = 1.0;
    std::uint64_t embedding_seed = 12345;

    std::vector<double> split_fractions;  // applied to train_path when val is absent
    std::uint64_t split_seed = 7777;

    std::size_t min_count = 1;
    std::size_t n_classes = 0;  // 0 = infer from data
    std::string out_dir = "run";

    bool argmax_eval = false;
    std::size_t neutral_label = 2;
    std::size_t word_label_count = 5;
};

RunConfig default_config();

// `overrides` are "key=value" pairs applied after the file (flags beat keys).
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig parse_config_lines(const std::vector<std::string>& lines, const std::string& origin,
                             const std::vector<std::string>& overrides = {});

// Canonical snapshot: every key, one per line, stable order. A run is fully
// reproducible from this text.
std::string render_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace educe
