#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "educe/text.hpp"

namespace educe {

// Synthetic corpus whose labels are a deterministic function of which signal
// trigram families appear. Each family owns 5 disjoint trigrams over a
// private sub-vocabulary; filler comes from a shared 200-token vocabulary
// disjoint from all signal tokens.
struct PlantedSpec {
    std::size_t families = 4;
    std::vector<std::vector<std::size_t>> classes;  // family subsets; empty = all 2-subsets
    std::size_t docs_per_class = 500;
    std::size_t doc_len = 20;
    std::uint64_t seed = 0;
};

struct PlantedCorpus {
    std::vector<std::size_t> labels;
    std::vector<std::vector<std::string>> docs;     // token strings
    std::vector<std::vector<std::size_t>> classes;  // resolved family subsets
    std::size_t families = 0;
};

std::string planted_signal_token(std::size_t family, std::size_t trigram, std::size_t pos);
std::string planted_filler_token(std::size_t i);

PlantedCorpus gen_planted(const PlantedSpec& spec);

// Families whose trigrams occur contiguously in the token sequence.
std::vector<std::size_t> scan_families(const std::vector<std::string>& tokens,
                                       std::size_t families);

// Exhaustive-scan classifier; returns the class whose family subset matches
// exactly, or classes.size() if none does.
std::size_t oracle_classify(const std::vector<std::string>& tokens,
                            const std::vector<std::vector<std::size_t>>& classes,
                            std::size_t families);

void write_planted_tsv(const PlantedCorpus& corpus, const std::string& path);

}  // namespace educe
