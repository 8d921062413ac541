#include "educe/planted.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "educe/rng.hpp"

namespace educe {

namespace {
constexpr std::size_t kTrigramsPerFamily = 5;
constexpr std::size_t kFillerVocab = 200;
}  // namespace

std::string planted_signal_token(std::size_t family, std::size_t trigram, std::size_t pos) {
    return "sig" + std::to_string(family) + "t" + std::to_string(trigram) + "w" +
           std::to_string(pos);
}

std::string planted_filler_token(std::size_t i) {
    return "fill" + std::to_string(i);
}

PlantedCorpus gen_planted(const PlantedSpec& spec) {
    PlantedCorpus corpus;
    corpus.families = spec.families;
    corpus.classes = spec.classes;
    if (corpus.classes.empty()) {
        for (std::size_t a = 0; a < spec.families; ++a)
            for (std::size_t b = a + 1; b < spec.families; ++b)
                corpus.classes.push_back({a, b});
    }
    for (const auto& subset : corpus.classes) {
        std::set<std::size_t> seen;
        for (auto f : subset) {
            if (f >= spec.families)
                throw DataError("gen_planted: class references family " + std::to_string(f));
            if (!seen.insert(f).second) throw DataError("gen_planted: duplicate family in class");
        }
    }

    std::size_t largest = 0;
    for (const auto& subset : corpus.classes) largest = std::max(largest, subset.size());
    if (spec.doc_len < 3 * largest + 2)
        throw CapacityError("gen_planted: doc_len " + std::to_string(spec.doc_len) +
                            " cannot hold " + std::to_string(largest) +
                            " non-overlapping trigrams plus filler");

    Rng rng(spec.seed);
    for (std::size_t cls = 0; cls < corpus.classes.size(); ++cls) {
        const auto& subset = corpus.classes[cls];
        for (std::size_t d = 0; d < spec.docs_per_class; ++d) {
            const std::size_t k = subset.size();
            // non-overlapping block placement: sample k offsets into the free
            // space, sort, and shift each block past the ones before it
            const std::size_t free_space = spec.doc_len - 3 * k;
            std::vector<std::size_t> offsets(k);
            for (auto& o : offsets) o = rng.below(free_space + 1);
            std::sort(offsets.begin(), offsets.end());
            std::vector<std::size_t> starts(k);
            for (std::size_t i = 0; i < k; ++i) starts[i] = offsets[i] + 3 * i;

            std::vector<std::size_t> fam_order(subset);
            rng.shuffle(fam_order);

            std::vector<std::string> doc(spec.doc_len);
            std::vector<bool> taken(spec.doc_len, false);
            for (std::size_t i = 0; i < k; ++i) {
                const std::size_t fam = fam_order[i];
                const std::size_t tri = rng.below(kTrigramsPerFamily);
                for (std::size_t p = 0; p < 3; ++p) {
                    doc[starts[i] + p] = planted_signal_token(fam, tri, p);
                    taken[starts[i] + p] = true;
                }
            }
            for (std::size_t pos = 0; pos < spec.doc_len; ++pos)
                if (!taken[pos]) doc[pos] = planted_filler_token(rng.below(kFillerVocab));

            corpus.labels.push_back(cls);
            corpus.docs.push_back(std::move(doc));
        }
    }
    return corpus;
}

std::vector<std::size_t> scan_families(const std::vector<std::string>& tokens,
                                       std::size_t families) {
    std::vector<std::size_t> found;
    for (std::size_t fam = 0; fam < families; ++fam) {
        bool hit = false;
        for (std::size_t tri = 0; tri < kTrigramsPerFamily && !hit; ++tri) {
            for (std::size_t pos = 0; pos + 2 < tokens.size(); ++pos) {
                if (tokens[pos] == planted_signal_token(fam, tri, 0) &&
                    tokens[pos + 1] == planted_signal_token(fam, tri, 1) &&
                    tokens[pos + 2] == planted_signal_token(fam, tri, 2)) {
                    hit = true;
                    break;
                }
            }
        }
        if (hit) found.push_back(fam);
    }
    return found;
}

std::size_t oracle_classify(const std::vector<std::string>& tokens,
                            const std::vector<std::vector<std::size_t>>& classes,
                            std::size_t families) {
    auto found = scan_families(tokens, families);
    for (std::size_t cls = 0; cls < classes.size(); ++cls) {
        auto sorted = classes[cls];
        std::sort(sorted.begin(), sorted.end());
        if (sorted == found) return cls;
    }
    return classes.size();
}

void write_planted_tsv(const PlantedCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_planted_tsv: cannot open " + path);
    for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
        out << corpus.labels[i] << '\t';
        for (std::size_t t = 0; t < corpus.docs[i].size(); ++t) {
            if (t) out << ' ';
            out << corpus.docs[i][t];
        }
        out << '\n';
    }
    if (!out) throw DataError("write_planted_tsv: write failed for " + path);
}

}  // namespace educe
