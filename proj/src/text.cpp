#include "educe/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "educe/rng.hpp"

namespace educe {

std::string lowercase(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(lowercase(tok));
    return out;
}

Vocab build_vocab(const std::vector<std::string>& lines, std::size_t min_count) {
    if (lines.empty()) throw DataError("build_vocab: empty corpus");
    std::unordered_map<std::string, std::size_t> counts;
    std::vector<std::string> order;  // first-appearance order
    for (const auto& line : lines) {
        for (auto& tok : tokenize(line)) {
            auto [it, inserted] = counts.try_emplace(tok, 0);
            if (inserted) order.push_back(tok);
            ++it->second;
        }
    }
    Vocab v;
    v.id_to_token = {"<pad>", "<unk>"};
    v.token_to_id = {{"<pad>", Vocab::pad_id}, {"<unk>", Vocab::unk_id}};
    for (const auto& tok : order) {
        if (counts[tok] < min_count) continue;
        v.token_to_id.emplace(tok, v.id_to_token.size());
        v.id_to_token.push_back(tok);
    }
    return v;
}

Tensor EmbeddingTable::mean_of(const std::vector<std::size_t>& tokens, std::size_t start,
                               std::size_t stop) const {
    if (stop >= tokens.size() || start > stop)
        throw ShapeError("mean_of: span [" + std::to_string(start) + "," + std::to_string(stop) +
                         "] out of " + std::to_string(tokens.size()) + " tokens");
    Tensor out = Tensor::zeros({dim()});
    for (std::size_t k = start; k <= stop; ++k) {
        const std::size_t id = tokens[k];
        for (std::size_t j = 0; j < dim(); ++j) out.data[j] += weights.at(id, j);
    }
    const double inv = 1.0 / static_cast<double>(stop - start + 1);
    for (auto& v : out.data) v *= inv;
    return out;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab, std::size_t d,
                               std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw DataError("load_embeddings: cannot open " + path);

    // Seeded rows first so a token's fallback vector does not depend on
    // which other tokens the file happens to contain.
    EmbeddingTable table;
    table.weights = Tensor::zeros({vocab.size(), d});
    Rng rng(seed);
    for (std::size_t id = 0; id < vocab.size(); ++id)
        for (std::size_t j = 0; j < d; ++j) table.weights.at(id, j) = rng.uniform(-0.1, 0.1);

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string token;
        is >> token;
        std::vector<double> vals;
        vals.reserve(d);
        double x;
        while (is >> x) vals.push_back(x);
        if (vals.size() != d)
            throw DataError("load_embeddings: line " + std::to_string(line_no) + ": expected " +
                            std::to_string(d) + " values, got " + std::to_string(vals.size()));
        auto it = vocab.token_to_id.find(token);
        if (it == vocab.token_to_id.end()) continue;
        for (std::size_t j = 0; j < d; ++j) table.weights.at(it->second, j) = vals[j];
    }
    for (std::size_t j = 0; j < d; ++j) table.weights.at(Vocab::pad_id, j) = 0.0;
    return table;
}

EmbeddingTable random_embeddings(const Vocab& vocab, std::size_t d, std::uint64_t seed,
                                 double scale) {
    EmbeddingTable table;
    table.weights = Tensor::zeros({vocab.size(), d});
    Rng rng(seed);
    for (std::size_t id = 0; id < vocab.size(); ++id)
        for (std::size_t j = 0; j < d; ++j) table.weights.at(id, j) = rng.uniform(-scale, scale);
    for (std::size_t j = 0; j < d; ++j) table.weights.at(Vocab::pad_id, j) = 0.0;
    return table;
}

namespace {

std::vector<GoldSpan> parse_gold_spans(const std::string& field, std::size_t line_no) {
    std::vector<GoldSpan> spans;
    std::istringstream is(field);
    std::string item;
    while (std::getline(is, item, ';')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        const auto dash = item.find('-', colon == std::string::npos ? 0 : colon);
        if (colon == std::string::npos || dash == std::string::npos)
            throw DataError("load_dataset: line " + std::to_string(line_no) +
                            ": bad gold span item '" + item + "'");
        GoldSpan g;
        try {
            g.aspect = std::stoul(item.substr(0, colon));
            g.start = std::stoul(item.substr(colon + 1, dash - colon - 1));
            g.stop = std::stoul(item.substr(dash + 1));
        } catch (const std::exception&) {
            throw DataError("load_dataset: line " + std::to_string(line_no) +
                            ": bad gold span item '" + item + "'");
        }
        if (g.stop <= g.start)
            throw DataError("load_dataset: line " + std::to_string(line_no) +
                            ": empty gold span '" + item + "'");
        spans.push_back(g);
    }
    return spans;
}

}  // namespace

Dataset load_dataset(const std::string& path, TaskKind task, const Vocab& vocab,
                     std::size_t n_classes) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open " + path);

    Dataset ds;
    ds.task = task;
    std::string line;
    std::size_t line_no = 0;
    std::size_t max_label = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t at = 0;
        while (true) {
            const auto tab = line.find('\t', at);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(at));
                break;
            }
            fields.push_back(line.substr(at, tab - at));
            at = tab + 1;
        }
        if (fields.size() < 2)
            throw DataError("load_dataset: line " + std::to_string(line_no) + ": no tab separator");
        const std::string& head = fields[0];
        const std::string& text = fields[1];

        Document doc;
        if (task == TaskKind::Classification) {
            try {
                std::size_t pos = 0;
                const long v = std::stol(head, &pos);
                if (pos != head.size() || v < 0) throw std::invalid_argument(head);
                doc.label = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                throw DataError("load_dataset: line " + std::to_string(line_no) + ": bad label '" +
                                head + "'");
            }
            if (n_classes > 0 && doc.label >= n_classes)
                throw DataError("load_dataset: line " + std::to_string(line_no) + ": label " +
                                std::to_string(doc.label) + " outside [0," +
                                std::to_string(n_classes) + ")");
            max_label = std::max(max_label, doc.label);
        } else {
            std::istringstream hs(head);
            std::string cell;
            while (std::getline(hs, cell, ',')) {
                try {
                    std::size_t pos = 0;
                    const double t = std::stod(cell, &pos);
                    if (pos != cell.size()) throw std::invalid_argument(cell);
                    if (t < 0.0 || t > 1.0)
                        throw DataError("load_dataset: line " + std::to_string(line_no) +
                                        ": target " + cell + " outside [0,1]");
                    doc.targets.push_back(t);
                } catch (const DataError&) {
                    throw;
                } catch (const std::exception&) {
                    throw DataError("load_dataset: line " + std::to_string(line_no) +
                                    ": bad target '" + cell + "'");
                }
            }
            if (doc.targets.empty())
                throw DataError("load_dataset: line " + std::to_string(line_no) + ": no targets");
            if (ds.n_targets == 0)
                ds.n_targets = doc.targets.size();
            else if (doc.targets.size() != ds.n_targets)
                throw DataError("load_dataset: line " + std::to_string(line_no) + ": expected " +
                                std::to_string(ds.n_targets) + " targets, got " +
                                std::to_string(doc.targets.size()));
        }

        for (const auto& tok : tokenize(text)) doc.tokens.push_back(vocab.lookup(tok));
        doc.length = doc.tokens.size();
        if (doc.length == 0)
            throw DataError("load_dataset: line " + std::to_string(line_no) + ": empty text");
        while (doc.tokens.size() < 4) doc.tokens.push_back(Vocab::pad_id);

        if (fields.size() >= 3 && !fields[2].empty()) {
            doc.gold_spans = parse_gold_spans(fields[2], line_no);
            for (const auto& g : doc.gold_spans)
                if (g.stop > doc.length)
                    throw DataError("load_dataset: line " + std::to_string(line_no) +
                                    ": gold span past end of text");
        }
        if (fields.size() >= 4 && !fields[3].empty()) {
            std::istringstream ws(fields[3]);
            std::string cell;
            while (ws >> cell) {
                try {
                    doc.word_labels.push_back(std::stoul(cell));
                } catch (const std::exception&) {
                    throw DataError("load_dataset: line " + std::to_string(line_no) +
                                    ": bad word label '" + cell + "'");
                }
            }
            if (doc.word_labels.size() != doc.length)
                throw DataError("load_dataset: line " + std::to_string(line_no) + ": " +
                                std::to_string(doc.word_labels.size()) + " word labels for " +
                                std::to_string(doc.length) + " tokens");
        }
        ds.docs.push_back(std::move(doc));
    }
    if (ds.docs.empty()) throw DataError("load_dataset: no documents in " + path);
    if (task == TaskKind::Classification) ds.n_classes = n_classes > 0 ? n_classes : max_label + 1;
    return ds;
}

std::vector<std::vector<std::size_t>> stratified_index_split(
    const std::vector<std::size_t>& labels, std::size_t n_classes,
    const std::vector<double>& fractions, std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (f <= 0.0) throw StratifyError("stratified_split: non-positive fraction");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw StratifyError("stratified_split: fractions sum to " + std::to_string(total));

    const std::size_t parts = fractions.size();
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes)
            throw StratifyError("stratified_split: label " + std::to_string(labels[i]) +
                                " outside [0," + std::to_string(n_classes) + ")");
        by_class[labels[i]].push_back(i);
    }

    std::vector<std::vector<std::size_t>> out(parts);
    Rng rng(seed);
    for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
        auto& idx = by_class[cls];
        if (idx.empty()) continue;
        if (idx.size() < parts)
            throw StratifyError("stratified_split: class " + std::to_string(cls) + " has " +
                                std::to_string(idx.size()) + " items for " + std::to_string(parts) +
                                " parts");
        rng.shuffle(idx);
        // largest-remainder apportionment keeps every part within 1 of exact share
        const auto n = idx.size();
        std::vector<std::size_t> quota(parts);
        std::vector<std::pair<double, std::size_t>> rem(parts);
        std::size_t assigned = 0;
        for (std::size_t p = 0; p < parts; ++p) {
            const double share = static_cast<double>(n) * fractions[p];
            quota[p] = static_cast<std::size_t>(std::floor(share));
            rem[p] = {share - std::floor(share), p};
            assigned += quota[p];
        }
        std::stable_sort(rem.begin(), rem.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t k = 0; assigned < n; ++k, ++assigned) quota[rem[k % parts].second] += 1;

        std::size_t cursor = 0;
        for (std::size_t p = 0; p < parts; ++p)
            for (std::size_t k = 0; k < quota[p]; ++k) out[p].push_back(idx[cursor++]);
    }
    return out;
}

std::vector<Dataset> stratified_split(const Dataset& ds, const std::vector<double>& fractions,
                                      std::uint64_t seed) {
    if (ds.task != TaskKind::Classification)
        throw StratifyError("stratified_split: classification datasets only");
    std::vector<std::size_t> labels(ds.docs.size());
    for (std::size_t i = 0; i < ds.docs.size(); ++i) labels[i] = ds.docs[i].label;
    const auto parts = stratified_index_split(labels, ds.n_classes, fractions, seed);

    std::vector<Dataset> out(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) {
        out[p].task = ds.task;
        out[p].n_classes = ds.n_classes;
        out[p].n_targets = ds.n_targets;
        for (auto i : parts[p]) out[p].docs.push_back(ds.docs[i]);
    }
    return out;
}

std::vector<std::string> detokenize(const Document& doc, const Vocab& vocab) {
    std::vector<std::string> out;
    out.reserve(doc.length);
    for (std::size_t k = 0; k < doc.length; ++k) out.push_back(vocab.token(doc.tokens[k]));
    return out;
}

}  // namespace educe
