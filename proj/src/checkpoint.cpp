#include <cstring>
#include <fstream>

#include "educe/model.hpp"

namespace educe {

namespace {

constexpr char kMagic[8] = {'E', 'D', 'U', 'C', 'E', 'C', 'K', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_str(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
    const auto n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    write_str(out, ck.model_kind);
    write_u64(out, ck.task == TaskKind::Classification ? 0 : 1);
    write_u64(out, ck.sections.size());
    for (const auto& [name, tensor] : ck.sections) {
        write_str(out, name);
        write_u64(out, tensor.rank());
        for (auto e : tensor.shape) write_u64(out, e);
        static_assert(sizeof(double) == 8);
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * 8));
    }
    if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("load_checkpoint: " + path + " is not a checkpoint file");
    Checkpoint ck;
    ck.model_kind = read_str(in);
    ck.task = read_u64(in) == 0 ? TaskKind::Classification : TaskKind::Regression;
    const auto n = read_u64(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string name = read_str(in);
        const auto rank = read_u64(in);
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& e : shape) {
            e = read_u64(in);
            numel *= e;
        }
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(numel * 8));
        ck.sections.emplace_back(std::move(name), std::move(t));
    }
    if (!in) throw DataError("load_checkpoint: truncated file " + path);
    return ck;
}

Checkpoint to_checkpoint(const EduceParams& params, const std::string& model_kind) {
    Checkpoint ck;
    ck.model_kind = model_kind;
    ck.task = params.task;
    params.visit([&](const char* name, const Tensor& t) { ck.sections.emplace_back(name, t); });
    return ck;
}

Checkpoint to_checkpoint(const FulltextParams& params) {
    Checkpoint ck;
    ck.model_kind = "fulltext_baseline";
    ck.task = params.task;
    params.visit([&](const char* name, const Tensor& t) { ck.sections.emplace_back(name, t); });
    return ck;
}

namespace {

template <class Params>
void fill_from_sections(Params& params, const Checkpoint& ck) {
    std::size_t i = 0;
    params.visit([&](const char* name, Tensor& t) {
        if (i >= ck.sections.size() || ck.sections[i].first != name)
            throw DataError(std::string("checkpoint: missing or misordered section '") + name +
                            "'");
        t = ck.sections[i].second;
        ++i;
    });
    if (i != ck.sections.size()) throw DataError("checkpoint: extra sections present");
}

}  // namespace

EduceParams educe_from_checkpoint(const Checkpoint& ck) {
    if (ck.model_kind == "fulltext_baseline")
        throw DataError("checkpoint: holds a fulltext_baseline model");
    EduceParams p;
    p.task = ck.task;
    fill_from_sections(p, ck);
    return p;
}

FulltextParams fulltext_from_checkpoint(const Checkpoint& ck) {
    if (ck.model_kind != "fulltext_baseline")
        throw DataError("checkpoint: holds a " + ck.model_kind + " model");
    FulltextParams p;
    p.task = ck.task;
    fill_from_sections(p, ck);
    return p;
}

}  // namespace educe
