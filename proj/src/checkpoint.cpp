#include "promptmerge/checkpoint.hpp"

#include "promptmerge/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace pm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Stage stage) {
    switch (stage) {
    case Stage::LtR: return "ltr";
    case Stage::Lmpm: return "lmpm";
    case Stage::FineTune: return "finetune";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    if (s == "ltr") return Stage::LtR;
    if (s == "lmpm") return Stage::Lmpm;
    if (s == "finetune") return Stage::FineTune;
    throw ConfigError("unknown stage: " + s);
}

namespace {

constexpr int format_version = 1;

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
        return r;
    }
    return v;
}

json meta_to_json(const CheckpointMeta& m) {
    return {{"stage", to_string(m.stage)}, {"step", m.step},   {"plan_hash", m.plan_hash},
            {"rng_state", m.rng_state},    {"arm", to_string(m.arm)}, {"model", m.model},
            {"extra", m.extra}};
}

CheckpointMeta meta_from_json(const json& j) {
    CheckpointMeta m;
    m.stage = stage_from_string(j.at("stage").get<std::string>());
    j.at("step").get_to(m.step);
    j.at("plan_hash").get_to(m.plan_hash);
    j.at("rng_state").get_to(m.rng_state);
    m.arm = arm_from_string(j.at("arm").get<std::string>());
    j.at("model").get_to(m.model);
    m.extra = j.value("extra", json::object());
    return m;
}

} // namespace

Model Checkpoint::to_model() && {
    return Model(meta.model, std::move(tensors));
}

Checkpoint make_checkpoint(Model model, const CheckpointMeta& meta,
                           const std::map<std::string, std::string>& provenance) {
    Checkpoint c;
    c.meta = meta;
    c.meta.model = model.config();
    c.tensors = std::move(model).release_params();
    for (const auto& p : *c.tensors) {
        auto it = provenance.find(p->name);
        c.provenance[p->name] = it != provenance.end() ? it->second : to_string(meta.stage);
    }
    return c;
}

Checkpoint clone(const Checkpoint& ckpt) {
    Checkpoint c;
    c.meta = ckpt.meta;
    c.provenance = ckpt.provenance;
    c.tensors = std::make_unique<ParameterStore>();
    for (const auto& p : *ckpt.tensors) c.tensors->add(p->name, p->value, p->trainable);
    return c;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
    fs::create_directories(dir);
    json tensors = json::array();
    std::ofstream blob(dir / "tensors.bin", std::ios::binary);
    if (!blob) throw IoError("cannot write " + (dir / "tensors.bin").string());
    std::uint64_t offset = 0;
    for (const auto& p : *ckpt.tensors) {
        auto prov = ckpt.provenance.find(p->name);
        tensors.push_back({{"name", p->name},
                           {"shape", {p->value.rows(), p->value.cols()}},
                           {"dtype", "f64"},
                           {"offset", offset},
                           {"provenance", prov != ckpt.provenance.end() ? prov->second : to_string(ckpt.meta.stage)},
                           {"trainable", p->trainable}});
        for (Index i = 0; i < p->value.size(); ++i) {
            std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(p->value.data()[i]));
            blob.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        offset += static_cast<std::uint64_t>(p->value.size()) * sizeof(double);
    }
    if (!blob) throw IoError("short write to " + (dir / "tensors.bin").string());
    json manifest = {{"format", format_version}, {"metadata", meta_to_json(ckpt.meta)}, {"tensors", tensors}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(1) << '\n';
}

std::vector<TensorEntry> read_manifest(const fs::path& dir, CheckpointMeta* meta) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no checkpoint manifest in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", 0) != format_version) throw IoError("unsupported checkpoint format");
    if (meta) *meta = meta_from_json(manifest.at("metadata"));
    std::vector<TensorEntry> entries;
    for (const auto& t : manifest.at("tensors")) {
        if (t.at("dtype") != "f64") throw IoError("unsupported dtype in checkpoint");
        TensorEntry e;
        e.name = t.at("name").get<std::string>();
        e.rows = t.at("shape").at(0).get<Index>();
        e.cols = t.at("shape").at(1).get<Index>();
        e.offset = t.at("offset").get<std::uint64_t>();
        e.provenance = t.at("provenance").get<std::string>();
        e.trainable = t.value("trainable", true);
        entries.push_back(std::move(e));
    }
    return entries;
}

Checkpoint load_checkpoint(const fs::path& dir, const std::optional<std::set<std::string>>& names) {
    Checkpoint c;
    const auto entries = read_manifest(dir, &c.meta);
    c.tensors = std::make_unique<ParameterStore>();
    std::ifstream blob(dir / "tensors.bin", std::ios::binary);
    if (!blob) throw IoError("no tensor blob in " + dir.string());
    for (const auto& e : entries) {
        if (names && !names->count(e.name)) continue;
        Matrix m(e.rows, e.cols);
        blob.seekg(static_cast<std::streamoff>(e.offset));
        for (Index i = 0; i < m.size(); ++i) {
            std::uint64_t bits = 0;
            blob.read(reinterpret_cast<char*>(&bits), sizeof bits);
            m.data()[i] = std::bit_cast<double>(to_le(bits));
        }
        if (!blob) throw IoError("truncated tensor blob at " + e.name);
        c.tensors->add(e.name, std::move(m), e.trainable);
        c.provenance[e.name] = e.provenance;
    }
    if (names)
        for (const auto& n : *names)
            if (!c.tensors->contains(n)) throw IoError("tensor not in checkpoint: " + n);
    return c;
}

Checkpoint migrate_to_lmpm(const Checkpoint& ltr, const std::vector<int>& vilma_stages, std::uint64_t seed) {
    if (ltr.meta.stage != Stage::LtR)
        throw StageError("migration needs an ltr checkpoint, got " + to_string(ltr.meta.stage));
    ModelConfig cfg = ltr.meta.model;
    cfg.encoder.mode = MergeMode::Vilma;
    cfg.encoder.vilma_stages = vilma_stages;
    cfg.seed = seed;
    Model fresh(cfg);
    std::map<std::string, std::string> provenance;
    for (auto& p : fresh.params()) {
        if (const Parameter* old = ltr.tensors->find(p->name)) {
            if (old->value.rows() != p->value.rows() || old->value.cols() != p->value.cols())
                throw ShapeError("carried tensor changed shape: " + p->name);
            p->value = old->value;
            p->trainable = old->trainable;
            auto it = ltr.provenance.find(p->name);
            provenance[p->name] = it != ltr.provenance.end() ? it->second : to_string(Stage::LtR);
        } else {
            provenance[p->name] = to_string(Stage::Lmpm);
        }
    }
    CheckpointMeta meta = ltr.meta;
    meta.stage = Stage::Lmpm;
    meta.step = 0;
    meta.arm = Arm::Vilma;
    meta.extra["migrated_from"] = ltr.meta.plan_hash;
    return make_checkpoint(std::move(fresh), meta, provenance);
}

} // namespace pm
