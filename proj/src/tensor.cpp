#include "promptmerge/tensor.hpp"

#include "promptmerge/errors.hpp"

#include <cstring>

namespace pm {

Parameter& ParameterStore::add(const std::string& name, Matrix value, bool trainable) {
    if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(value);
    p->trainable = trainable;
    p->zero_grad();
    Parameter* raw = p.get();
    params_.push_back(std::move(p));
    index_[name] = raw;
    return *raw;
}

Parameter& ParameterStore::at(const std::string& name) {
    Parameter* p = find(name);
    if (!p) throw IndexError("unknown parameter: " + name);
    return *p;
}

const Parameter& ParameterStore::at(const std::string& name) const {
    const Parameter* p = find(name);
    if (!p) throw IndexError("unknown parameter: " + name);
    return *p;
}

Parameter* ParameterStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
}

std::vector<Parameter*> ParameterStore::trainable() {
    std::vector<Parameter*> out;
    for (auto& p : params_)
        if (p->trainable) out.push_back(p.get());
    return out;
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->name);
    return out;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

std::uint64_t checksum(const Matrix& m) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    h ^= static_cast<std::uint64_t>(m.rows()) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(m.cols());
    return h;
}

std::uint64_t checksum(const ParameterStore& store, bool frozen_only) {
    std::uint64_t h = 0;
    for (const auto& p : store) {
        if (frozen_only && p->trainable) continue;
        h = h * 31 + checksum(p->value);
    }
    return h;
}

} // namespace pm
