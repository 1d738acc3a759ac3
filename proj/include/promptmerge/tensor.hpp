#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace pm {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// A named, trainable (or frozen) tensor. All tensors are 2-D: rows index
// tokens / input features, columns index channels / output features.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters with stable addresses, iterated in registration order.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) = default;
    ParameterStore& operator=(ParameterStore&&) = default;

    Parameter& add(const std::string& name, Matrix value, bool trainable = true);

    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.cbegin(); }
    auto end() const { return params_.cend(); }

    std::vector<Parameter*> trainable();
    std::vector<std::string> names() const;
    void zero_grad();

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, Parameter*> index_;
};

// Order-sensitive FNV-style digest of tensor bytes, used to assert that frozen
// parameters are never touched.
std::uint64_t checksum(const Matrix& m);
std::uint64_t checksum(const ParameterStore& store, bool frozen_only);

} // namespace pm
