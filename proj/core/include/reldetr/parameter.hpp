#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "reldetr/tensor.hpp"

namespace reldetr::nk {

struct Parameter {
    std::string name;
    Tensor value;
};

/// Insertion-ordered collection of named, gradient-carrying tensors.
class ParameterSet {
public:
    /// Registers `value` (marked as requiring gradients) under a unique name.
    Tensor& add(const std::string& name, Tensor value);

    bool contains(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::vector<Parameter>& items() { return items_; }
    const std::vector<Parameter>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();

private:
    std::vector<Parameter> items_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace reldetr::nk
