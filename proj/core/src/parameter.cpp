#include "reldetr/parameter.hpp"

#include "reldetr/errors.hpp"

namespace reldetr::nk {

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw InputError("duplicate parameter name '" + name + "'");
    std::vector<double> data(value.values().begin(), value.values().end());
    index_[name] = items_.size();
    items_.push_back({name, Tensor(value.shape(), std::move(data), true)});
    return items_.back().value;
}

bool ParameterSet::contains(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParameterSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("unknown parameter '" + name + "'");
    return items_[it->second].value;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("unknown parameter '" + name + "'");
    return items_[it->second].value;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.numel();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : items_) p.value.zero_grad();
}

}  // namespace reldetr::nk
