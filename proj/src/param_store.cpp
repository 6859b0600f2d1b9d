#include "ingra/param_store.hpp"

#include "ingra/error.hpp"

namespace ingra {

Tensor& ParamStore::add(std::string name, Index rows, Index cols) {
    if (name.empty()) throw ContractError("tensor name must not be empty");
    if (rows <= 0 || cols <= 0)
        throw ContractError("tensor '" + name + "' must have positive dimensions");
    if (index_.count(name))
        throw ContractError("tensor '" + name + "' registered twice");

    auto t = std::make_unique<Tensor>();
    t->name = std::move(name);
    t->id = tensors_.size();
    t->value = Matrix::Zero(rows, cols);
    t->grad = Matrix::Zero(rows, cols);
    index_.emplace(t->name, t->id);
    tensors_.push_back(std::move(t));
    return *tensors_.back();
}

Tensor& ParamStore::at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw ContractError("unknown tensor '" + std::string(name) + "'");
    return *tensors_[it->second];
}

const Tensor& ParamStore::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw ContractError("unknown tensor '" + std::string(name) + "'");
    return *tensors_[it->second];
}

bool ParamStore::contains(std::string_view name) const {
    return index_.count(std::string(name)) > 0;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t->value.size());
    return n;
}

void ParamStore::zero_grads() {
    for (auto& t : tensors_) t->grad.setZero();
}

void ParamStore::sgd_step(double learning_rate) {
    if (!(learning_rate > 0.0))
        throw ConfigError("learning rate must be positive");
    // validate everything before mutating anything, so a bad gradient
    // leaves the parameters at their last good values
    for (auto& t : tensors_) ensure_finite(t->grad, "gradient of " + t->name);
    for (auto& t : tensors_) {
        t->value.noalias() -= learning_rate * t->grad;
        t->grad.setZero();
    }
    ++step_;
}

GradSink::GradSink(const ParamStore& store) {
    grads_.reserve(store.tensor_count());
    for (std::size_t i = 0; i < store.tensor_count(); ++i) {
        const Tensor& t = store.tensor(i);
        grads_.emplace_back(Matrix::Zero(t.rows(), t.cols()));
    }
}

void GradSink::zero() {
    for (auto& g : grads_) g.setZero();
}

void GradSink::add(const GradSink& other) {
    if (other.grads_.size() != grads_.size())
        throw ContractError("gradient sinks built from different stores");
    for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

void GradSink::add_to_store(ParamStore& store, double scale) const {
    if (store.tensor_count() != grads_.size())
        throw ContractError("gradient sink does not match store");
    for (std::size_t i = 0; i < grads_.size(); ++i)
        store.tensor(i).grad.noalias() += scale * grads_[i];
}

} // namespace ingra
