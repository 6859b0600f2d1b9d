#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ingra/matrix.hpp"

namespace ingra {

// One named parameter tensor with its paired gradient buffer.
struct Tensor {
    std::string name;
    std::size_t id = 0; // index within the owning store
    Matrix value;
    Matrix grad; // always the same shape as value

    Index rows() const { return value.rows(); }
    Index cols() const { return value.cols(); }
    Index size() const { return value.size(); }
};

// Owns every trainable tensor of a model, in registration order. The order
// is the serialization order and the gradient-merge order, so it must be
// deterministic across runs.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Tensor& add(std::string name, Index rows, Index cols);

    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    Tensor& tensor(std::size_t id) { return *tensors_.at(id); }
    const Tensor& tensor(std::size_t id) const { return *tensors_.at(id); }

    std::size_t tensor_count() const { return tensors_.size(); }
    std::size_t parameter_count() const;

    void zero_grads();

    // p <- p - lr * grad(p) for every tensor, then zero the gradients.
    void sgd_step(double learning_rate);

    std::uint64_t step() const { return step_; }

private:
    std::vector<std::unique_ptr<Tensor>> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t step_ = 0;
};

// Gradient accumulator with one buffer per store tensor. Worker threads
// accumulate into private sinks which are merged in thread order, keeping
// batch reductions deterministic.
class GradSink {
public:
    explicit GradSink(const ParamStore& store);

    Matrix& of(const Tensor& t) { return grads_[t.id]; }
    const Matrix& of(const Tensor& t) const { return grads_[t.id]; }
    Matrix& at(std::size_t id) { return grads_[id]; }

    std::size_t size() const { return grads_.size(); }

    void zero();
    void add(const GradSink& other);

    // store.grad += scale * this
    void add_to_store(ParamStore& store, double scale) const;

private:
    std::vector<Matrix> grads_;
};

} // namespace ingra
